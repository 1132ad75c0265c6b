#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siltwin/common/error.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::anomaly {

SILTWIN_DEFINE_ERROR(SeriesTooShort);
SILTWIN_DEFINE_ERROR(DegenerateInput);
SILTWIN_DEFINE_ERROR(UnknownFeature);
SILTWIN_DEFINE_ERROR(UncoveredFeature);

// One detector verdict for one feature. score 0 means the detector saw no
// signal at all; anomalous implies score >= the detector's threshold.
struct EvidenceItem {
    std::string feature;
    sim::StageId stage = sim::StageId::spec;
    bool anomalous = false;
    double score = 0.0;
    std::string detector;
};

inline bool operator==(const EvidenceItem& a, const EvidenceItem& b) {
    return a.feature == b.feature && a.stage == b.stage && a.anomalous == b.anomalous &&
           a.score == b.score && a.detector == b.detector;
}

// Items are kept sorted by (feature, stage, detector); at most one item per
// such key.
struct EvidenceVector {
    std::string subject;
    std::vector<EvidenceItem> items;
};

inline bool evidence_order(const EvidenceItem& a, const EvidenceItem& b) {
    if (a.feature != b.feature) return a.feature < b.feature;
    if (a.stage != b.stage) return static_cast<int>(a.stage) < static_cast<int>(b.stage);
    return a.detector < b.detector;
}

inline nlohmann::json evidence_item_to_json(const EvidenceItem& item) {
    return {{"feature", item.feature},
            {"stage", sim::stage_name(item.stage)},
            {"anomalous", item.anomalous},
            {"score", item.score},
            {"detector", item.detector}};
}

inline nlohmann::json evidence_to_json(const EvidenceVector& ev) {
    nlohmann::json items = nlohmann::json::array();
    for (const EvidenceItem& item : ev.items) items.push_back(evidence_item_to_json(item));
    return {{"subject", ev.subject}, {"items", items}};
}

inline EvidenceVector evidence_from_json(const nlohmann::json& j) {
    try {
        EvidenceVector ev;
        ev.subject = j.at("subject").get<std::string>();
        for (const auto& e : j.at("items")) {
            EvidenceItem item;
            item.feature = e.at("feature").get<std::string>();
            item.stage = sim::stage_from_name(e.at("stage").get<std::string>());
            item.anomalous = e.at("anomalous").get<bool>();
            item.score = e.at("score").get<double>();
            item.detector = e.at("detector").get<std::string>();
            ev.items.push_back(item);
        }
        return ev;
    } catch (const nlohmann::json::exception& e) {
        throw DegenerateInput(std::string("malformed evidence vector: ") + e.what());
    }
}

}  // namespace siltwin::anomaly
