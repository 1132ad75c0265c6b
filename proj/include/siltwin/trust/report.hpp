#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siltwin/anomaly/evidence.hpp"
#include "siltwin/sim/lifecycle.hpp"
#include "siltwin/trust/threat_model.hpp"

namespace siltwin::trust {

struct RankedCause {
    std::string cause;
    double posterior = 0.0;
};

struct RootCauseReport {
    std::string observation;
    std::vector<RankedCause> ranked_causes;  // descending posterior
    sim::StageId implicated_stage = sim::StageId::spec;
    double stage_posterior = 0.0;
    std::string implicated_actor = "none";
    std::string engine;  // "bn" | "hmm" | "mln"
    anomaly::EvidenceVector evidence;
    std::string confidence_note;
    // True when the ranked causes are mutually exclusive alternatives, so
    // their posteriors form a (sub-)distribution. Per-cause marginals from
    // the bn and mln engines are not exclusive and are flagged false.
    bool exclusive = false;
};

inline nlohmann::json report_to_json(const RootCauseReport& r) {
    nlohmann::json causes = nlohmann::json::array();
    for (const RankedCause& rc : r.ranked_causes)
        causes.push_back({{"cause", rc.cause}, {"posterior", rc.posterior}});
    return {{"schema_version", 1},
            {"observation", r.observation},
            {"engine", r.engine},
            {"ranked_causes", causes},
            {"implicated_stage", sim::stage_name(r.implicated_stage)},
            {"stage_posterior", r.stage_posterior},
            {"implicated_actor", r.implicated_actor},
            {"exclusive", r.exclusive},
            {"confidence_note", r.confidence_note},
            {"evidence", anomaly::evidence_to_json(r.evidence)}};
}

inline RootCauseReport report_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw BadModelFile("unsupported report schema version");
        RootCauseReport r;
        r.observation = j.at("observation").get<std::string>();
        r.engine = j.at("engine").get<std::string>();
        for (const auto& rc : j.at("ranked_causes"))
            r.ranked_causes.push_back(
                {rc.at("cause").get<std::string>(), rc.at("posterior").get<double>()});
        r.implicated_stage = sim::stage_from_name(j.at("implicated_stage").get<std::string>());
        r.stage_posterior = j.at("stage_posterior").get<double>();
        r.implicated_actor = j.at("implicated_actor").get<std::string>();
        r.exclusive = j.at("exclusive").get<bool>();
        r.confidence_note = j.at("confidence_note").get<std::string>();
        r.evidence = anomaly::evidence_from_json(j.at("evidence"));
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw BadModelFile(std::string("malformed report: ") + e.what());
    }
}

inline std::string save_report(const RootCauseReport& r) {
    return report_to_json(r).dump(2) + "\n";
}

}  // namespace siltwin::trust
