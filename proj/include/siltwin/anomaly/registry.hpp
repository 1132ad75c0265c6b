#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siltwin/anomaly/evidence.hpp"

namespace siltwin::anomaly {

SILTWIN_DEFINE_ERROR(BadRegistryFile);

// kind selects the algorithm; the registry key is only the detector's name,
// so a recalibrated or renamed detector can reuse an existing algorithm.
struct DetectorConfig {
    std::string kind;
    std::vector<std::string> features;
    std::map<std::string, double> parameters;
    double threshold = 1.0;
};

struct DetectorRegistry {
    std::map<std::string, DetectorConfig> detectors;
};

inline const std::vector<std::string>& detector_kinds() {
    static const std::vector<std::string> kinds = {"spec_mismatch", "kde_kl", "mean_shift",
                                                   "count_reconcile"};
    return kinds;
}

// Change-point threshold calibrated so that clean fleets stay under a 5%
// per-item false-positive rate while a three-sigma step is still detected.
inline constexpr double kKdeKlThreshold = 2.0;
inline constexpr double kKdeKlWindow = 20;
inline constexpr double kKdeKlBandwidth = 0.5;  // in standardized units
inline constexpr double kToleranceSigma = 2.2;  // spec tolerance, in sigma
inline constexpr double kMeanShiftBandwidth = 0.1;

inline DetectorRegistry default_registry() {
    const std::vector<std::string> reals = {
        "pattern_density", "shot_time",      "opc_filesize",
        "opc_runtime",     "oxide_thickness", "doping_density",
        "gate_dimension",  "etch_depth",     "etch_rate",
        "lead_dimension",  "ball_composition_score", "early_failure_rate"};
    std::vector<std::string> spec_features = reals;
    spec_features.push_back("marking_valid");
    spec_features.push_back("jtag_leak");

    DetectorRegistry reg;
    reg.detectors["spec_mismatch"] = {
        "spec_mismatch", spec_features, {{"tolerance_sigma", kToleranceSigma}}, 1.0};
    reg.detectors["kde_kl"] = {"kde_kl",
                               reals,
                               {{"window", kKdeKlWindow}, {"bandwidth", kKdeKlBandwidth}},
                               kKdeKlThreshold};
    reg.detectors["mean_shift"] = {
        "mean_shift", {"branching_points"}, {{"bandwidth", kMeanShiftBandwidth}}, 1.0};
    reg.detectors["count_reconcile"] = {
        "count_reconcile",
        {"shipped_parts_count", "good_parts_count", "bin_counts", "audit_trail"},
        {},
        1.0};
    return reg;
}

inline nlohmann::json registry_to_json(const DetectorRegistry& reg) {
    nlohmann::json detectors = nlohmann::json::object();
    for (const auto& [name, cfg] : reg.detectors) {
        detectors[name] = {{"kind", cfg.kind},
                           {"features", cfg.features},
                           {"parameters", cfg.parameters},
                           {"threshold", cfg.threshold}};
    }
    return {{"format_version", 1}, {"detectors", detectors}};
}

inline DetectorRegistry registry_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != 1)
            throw BadRegistryFile("unsupported registry format version");
        DetectorRegistry reg;
        const auto& detectors = j.at("detectors");
        for (auto it = detectors.begin(); it != detectors.end(); ++it) {
            DetectorConfig cfg;
            cfg.kind = it.value().at("kind").get<std::string>();
            cfg.features = it.value().at("features").get<std::vector<std::string>>();
            if (it.value().contains("parameters"))
                cfg.parameters =
                    it.value().at("parameters").get<std::map<std::string, double>>();
            cfg.threshold = it.value().at("threshold").get<double>();
            bool known = false;
            for (const std::string& kind : detector_kinds()) known |= (kind == cfg.kind);
            if (!known) throw BadRegistryFile("unknown detector kind '" + cfg.kind + "'");
            reg.detectors[it.key()] = cfg;
        }
        return reg;
    } catch (const nlohmann::json::exception& e) {
        throw BadRegistryFile(std::string("malformed detector registry: ") + e.what());
    }
}

inline std::string save_registry(const DetectorRegistry& reg) {
    return registry_to_json(reg).dump(2) + "\n";
}

inline DetectorRegistry load_registry(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw BadRegistryFile("detector registry is not valid JSON");
    return registry_from_json(j);
}

}  // namespace siltwin::anomaly
