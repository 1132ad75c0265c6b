#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "siltwin/anomaly/detectors.hpp"
#include "siltwin/anomaly/evidence.hpp"
#include "siltwin/anomaly/registry.hpp"
#include "siltwin/common/fileio.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::anomaly {

using Relationships = std::map<std::string, std::vector<std::string>>;

// Which data items bear on each attack: process shifts for trojans, wear
// and package items for counterfeits, count records for shipping fraud.
inline const Relationships& default_relationships() {
    static const Relationships rel = {
        {"parametric-trojan",
         {"doping_density", "etch_depth", "oxide_thickness", "gate_dimension",
          "early_failure_rate"}},
        {"functional-trojan",
         {"pattern_density", "shot_time", "opc_filesize", "opc_runtime", "etch_rate"}},
        {"info-leak-trojan", {"branching_points", "jtag_leak"}},
        {"unintentional-leak", {"jtag_leak"}},
        {"recycled", {"lead_dimension", "ball_composition_score", "early_failure_rate"}},
        {"remarked", {"marking_valid"}},
        {"defective-shipped", {"shipped_parts_count", "bin_counts", "audit_trail"}},
        {"overproduced", {"good_parts_count"}},
    };
    return rel;
}

inline bool is_count_feature(const std::string& name) {
    return name == "shipped_parts_count" || name == "good_parts_count" ||
           name == "bin_counts" || name == "audit_trail";
}

// Count features live with the wafer-sort test records.
inline sim::StageId count_feature_stage(const std::string&) {
    return sim::StageId::wafer_sort;
}

inline DetectorRegistry register_detector(DetectorRegistry registry, const std::string& name,
                                          const DetectorConfig& config,
                                          const sim::ProcessParams& params) {
    bool known = false;
    for (const std::string& kind : detector_kinds()) known |= (kind == config.kind);
    if (!known) throw BadRegistryFile("unknown detector kind '" + config.kind + "'");
    std::set<std::string> catalog_names;
    for (const sim::ItemSpec& s : sim::catalog(params)) catalog_names.insert(s.name);
    for (const std::string& f : config.features)
        if (!catalog_names.count(f) && !is_count_feature(f))
            throw UnknownFeature("detector '" + name + "' names unknown feature '" + f + "'");
    registry.detectors[name] = config;
    return registry;
}

inline DetectorRegistry register_detector(DetectorRegistry registry, const std::string& name,
                                          const DetectorConfig& config) {
    return register_detector(std::move(registry), name, config, sim::default_params());
}

namespace detail {

inline std::set<std::string> related_features(const std::vector<std::string>& causes,
                                              const Relationships& relationships) {
    std::set<std::string> features;
    for (const std::string& cause : causes) {
        auto it = relationships.find(cause);
        if (it == relationships.end())
            throw UncoveredFeature("no feature relationships registered for cause '" + cause +
                                   "'");
        features.insert(it->second.begin(), it->second.end());
    }
    return features;
}

// Detector configs covering one feature, in registry (name) order.
inline std::vector<std::pair<std::string, const DetectorConfig*>> covering_detectors(
    const DetectorRegistry& registry, const std::string& feature) {
    std::vector<std::pair<std::string, const DetectorConfig*>> out;
    for (const auto& [name, cfg] : registry.detectors)
        if (std::find(cfg.features.begin(), cfg.features.end(), feature) != cfg.features.end())
            out.emplace_back(name, &cfg);
    return out;
}

inline double parameter(const DetectorConfig& cfg, const std::string& key, double fallback) {
    auto it = cfg.parameters.find(key);
    return it == cfg.parameters.end() ? fallback : it->second;
}

inline const sim::ItemSpec& catalog_spec(const std::map<std::string, sim::ItemSpec>& specs,
                                         const std::string& feature) {
    auto it = specs.find(feature);
    if (it == specs.end())
        throw UnknownFeature("feature '" + feature + "' is not in the data-item catalog");
    return it->second;
}

inline FeatureSpec feature_spec_for(const sim::ItemSpec& spec, double tolerance_sigma) {
    FeatureSpec fs;
    if (spec.kind == sim::ItemKind::real_value) {
        if (!(spec.nominal.sigma > 0.0))
            throw DegenerateInput("feature '" + spec.name +
                                  "' has zero spread; spec tolerance undefined");
        fs.nominal = spec.nominal.mean;
        fs.tolerance = tolerance_sigma * spec.nominal.sigma;
    } else {
        fs.flag_nominal = sim::nominal_flag(spec.name);
    }
    return fs;
}

// Count checks scoped to one lot (bins are recorded fleet-wide and stay
// global).
inline EvidenceItem lot_count_item(const sim::Fleet& fleet, const std::string& lot_id,
                                   const std::string& feature, const std::string& detector) {
    EvidenceItem ev{feature, count_feature_stage(feature), false, 0.0, detector};
    const sim::TestRecordSet& records = fleet.tests;
    auto lot_it = records.master_results.find(lot_id);
    if (lot_it == records.master_results.end())
        throw DegenerateInput("no master record for lot '" + lot_id + "'");
    const sim::LotResult& lot = lot_it->second;

    if (feature == "shipped_parts_count") {
        if (lot.shipped > lot.good) ev.score = static_cast<double>(lot.shipped - lot.good);
    } else if (feature == "good_parts_count") {
        std::int64_t wafer_sum = 0;
        bool has_wafers = false;
        for (const auto& [wafer, good] : records.wafer_results)
            if (wafer.rfind(lot_id + "-", 0) == 0) {
                wafer_sum += good;
                has_wafers = true;
            }
        if (has_wafers) ev.score = static_cast<double>(std::llabs(wafer_sum - lot.good));
    } else if (feature == "bin_counts") {
        std::int64_t tested_total = 0;
        for (const auto& [l, r] : records.master_results) tested_total += r.tested;
        std::int64_t bin_total = 0;
        for (const auto& [bin, count] : records.hardware_bins) bin_total += count;
        if (!records.hardware_bins.empty())
            ev.score = static_cast<double>(std::llabs(bin_total - tested_total));
    } else if (feature == "audit_trail") {
        std::int64_t edits = 0;
        for (const sim::AuditEntry& entry : records.audit_trail) {
            if (entry.field.find("count") == std::string::npos) continue;
            auto colon = entry.field.find(':');
            if (colon == std::string::npos || entry.field.substr(colon + 1) == lot_id)
                ++edits;
        }
        ev.score = static_cast<double>(edits);
    }
    ev.anomalous = ev.score >= 1.0;
    return ev;
}

}  // namespace detail

// Evidence for one device, judged against the catalog nominals and its
// lot's count records. Only detectors whose features relate to the
// candidate causes run; each executed (feature, detector) pair yields one
// item. Change-point detection is a population detector and runs in the
// fleet-level overload instead.
inline EvidenceVector extract_evidence(const sim::Fleet& fleet, const std::string& device_id,
                                       const DetectorRegistry& registry,
                                       const std::vector<std::string>& causes,
                                       const sim::ProcessParams& params,
                                       const Relationships& relationships) {
    const sim::DeviceRecord* device = nullptr;
    for (const sim::DeviceRecord& rec : fleet.devices)
        if (rec.device_id == device_id) device = &rec;
    if (device == nullptr)
        throw DegenerateInput("device '" + device_id + "' is not in the fleet");

    std::map<std::string, sim::ItemSpec> specs;
    for (const sim::ItemSpec& s : sim::catalog(params)) specs[s.name] = s;

    EvidenceVector ev;
    ev.subject = device_id;
    for (const std::string& feature : detail::related_features(causes, relationships)) {
        auto detectors = detail::covering_detectors(registry, feature);
        if (detectors.empty())
            throw UncoveredFeature("no registered detector covers feature '" + feature + "'");
        for (const auto& [name, cfg] : detectors) {
            if (cfg->kind == "spec_mismatch") {
                const sim::DataItem* item = sim::find_item(*device, feature);
                if (item == nullptr) continue;  // recorded before the item was cataloged
                double tol = detail::parameter(*cfg, "tolerance_sigma", kToleranceSigma);
                EvidenceItem e =
                    spec_mismatch(*item, detail::feature_spec_for(
                                             detail::catalog_spec(specs, feature), tol));
                e.detector = name;
                ev.items.push_back(e);
            } else if (cfg->kind == "mean_shift") {
                const sim::DataItem* item = sim::find_item(*device, feature);
                if (item == nullptr) continue;
                MeanShiftResult ms =
                    meanshift_outlier(item->points, detail::parameter(*cfg, "bandwidth",
                                                                      kMeanShiftBandwidth));
                ev.items.push_back(
                    {feature, item->stage, ms.minority_flag, ms.minority_score, name});
            } else if (cfg->kind == "count_reconcile") {
                ev.items.push_back(
                    detail::lot_count_item(fleet, device->lot_id, feature, name));
            }
            // kde_kl: population detector, not executed per device.
        }
    }
    std::sort(ev.items.begin(), ev.items.end(), evidence_order);
    return ev;
}

inline EvidenceVector extract_evidence(const sim::Fleet& fleet, const std::string& device_id,
                                       const DetectorRegistry& registry,
                                       const std::vector<std::string>& causes) {
    return extract_evidence(fleet, device_id, registry, causes, sim::default_params(),
                            default_relationships());
}

// Fleet-level evidence: change-point detection over each feature's
// device-ordered series, a standardized mean test against the nominal,
// point-set and boolean checks aggregated across devices, and the full
// count reconciliation.
inline EvidenceVector extract_evidence(const sim::Fleet& fleet,
                                       const DetectorRegistry& registry,
                                       const std::vector<std::string>& causes,
                                       const sim::ProcessParams& params,
                                       const Relationships& relationships) {
    if (fleet.devices.empty()) throw DegenerateInput("fleet has no devices");

    std::map<std::string, sim::ItemSpec> specs;
    for (const sim::ItemSpec& s : sim::catalog(params)) specs[s.name] = s;

    std::string id_blob;
    for (const sim::DeviceRecord& rec : fleet.devices) id_blob += rec.device_id;

    EvidenceVector ev;
    ev.subject = "fleet-" + fnv1a_hex(id_blob);

    auto real_series = [&](const std::string& feature, double nominal, double sigma) {
        std::vector<double> series;
        series.reserve(fleet.devices.size());
        double denom = sigma > 0.0 ? sigma : 1.0;
        for (const sim::DeviceRecord& rec : fleet.devices) {
            const sim::DataItem* item = sim::find_item(rec, feature);
            if (item == nullptr) continue;  // recorded before the item was cataloged
            series.push_back((item->real - nominal) / denom);
        }
        return series;
    };

    std::vector<EvidenceItem> count_items = reconcile_counts(fleet.tests);

    for (const std::string& feature : detail::related_features(causes, relationships)) {
        auto detectors = detail::covering_detectors(registry, feature);
        if (detectors.empty())
            throw UncoveredFeature("no registered detector covers feature '" + feature + "'");
        for (const auto& [name, cfg] : detectors) {
            if (cfg->kind == "spec_mismatch") {
                const sim::ItemSpec& spec = detail::catalog_spec(specs, feature);
                if (spec.kind == sim::ItemKind::real_value) {
                    double tol = detail::parameter(*cfg, "tolerance_sigma", kToleranceSigma);
                    FeatureSpec fs = detail::feature_spec_for(spec, tol);
                    std::vector<double> series =
                        real_series(feature, fs.nominal, spec.nominal.sigma);
                    if (series.empty()) continue;
                    double mean = 0.0;
                    for (double x : series) mean += x;
                    mean /= static_cast<double>(series.size());
                    // Mean test: the fleet average should sit within
                    // tolerance_sigma standard errors of the nominal.
                    double z =
                        std::fabs(mean) * std::sqrt(static_cast<double>(series.size()));
                    EvidenceItem e{feature, spec.stage, z > tol, z / tol, name};
                    ev.items.push_back(e);
                } else {
                    std::int64_t mismatches = 0;
                    bool flag_nominal = sim::nominal_flag(feature);
                    for (const sim::DeviceRecord& rec : fleet.devices) {
                        const sim::DataItem* item = sim::find_item(rec, feature);
                        if (item == nullptr) continue;
                        if (item->flag != flag_nominal) ++mismatches;
                    }
                    ev.items.push_back({feature, spec.stage, mismatches > 0,
                                        static_cast<double>(mismatches), name});
                }
            } else if (cfg->kind == "kde_kl") {
                const sim::ItemSpec& spec = detail::catalog_spec(specs, feature);
                std::size_t window =
                    static_cast<std::size_t>(detail::parameter(*cfg, "window", kKdeKlWindow));
                std::vector<double> series =
                    real_series(feature, spec.nominal.mean, spec.nominal.sigma);
                if (series.size() < 2 * window) continue;  // not executable
                std::vector<ChangePoint> cps = kde_kl_changepoint(
                    series, window, detail::parameter(*cfg, "bandwidth", kKdeKlBandwidth),
                    cfg->threshold);
                double score = 0.0;
                for (const ChangePoint& cp : cps) score = std::max(score, cp.score);
                ev.items.push_back({feature, spec.stage, !cps.empty(), score, name});
            } else if (cfg->kind == "mean_shift") {
                const sim::ItemSpec& spec = detail::catalog_spec(specs, feature);
                double bandwidth = detail::parameter(*cfg, "bandwidth", kMeanShiftBandwidth);
                bool any_flag = false;
                double score = 0.0;
                for (const sim::DeviceRecord& rec : fleet.devices) {
                    const sim::DataItem* item = sim::find_item(rec, feature);
                    if (item == nullptr) continue;
                    MeanShiftResult ms = meanshift_outlier(item->points, bandwidth);
                    any_flag |= ms.minority_flag;
                    score = std::max(score, ms.minority_score);
                }
                ev.items.push_back({feature, spec.stage, any_flag, score, name});
            } else if (cfg->kind == "count_reconcile") {
                EvidenceItem e{feature, count_feature_stage(feature), false, 0.0, name};
                for (const EvidenceItem& c : count_items)
                    if (c.feature == feature) {
                        e.anomalous = c.anomalous;
                        e.score = c.score;
                    }
                ev.items.push_back(e);
            }
        }
    }
    std::sort(ev.items.begin(), ev.items.end(), evidence_order);
    return ev;
}

inline EvidenceVector extract_evidence(const sim::Fleet& fleet,
                                       const DetectorRegistry& registry,
                                       const std::vector<std::string>& causes) {
    return extract_evidence(fleet, registry, causes, sim::default_params(),
                            default_relationships());
}

}  // namespace siltwin::anomaly
