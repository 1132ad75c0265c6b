#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "siltwin/common/fileio.hpp"
#include "siltwin/common/rng.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::sim {

inline constexpr int kDevicesPerWafer = 25;
inline constexpr int kDevicesPerLot = 100;
inline constexpr double kNominalLifetimeHours = 87600.0;

struct FleetConfig {
    int size = 100;
    std::uint64_t seed = 1;
    double pass_rate = 0.9;
    ProcessParams params = default_params();
};

namespace detail {

inline std::string zero_pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

inline std::string lot_id_for(int device_index) {
    return "L" + detail::zero_pad(device_index / kDevicesPerLot + 1, 3);
}

inline std::string wafer_id_for(int device_index) {
    int wafer = (device_index % kDevicesPerLot) / kDevicesPerWafer + 1;
    return lot_id_for(device_index) + "-W" + std::to_string(wafer);
}

inline std::string device_id_for(int device_index) {
    int dev = device_index % kDevicesPerWafer + 1;
    return wafer_id_for(device_index) + "-D" + detail::zero_pad(dev, 2);
}

// Clean baseline fleet: every numeric item is an independent Gaussian
// around its nominal, except shot_time, which tracks the device's own
// sampled pattern density through the shot-time relation plus measurement
// noise. Each device draws from its own derived seed, so parallel and
// serial generation agree.
inline Fleet generate_fleet(const FleetConfig& cfg) {
    if (cfg.size < 1) throw BadConfig("fleet size must be at least 1");
    if (cfg.pass_rate < 0.0 || cfg.pass_rate > 1.0)
        throw BadConfig("pass_rate must lie in [0, 1]");
    validate_params(cfg.params);
    const std::vector<ItemSpec> specs = catalog(cfg.params);

    Fleet fleet;
    fleet.devices.reserve(static_cast<std::size_t>(cfg.size));
    for (int i = 0; i < cfg.size; ++i) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        DeviceRecord rec;
        rec.device_id = device_id_for(i);
        rec.wafer_id = wafer_id_for(i);
        rec.lot_id = lot_id_for(i);

        double device_alpha = cfg.params.alpha;
        for (const ItemSpec& s : specs) {
            DataItem item;
            item.name = s.name;
            item.stage = s.stage;
            item.kind = s.kind;
            item.units = s.units;
            if (s.kind == ItemKind::point_set) {
                for (int k = 0; k < cfg.params.branch_count; ++k) {
                    double x = 0.5 + cfg.params.branch_spread * rng.normal();
                    double y = 0.5 + cfg.params.branch_spread * rng.normal();
                    item.points.push_back({detail::clamp01(x), detail::clamp01(y)});
                }
            } else if (s.kind == ItemKind::boolean_value) {
                item.flag = nominal_flag(s.name);
            } else if (s.name == "shot_time") {
                item.real = shot_time_at(cfg.params, device_alpha) +
                            s.nominal.sigma * rng.normal();
            } else {
                item.real = s.nominal.mean + s.nominal.sigma * rng.normal();
                if (s.name == "pattern_density") device_alpha = item.real;
            }
            rec.items.push_back(std::move(item));
        }
        rec.sort_passed = rng.uniform() < cfg.pass_rate;
        fleet.devices.push_back(std::move(rec));
    }

    std::int64_t pass_total = 0;
    std::int64_t fail_parity = 0;
    std::int64_t bin2 = 0, bin3 = 0;
    for (const DeviceRecord& rec : fleet.devices) {
        LotResult& lot = fleet.tests.master_results[rec.lot_id];
        lot.tested += 1;
        std::int64_t& wafer_good = fleet.tests.wafer_results[rec.wafer_id];
        if (rec.sort_passed) {
            lot.good += 1;
            wafer_good += 1;
            ++pass_total;
        } else {
            (fail_parity++ % 2 == 0 ? bin2 : bin3) += 1;
        }
    }
    for (auto& [lot_id, lot] : fleet.tests.master_results) lot.shipped = lot.good;
    fleet.tests.hardware_bins["bin1_pass"] = pass_total;
    fleet.tests.hardware_bins["bin2_parametric_fail"] = bin2;
    fleet.tests.hardware_bins["bin3_functional_fail"] = bin3;
    return fleet;
}

struct Injection {
    AttackLabel attack = AttackLabel::none;
    std::vector<std::string> targets;
    double magnitude = 4.0;  // in units of each touched item's nominal sigma
    std::uint64_t seed = 0;  // drives injected point clusters only
};

namespace detail {

inline double sigma_of(const ProcessParams& p, const std::string& name) {
    auto it = p.nominals.find(name);
    if (it == p.nominals.end())
        throw BadConfig("no nominal registered for data item '" + name + "'");
    return it->second.sigma;
}

inline void shift_item(DeviceRecord& rec, const std::string& name, double delta) {
    DataItem* item = find_item(rec, name);
    if (!item) throw BadConfig("device '" + rec.device_id + "' lacks item '" + name + "'");
    item->real += delta;
}

}  // namespace detail

// Applies one attack to the targeted devices, touching exactly the data
// items registered for it and stamping ground truth. Count attacks edit
// the test records instead of per-device items.
inline Fleet inject_attack(Fleet fleet, const Injection& inj,
                           const ProcessParams& params = default_params()) {
    if (inj.attack == AttackLabel::none)
        throw UnknownAttack("injection needs an attack label other than 'none'");
    if (inj.targets.empty()) throw NoTargets("injection lists no target devices");
    if (inj.magnitude <= 0.0) throw BadConfig("injection magnitude must be positive");

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < fleet.devices.size(); ++i)
        index[fleet.devices[i].device_id] = i;
    for (const std::string& id : inj.targets)
        if (!index.count(id)) throw NoTargets("target device '" + id + "' not in fleet");

    const double m = inj.magnitude;
    std::map<std::string, std::int64_t> per_lot;
    for (const std::string& id : inj.targets) {
        DeviceRecord& rec = fleet.devices[index[id]];
        switch (inj.attack) {
            case AttackLabel::parametric_trojan:
                detail::shift_item(rec, "doping_density", m * detail::sigma_of(params, "doping_density"));
                detail::shift_item(rec, "etch_depth", -m * detail::sigma_of(params, "etch_depth"));
                detail::shift_item(rec, "oxide_thickness", -m * detail::sigma_of(params, "oxide_thickness"));
                detail::shift_item(rec, "gate_dimension", -m * detail::sigma_of(params, "gate_dimension"));
                detail::shift_item(rec, "early_failure_rate", m * detail::sigma_of(params, "early_failure_rate"));
                break;
            case AttackLabel::functional_trojan: {
                DataItem* density = find_item(rec, "pattern_density");
                DataItem* shot = find_item(rec, "shot_time");
                if (!density || !shot)
                    throw BadConfig("device '" + rec.device_id + "' lacks mask-writing items");
                double old_alpha = density->real;
                double new_alpha = old_alpha + m * detail::sigma_of(params, "pattern_density");
                density->real = new_alpha;
                // The device keeps its measurement noise; only the
                // density-dependent part of the shot time moves.
                shot->real += shot_time_at(params, new_alpha) - shot_time_at(params, old_alpha);
                detail::shift_item(rec, "opc_filesize", m * detail::sigma_of(params, "opc_filesize"));
                detail::shift_item(rec, "opc_runtime", m * detail::sigma_of(params, "opc_runtime"));
                // Etch-loading: more etched area slows the etch.
                detail::shift_item(rec, "etch_rate", -m * detail::sigma_of(params, "etch_rate"));
                break;
            }
            case AttackLabel::info_leak_trojan: {
                DataItem* branches = find_item(rec, "branching_points");
                DataItem* leak = find_item(rec, "jtag_leak");
                if (!branches || !leak)
                    throw BadConfig("device '" + rec.device_id + "' lacks leak items");
                Rng rng(mix_seed(inj.seed, fnv1a(rec.device_id)));
                for (int k = 0; k < 5; ++k) {
                    double x = 0.95 + 0.01 * rng.normal();
                    double y = 0.05 + 0.01 * rng.normal();
                    branches->points.push_back({detail::clamp01(x), detail::clamp01(y)});
                }
                leak->flag = true;
                break;
            }
            case AttackLabel::unintentional_leak: {
                DataItem* leak = find_item(rec, "jtag_leak");
                if (!leak) throw BadConfig("device '" + rec.device_id + "' lacks leak items");
                leak->flag = true;
                break;
            }
            case AttackLabel::recycled:
                detail::shift_item(rec, "lead_dimension", -m * detail::sigma_of(params, "lead_dimension"));
                detail::shift_item(rec, "ball_composition_score", -m * detail::sigma_of(params, "ball_composition_score"));
                detail::shift_item(rec, "early_failure_rate", m * detail::sigma_of(params, "early_failure_rate"));
                break;
            case AttackLabel::remarked: {
                DataItem* marking = find_item(rec, "marking_valid");
                if (!marking) throw BadConfig("device '" + rec.device_id + "' lacks marking item");
                marking->flag = false;
                break;
            }
            case AttackLabel::defective_shipped:
            case AttackLabel::overproduced:
                per_lot[rec.lot_id] += 1;
                break;
            case AttackLabel::none:
                break;
        }
        rec.ground_truth =
            {inj.attack, attack_origin_stage(inj.attack), attack_actor(inj.attack)};
    }

    // Count attacks edit the shared records once per touched lot;
    // defective shipments leave an audit trace, overproduction does not.
    for (const auto& [lot_id, count] : per_lot) {
        LotResult& lot = fleet.tests.master_results.at(lot_id);
        if (inj.attack == AttackLabel::defective_shipped) {
            std::int64_t old_value = lot.shipped;
            lot.shipped += count;
            fleet.tests.audit_trail.push_back(
                {static_cast<std::int64_t>(fleet.tests.audit_trail.size()),
                 "shipped_parts_count:" + lot_id, old_value, lot.shipped});
        } else {
            lot.good += count;
        }
    }
    return fleet;
}

struct InFieldObservation {
    double failure_time_hours = 0.0;
    bool jtag_leak = false;
    bool bist_pass = true;
    double branch_cluster_spread = 0.0;  // max point distance from centroid
    std::map<std::string, double> hpc;
};

// In-field behavior derived from the record: exponential failure time
// whose rate scales with the burn-in early failure rate, the leak flag,
// and hardware-counter summaries.
inline InFieldObservation emit_infield(const DeviceRecord& rec, std::uint64_t seed) {
    const DataItem* efr = find_item(rec, "early_failure_rate");
    const DataItem* leak = find_item(rec, "jtag_leak");
    if (!efr || !leak)
        throw IncompleteRecord("device '" + rec.device_id +
                               "' is not complete through burn-in");

    Rng rng(mix_seed(seed, fnv1a(rec.device_id)));
    InFieldObservation obs;
    double rate_scale = std::clamp(efr->real, 1e-4, 1.0) / 0.02;
    obs.failure_time_hours = rng.exponential(rate_scale / kNominalLifetimeHours);
    obs.jtag_leak = leak->flag;
    obs.bist_pass = rec.ground_truth.attack != AttackLabel::functional_trojan;

    if (const DataItem* branches = find_item(rec, "branching_points");
        branches && !branches->points.empty()) {
        double cx = 0.0, cy = 0.0;
        for (const auto& p : branches->points) {
            cx += p[0];
            cy += p[1];
        }
        cx /= static_cast<double>(branches->points.size());
        cy /= static_cast<double>(branches->points.size());
        for (const auto& p : branches->points) {
            double d = std::hypot(p[0] - cx, p[1] - cy);
            obs.branch_cluster_spread = std::max(obs.branch_cluster_spread, d);
        }
    }

    bool leaky = rec.ground_truth.attack == AttackLabel::info_leak_trojan;
    obs.hpc["cache_references"] = 1.0e6 * (1.0 + 0.02 * rng.normal());
    obs.hpc["branch_misses"] = 2.0e4 * (leaky ? 1.2 : 1.0) * (1.0 + 0.02 * rng.normal());
    obs.hpc["bus_cycles"] = 5.0e5 * (1.0 + 0.02 * rng.normal());
    obs.hpc["cpu_cycles"] = 3.0e6 * (1.0 + 0.02 * rng.normal());
    return obs;
}

}  // namespace siltwin::sim
