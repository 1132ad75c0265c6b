#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "siltwin/common/error.hpp"

namespace siltwin::sim {

SILTWIN_DEFINE_ERROR(BadConfig);
SILTWIN_DEFINE_ERROR(UnknownAttack);
SILTWIN_DEFINE_ERROR(NoTargets);
SILTWIN_DEFINE_ERROR(IncompleteRecord);
SILTWIN_DEFINE_ERROR(UnknownStage);
SILTWIN_DEFINE_ERROR(BadFleetFile);

// Lifecycle stages in progression order; the enum value is the order.
enum class StageId : int {
    spec = 0,
    logic_design,
    functional_verification,
    synthesis,
    dft_insertion,
    formal_check,
    floorplan,
    cts,
    routing,
    signoff,
    tapeout,
    mask_writing,
    oxidation,
    ion_implantation,
    gate_definition,
    etching,
    deposition,
    wafer_sort,
    dicing,
    bumping,
    underfill,
    wire_bonding,
    package_test,
    burn_in,
    in_field,
};

inline constexpr int kStageCount = 25;

inline const std::array<const char*, kStageCount>& stage_names() {
    static const std::array<const char*, kStageCount> names = {
        "spec",          "logic-design", "functional-verification",
        "synthesis",     "dft-insertion", "formal-check",
        "floorplan",     "cts",          "routing",
        "signoff",       "tapeout",      "mask-writing",
        "oxidation",     "ion-implantation", "gate-definition",
        "etching",       "deposition",   "wafer-sort",
        "dicing",        "bumping",      "underfill",
        "wire-bonding",  "package-test", "burn-in",
        "in-field",
    };
    return names;
}

inline std::string stage_name(StageId s) {
    return stage_names()[static_cast<std::size_t>(static_cast<int>(s))];
}

inline StageId stage_from_name(const std::string& name) {
    for (int i = 0; i < kStageCount; ++i)
        if (name == stage_names()[static_cast<std::size_t>(i)]) return static_cast<StageId>(i);
    throw UnknownStage("unknown lifecycle stage '" + name + "'");
}

enum class AttackLabel : int {
    none = 0,
    parametric_trojan,
    functional_trojan,
    info_leak_trojan,
    unintentional_leak,
    recycled,
    remarked,
    defective_shipped,
    overproduced,
};

inline std::string attack_name(AttackLabel a) {
    switch (a) {
        case AttackLabel::none: return "none";
        case AttackLabel::parametric_trojan: return "parametric-trojan";
        case AttackLabel::functional_trojan: return "functional-trojan";
        case AttackLabel::info_leak_trojan: return "info-leak-trojan";
        case AttackLabel::unintentional_leak: return "unintentional-leak";
        case AttackLabel::recycled: return "recycled";
        case AttackLabel::remarked: return "remarked";
        case AttackLabel::defective_shipped: return "defective-shipped";
        case AttackLabel::overproduced: return "overproduced";
    }
    return "none";
}

inline AttackLabel attack_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(AttackLabel::overproduced); ++i) {
        AttackLabel a = static_cast<AttackLabel>(i);
        if (attack_name(a) == name) return a;
    }
    throw UnknownAttack("unknown attack label '" + name + "'");
}

enum class Actor : int {
    none = 0,
    foundry,
    rogue_employee,
    third_party_ip_vendor,
    designer,
    distributor,
};

inline std::string actor_name(Actor a) {
    switch (a) {
        case Actor::none: return "none";
        case Actor::foundry: return "foundry";
        case Actor::rogue_employee: return "rogue-employee";
        case Actor::third_party_ip_vendor: return "3pip-vendor";
        case Actor::designer: return "designer";
        case Actor::distributor: return "distributor";
    }
    return "none";
}

inline Actor actor_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(Actor::distributor); ++i) {
        Actor a = static_cast<Actor>(i);
        if (actor_name(a) == name) return a;
    }
    throw BadFleetFile("unknown actor '" + name + "'");
}

// Where each attack enters the lifecycle and who can mount it there.
inline StageId attack_origin_stage(AttackLabel a) {
    switch (a) {
        case AttackLabel::parametric_trojan: return StageId::ion_implantation;
        case AttackLabel::functional_trojan: return StageId::mask_writing;
        case AttackLabel::info_leak_trojan: return StageId::logic_design;
        case AttackLabel::unintentional_leak: return StageId::spec;
        case AttackLabel::recycled: return StageId::in_field;
        case AttackLabel::remarked: return StageId::burn_in;
        case AttackLabel::defective_shipped: return StageId::wafer_sort;
        case AttackLabel::overproduced: return StageId::wafer_sort;
        case AttackLabel::none: break;
    }
    return StageId::spec;
}

inline Actor attack_actor(AttackLabel a) {
    switch (a) {
        case AttackLabel::parametric_trojan: return Actor::foundry;
        case AttackLabel::functional_trojan: return Actor::foundry;
        case AttackLabel::info_leak_trojan: return Actor::third_party_ip_vendor;
        case AttackLabel::unintentional_leak: return Actor::designer;
        case AttackLabel::recycled: return Actor::distributor;
        case AttackLabel::remarked: return Actor::distributor;
        case AttackLabel::defective_shipped: return Actor::rogue_employee;
        case AttackLabel::overproduced: return Actor::foundry;
        case AttackLabel::none: break;
    }
    return Actor::none;
}

enum class ItemKind : int { real_value = 0, boolean_value, point_set };

struct DataItem {
    std::string name;
    StageId stage = StageId::spec;
    ItemKind kind = ItemKind::real_value;
    std::string units;
    double real = 0.0;
    bool flag = false;
    std::vector<std::array<double, 2>> points;
};

struct GroundTruth {
    AttackLabel attack = AttackLabel::none;
    StageId origin = StageId::spec;
    Actor actor = Actor::none;
};

struct DeviceRecord {
    std::string device_id;
    std::string wafer_id;
    std::string lot_id;
    bool sort_passed = true;
    std::vector<DataItem> items;
    GroundTruth ground_truth;
};

inline const DataItem* find_item(const DeviceRecord& rec, const std::string& name) {
    for (const DataItem& it : rec.items)
        if (it.name == name) return &it;
    return nullptr;
}

inline DataItem* find_item(DeviceRecord& rec, const std::string& name) {
    for (DataItem& it : rec.items)
        if (it.name == name) return &it;
    return nullptr;
}

struct LotResult {
    std::int64_t tested = 0;
    std::int64_t good = 0;
    std::int64_t shipped = 0;
};

// Append-only modification log; sequence numbers stand in for timestamps
// so runs stay byte-reproducible.
struct AuditEntry {
    std::int64_t sequence = 0;
    std::string field;
    std::int64_t old_value = 0;
    std::int64_t new_value = 0;
};

struct TestRecordSet {
    std::map<std::string, LotResult> master_results;       // lot -> counts
    std::map<std::string, std::int64_t> wafer_results;     // wafer -> good
    std::map<std::string, std::int64_t> hardware_bins;     // bin -> count
    std::vector<AuditEntry> audit_trail;
};

struct Fleet {
    std::vector<DeviceRecord> devices;
    TestRecordSet tests;
};

struct Nominal {
    double mean = 0.0;
    double sigma = 0.0;
};

struct ItemSpec {
    std::string name;
    StageId stage = StageId::spec;
    ItemKind kind = ItemKind::real_value;
    std::string units;
    Nominal nominal;
};

// Process knobs plus the nominal table for every numeric data item.
// alpha is the nominal pattern area density; eta the proximity/backscatter
// coefficient of the shot-time relation.
struct ProcessParams {
    double t0 = 1.0;        // shot time at zero pattern density, us
    double alpha = 0.42;    // nominal pattern density, in [0, 1]
    double eta = 0.5;       // proximity coefficient, >= 0
    int branch_count = 40;  // synthetic branching features per device
    double branch_spread = 0.05;
    std::map<std::string, Nominal> nominals;
    // Additional real-valued items appended to the catalog, e.g. when the
    // threat model grows a new measurable feature.
    std::vector<ItemSpec> extra_items;
};

// T = T0 / (1 + 2*alpha*eta): shot time falls as pattern density or the
// proximity coefficient grows.
inline double shot_time(const ProcessParams& p) {
    return p.t0 / (1.0 + 2.0 * p.alpha * p.eta);
}

inline double shot_time_at(const ProcessParams& p, double alpha) {
    return p.t0 / (1.0 + 2.0 * alpha * p.eta);
}

inline ProcessParams default_params() {
    ProcessParams p;
    p.nominals = {
        {"pattern_density", {p.alpha, 0.01}},
        {"shot_time", {shot_time(p), 0.01}},
        {"opc_filesize", {2.4, 0.05}},
        {"opc_runtime", {3.6, 0.1}},
        {"oxide_thickness", {5.0, 0.08}},
        {"doping_density", {1.0e18, 2.0e16}},
        {"gate_dimension", {14.0, 0.2}},
        {"etch_depth", {120.0, 2.0}},
        {"etch_rate", {450.0, 6.0}},
        {"lead_dimension", {0.30, 0.004}},
        {"ball_composition_score", {0.985, 0.004}},
        {"early_failure_rate", {0.02, 0.01}},
    };
    return p;
}

// Factory-nominal values for the boolean items: markings valid, no leak.
inline bool nominal_flag(const std::string& item_name) {
    return item_name == "marking_valid";
}

// Registered catalog in generation order: one entry per data item a
// device record carries. Numeric entries pull their nominals from params.
inline std::vector<ItemSpec> catalog(const ProcessParams& p) {
    auto nom = [&](const std::string& name) {
        auto it = p.nominals.find(name);
        if (it == p.nominals.end())
            throw BadConfig("no nominal registered for data item '" + name + "'");
        return it->second;
    };
    std::vector<ItemSpec> items = {
        {"branching_points", StageId::logic_design, ItemKind::point_set, "feature", {}},
        {"pattern_density", StageId::mask_writing, ItemKind::real_value, "fraction",
         nom("pattern_density")},
        {"shot_time", StageId::mask_writing, ItemKind::real_value, "us", nom("shot_time")},
        {"opc_filesize", StageId::mask_writing, ItemKind::real_value, "GB",
         nom("opc_filesize")},
        {"opc_runtime", StageId::mask_writing, ItemKind::real_value, "hours",
         nom("opc_runtime")},
        {"oxide_thickness", StageId::oxidation, ItemKind::real_value, "nm",
         nom("oxide_thickness")},
        {"doping_density", StageId::ion_implantation, ItemKind::real_value, "cm^-3",
         nom("doping_density")},
        {"gate_dimension", StageId::gate_definition, ItemKind::real_value, "nm",
         nom("gate_dimension")},
        {"etch_depth", StageId::etching, ItemKind::real_value, "nm", nom("etch_depth")},
        {"etch_rate", StageId::etching, ItemKind::real_value, "nm/min", nom("etch_rate")},
        {"lead_dimension", StageId::package_test, ItemKind::real_value, "mm",
         nom("lead_dimension")},
        {"ball_composition_score", StageId::package_test, ItemKind::real_value, "fraction",
         nom("ball_composition_score")},
        {"marking_valid", StageId::package_test, ItemKind::boolean_value, "flag", {}},
        {"early_failure_rate", StageId::burn_in, ItemKind::real_value, "fraction",
         nom("early_failure_rate")},
        {"jtag_leak", StageId::in_field, ItemKind::boolean_value, "flag", {}},
    };
    items.insert(items.end(), p.extra_items.begin(), p.extra_items.end());
    return items;
}

inline void validate_params(const ProcessParams& p) {
    if (p.t0 <= 0.0) throw BadConfig("t0 must be positive");
    if (p.alpha < 0.0 || p.alpha > 1.0) throw BadConfig("alpha must lie in [0, 1]");
    if (p.eta < 0.0) throw BadConfig("eta must be nonnegative");
    if (p.branch_count < 1) throw BadConfig("branch_count must be at least 1");
    if (p.branch_spread < 0.0) throw BadConfig("branch_spread must be nonnegative");
    for (const auto& [name, n] : p.nominals)
        if (n.sigma < 0.0)
            throw BadConfig("standard deviation for '" + name + "' must be nonnegative");
    std::set<std::string> extra_names;
    for (const ItemSpec& s : p.extra_items) {
        if (s.kind != ItemKind::real_value)
            throw BadConfig("extra item '" + s.name + "' must be real-valued");
        if (s.nominal.sigma < 0.0)
            throw BadConfig("standard deviation for '" + s.name + "' must be nonnegative");
        if (!extra_names.insert(s.name).second)
            throw BadConfig("duplicate extra item '" + s.name + "'");
    }
    for (const ItemSpec& core : catalog(default_params()))
        if (extra_names.count(core.name))
            throw BadConfig("extra item '" + core.name + "' shadows a core data item");
}

}  // namespace siltwin::sim
