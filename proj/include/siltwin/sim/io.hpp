#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siltwin/sim/generate.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::sim {

inline constexpr int kFormatVersion = 1;

namespace detail {

inline std::string kind_name(ItemKind k) {
    switch (k) {
        case ItemKind::real_value: return "real";
        case ItemKind::boolean_value: return "flag";
        case ItemKind::point_set: return "points";
    }
    return "real";
}

inline ItemKind kind_from_name(const std::string& s) {
    if (s == "real") return ItemKind::real_value;
    if (s == "flag") return ItemKind::boolean_value;
    if (s == "points") return ItemKind::point_set;
    throw BadFleetFile("unknown data item kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json item_to_json(const DataItem& item) {
    nlohmann::json j;
    j["name"] = item.name;
    j["stage"] = stage_name(item.stage);
    j["kind"] = detail::kind_name(item.kind);
    j["units"] = item.units;
    switch (item.kind) {
        case ItemKind::real_value:
            j["value"] = item.real;
            break;
        case ItemKind::boolean_value:
            j["value"] = item.flag;
            break;
        case ItemKind::point_set: {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : item.points) pts.push_back({p[0], p[1]});
            j["points"] = std::move(pts);
            break;
        }
    }
    return j;
}

inline DataItem item_from_json(const nlohmann::json& j) {
    DataItem item;
    item.name = j.at("name").get<std::string>();
    item.stage = stage_from_name(j.at("stage").get<std::string>());
    item.kind = detail::kind_from_name(j.at("kind").get<std::string>());
    item.units = j.at("units").get<std::string>();
    switch (item.kind) {
        case ItemKind::real_value:
            item.real = j.at("value").get<double>();
            break;
        case ItemKind::boolean_value:
            item.flag = j.at("value").get<bool>();
            break;
        case ItemKind::point_set:
            for (const auto& p : j.at("points"))
                item.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            break;
    }
    return item;
}

inline nlohmann::json device_to_json(const DeviceRecord& rec) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["device_id"] = rec.device_id;
    j["wafer_id"] = rec.wafer_id;
    j["lot_id"] = rec.lot_id;
    j["sort_passed"] = rec.sort_passed;
    j["ground_truth"] = {{"attack", attack_name(rec.ground_truth.attack)},
                         {"origin", stage_name(rec.ground_truth.origin)},
                         {"actor", actor_name(rec.ground_truth.actor)}};
    nlohmann::json items = nlohmann::json::array();
    for (const DataItem& it : rec.items) items.push_back(item_to_json(it));
    j["items"] = std::move(items);
    return j;
}

inline DeviceRecord device_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw BadFleetFile("unsupported fleet format_version");
    DeviceRecord rec;
    rec.device_id = j.at("device_id").get<std::string>();
    rec.wafer_id = j.at("wafer_id").get<std::string>();
    rec.lot_id = j.at("lot_id").get<std::string>();
    rec.sort_passed = j.at("sort_passed").get<bool>();
    const auto& gt = j.at("ground_truth");
    rec.ground_truth.attack = attack_from_name(gt.at("attack").get<std::string>());
    rec.ground_truth.origin = stage_from_name(gt.at("origin").get<std::string>());
    rec.ground_truth.actor = actor_from_name(gt.at("actor").get<std::string>());
    for (const auto& ji : j.at("items")) rec.items.push_back(item_from_json(ji));
    return rec;
}

// Fleet file: JSON Lines, one device record per line.
inline std::string fleet_to_jsonl(const Fleet& fleet) {
    std::string out;
    for (const DeviceRecord& rec : fleet.devices) out += device_to_json(rec).dump() + "\n";
    return out;
}

inline nlohmann::json tests_to_json(const TestRecordSet& tests) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["master_results"] = nlohmann::json::object();
    for (const auto& [lot, r] : tests.master_results)
        j["master_results"][lot] = {{"tested", r.tested}, {"good", r.good},
                                    {"shipped", r.shipped}};
    j["wafer_results"] = nlohmann::json::object();
    for (const auto& [wafer, good] : tests.wafer_results) j["wafer_results"][wafer] = good;
    j["hardware_bins"] = nlohmann::json::object();
    for (const auto& [bin, count] : tests.hardware_bins) j["hardware_bins"][bin] = count;
    j["audit_trail"] = nlohmann::json::array();
    for (const AuditEntry& e : tests.audit_trail)
        j["audit_trail"].push_back({{"sequence", e.sequence}, {"field", e.field},
                                    {"old", e.old_value}, {"new", e.new_value}});
    return j;
}

inline TestRecordSet tests_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw BadFleetFile("unsupported test record format_version");
    TestRecordSet tests;
    for (auto it = j.at("master_results").begin(); it != j.at("master_results").end(); ++it)
        tests.master_results[it.key()] = {it.value().at("tested").get<std::int64_t>(),
                                          it.value().at("good").get<std::int64_t>(),
                                          it.value().at("shipped").get<std::int64_t>()};
    for (auto it = j.at("wafer_results").begin(); it != j.at("wafer_results").end(); ++it)
        tests.wafer_results[it.key()] = it.value().get<std::int64_t>();
    for (auto it = j.at("hardware_bins").begin(); it != j.at("hardware_bins").end(); ++it)
        tests.hardware_bins[it.key()] = it.value().get<std::int64_t>();
    for (const auto& je : j.at("audit_trail"))
        tests.audit_trail.push_back({je.at("sequence").get<std::int64_t>(),
                                     je.at("field").get<std::string>(),
                                     je.at("old").get<std::int64_t>(),
                                     je.at("new").get<std::int64_t>()});
    return tests;
}

inline std::string save_tests(const TestRecordSet& tests) {
    return tests_to_json(tests).dump(2) + "\n";
}

inline Fleet load_fleet(const std::string& jsonl, const std::string& tests_text) {
    Fleet fleet;
    std::istringstream lines(jsonl);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw BadFleetFile("fleet line is not valid JSON: " + line);
        try {
            fleet.devices.push_back(device_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw BadFleetFile(std::string("malformed device record: ") + e.what());
        }
    }
    nlohmann::json jt = nlohmann::json::parse(tests_text, nullptr, false);
    if (jt.is_discarded()) throw BadFleetFile("test record file is not valid JSON");
    try {
        fleet.tests = tests_from_json(jt);
    } catch (const nlohmann::json::exception& e) {
        throw BadFleetFile(std::string("malformed test record set: ") + e.what());
    }
    return fleet;
}

inline nlohmann::json params_to_json(const ProcessParams& p) {
    nlohmann::json j;
    j["t0"] = p.t0;
    j["alpha"] = p.alpha;
    j["eta"] = p.eta;
    j["branch_count"] = p.branch_count;
    j["branch_spread"] = p.branch_spread;
    j["nominals"] = nlohmann::json::object();
    for (const auto& [name, n] : p.nominals)
        j["nominals"][name] = {{"mean", n.mean}, {"sigma", n.sigma}};
    if (!p.extra_items.empty()) {
        j["extra_items"] = nlohmann::json::array();
        for (const ItemSpec& s : p.extra_items)
            j["extra_items"].push_back({{"name", s.name},
                                        {"stage", stage_name(s.stage)},
                                        {"units", s.units},
                                        {"mean", s.nominal.mean},
                                        {"sigma", s.nominal.sigma}});
    }
    return j;
}

inline ProcessParams params_from_json(const nlohmann::json& j) {
    try {
        ProcessParams p = default_params();
        if (j.contains("t0")) p.t0 = j.at("t0").get<double>();
        if (j.contains("alpha")) p.alpha = j.at("alpha").get<double>();
        if (j.contains("eta")) p.eta = j.at("eta").get<double>();
        if (j.contains("branch_count")) p.branch_count = j.at("branch_count").get<int>();
        if (j.contains("branch_spread"))
            p.branch_spread = j.at("branch_spread").get<double>();
        if (j.contains("nominals"))
            for (auto it = j.at("nominals").begin(); it != j.at("nominals").end(); ++it)
                p.nominals[it.key()] = {it.value().at("mean").get<double>(),
                                        it.value().at("sigma").get<double>()};
        if (j.contains("extra_items"))
            for (const auto& e : j.at("extra_items")) {
                ItemSpec s;
                s.name = e.at("name").get<std::string>();
                s.stage = stage_from_name(e.at("stage").get<std::string>());
                s.kind = ItemKind::real_value;
                if (e.contains("units")) s.units = e.at("units").get<std::string>();
                s.nominal = {e.at("mean").get<double>(), e.at("sigma").get<double>()};
                p.extra_items.push_back(s);
            }
        // A changed alpha or t0 moves the derived shot-time nominal unless
        // the file pinned one explicitly.
        if (!j.contains("nominals") || !j.at("nominals").contains("shot_time"))
            p.nominals["shot_time"].mean = shot_time(p);
        validate_params(p);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("malformed process params: ") + e.what());
    }
}

inline Injection injection_from_json(const nlohmann::json& j) {
    try {
        Injection inj;
        inj.attack = attack_from_name(j.at("attack").get<std::string>());
        inj.targets = j.at("targets").get<std::vector<std::string>>();
        if (j.contains("magnitude")) inj.magnitude = j.at("magnitude").get<double>();
        if (j.contains("seed")) inj.seed = j.at("seed").get<std::uint64_t>();
        return inj;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("malformed injection block: ") + e.what());
    }
}

inline nlohmann::json injection_to_json(const Injection& inj) {
    return {{"attack", attack_name(inj.attack)},
            {"targets", inj.targets},
            {"magnitude", inj.magnitude},
            {"seed", inj.seed}};
}

}  // namespace siltwin::sim
