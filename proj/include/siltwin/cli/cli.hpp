#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "siltwin/anomaly/evidence.hpp"
#include "siltwin/anomaly/extract.hpp"
#include "siltwin/anomaly/registry.hpp"
#include "siltwin/common/error.hpp"
#include "siltwin/common/fileio.hpp"
#include "siltwin/common/rng.hpp"
#include "siltwin/hmm/model.hpp"
#include "siltwin/mln/ground.hpp"
#include "siltwin/mln/inference.hpp"
#include "siltwin/pgm/io.hpp"
#include "siltwin/sim/generate.hpp"
#include "siltwin/sim/io.hpp"
#include "siltwin/trust/engine.hpp"
#include "siltwin/trust/report.hpp"
#include "siltwin/trust/threat_model.hpp"

// Command-line surface. Every subcommand is a pure function of the config
// file, the seed, and the named input artifacts; running one twice writes
// byte-identical outputs. Exit codes are part of the contract: 0 success,
// 1 usage, 2 bad input, 3 runtime failure, 4 bad model.
namespace siltwin::cli {

SILTWIN_DEFINE_ERROR(UsageError);
SILTWIN_DEFINE_ERROR(InputError);
SILTWIN_DEFINE_ERROR(PipelineError);

inline constexpr int kConfigFormatVersion = 1;

struct RunConfig {
    std::string command;
    nlohmann::json raw;
    std::string hash;  // over the config file bytes, stamped into every output
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::filesystem::path config_dir;  // relative input paths resolve against this
    std::string engine = "bn";
    int scenario = 0;
    bool force = false;
};

inline std::uint64_t parse_seed(const std::string& text) {
    if (text.empty() || text.size() > 20 ||
        text.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError("seed must be a non-negative integer");
    try {
        return std::stoull(text);
    } catch (const std::exception&) {
        throw UsageError("seed '" + text + "' does not fit in 64 bits");
    }
}

inline RunConfig load_run_config(const std::string& command, const std::string& config_path,
                                 const std::string& seed_flag, const std::string& out_flag,
                                 const std::string& engine_flag, int scenario_flag, bool force) {
    if (config_path.empty()) throw UsageError("--config is required");
    RunConfig cfg;
    cfg.command = command;
    cfg.force = force;
    // Flag syntax is checked before any input is touched.
    if (!seed_flag.empty()) cfg.seed = parse_seed(seed_flag);
    std::string text;
    try {
        text = read_file(config_path);
    } catch (const FileError&) {
        throw InputError("config file '" + config_path + "' is missing or unreadable");
    }
    cfg.hash = fnv1a_hex(text);
    try {
        cfg.raw = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("config file '" + config_path + "' is not valid json: " + e.what());
    }
    if (!cfg.raw.is_object())
        throw InputError("config file '" + config_path + "' must hold a json object");
    if (cfg.raw.value("format_version", kConfigFormatVersion) != kConfigFormatVersion)
        throw InputError("config file '" + config_path + "' has an unsupported format_version");
    cfg.config_dir = std::filesystem::path(config_path).parent_path();

    if (seed_flag.empty()) {
        if (cfg.raw.contains("seed")) {
            if (!cfg.raw["seed"].is_number_unsigned())
                throw InputError("config key 'seed' must be a non-negative integer");
            cfg.seed = cfg.raw["seed"].get<std::uint64_t>();
        } else {
            // No wall-clock fallback: an unseeded run cannot be reproduced.
            throw InputError("config file '" + config_path +
                             "' sets no seed and --seed was not given");
        }
    }

    cfg.engine = !engine_flag.empty() ? engine_flag : cfg.raw.value("engine", std::string("bn"));
    if (cfg.engine != "bn" && cfg.engine != "hmm" && cfg.engine != "mln")
        throw UsageError("engine must be one of bn, hmm, mln");
    cfg.scenario = scenario_flag != 0 ? scenario_flag : cfg.raw.value("scenario", 0);

    const std::string out = !out_flag.empty() ? out_flag : cfg.raw.value("out", std::string());
    if (out.empty()) {
        if (command != "report") throw UsageError("--out is required for '" + command + "'");
    } else {
        cfg.out_dir = out;
    }
    return cfg;
}

// ---- Input plumbing ----------------------------------------------------

inline std::filesystem::path resolve_input(const RunConfig& cfg, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : cfg.config_dir / path;
}

inline std::optional<std::filesystem::path> input_path(const RunConfig& cfg,
                                                       const std::string& key) {
    auto inputs = cfg.raw.find("inputs");
    if (inputs == cfg.raw.end()) return std::nullopt;
    if (!inputs->is_object()) throw InputError("config key 'inputs' must be a json object");
    auto it = inputs->find(key);
    if (it == inputs->end()) return std::nullopt;
    if (!it->is_string())
        throw InputError("config key 'inputs." + key + "' must be a path string");
    return resolve_input(cfg, it->get<std::string>());
}

inline std::filesystem::path require_input(const RunConfig& cfg, const std::string& key) {
    std::optional<std::filesystem::path> p = input_path(cfg, key);
    if (!p)
        throw InputError("config key 'inputs." + key + "' is required for '" + cfg.command + "'");
    return *p;
}

inline sim::Fleet load_fleet_pair(const std::filesystem::path& fleet_path,
                                  const std::filesystem::path& tests_path) {
    return sim::load_fleet(read_file(fleet_path.string()),
                           read_file(tests_path.string()));
}

inline sim::Fleet load_current_fleet(const RunConfig& cfg) {
    return load_fleet_pair(require_input(cfg, "fleet"), require_input(cfg, "tests"));
}

inline std::vector<sim::Fleet> load_history(const RunConfig& cfg) {
    std::vector<sim::Fleet> db;
    auto inputs = cfg.raw.find("inputs");
    if (inputs == cfg.raw.end()) return db;
    auto it = inputs->find("history");
    if (it == inputs->end()) return db;
    if (!it->is_array())
        throw InputError("config key 'inputs.history' must be an array of fleet/tests pairs");
    for (const nlohmann::json& entry : *it) {
        if (!entry.is_object() || !entry.contains("fleet") || !entry.contains("tests"))
            throw InputError("each 'inputs.history' entry needs 'fleet' and 'tests' paths");
        db.push_back(load_fleet_pair(resolve_input(cfg, entry.at("fleet").get<std::string>()),
                                     resolve_input(cfg, entry.at("tests").get<std::string>())));
    }
    return db;
}

inline sim::ProcessParams params_from_config(const RunConfig& cfg) {
    auto it = cfg.raw.find("params");
    if (it == cfg.raw.end()) return sim::default_params();
    try {
        return sim::params_from_json(*it);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed 'params' block: ") + e.what());
    }
}

inline trust::ThreatModel load_model(const RunConfig& cfg) {
    std::optional<std::filesystem::path> p = input_path(cfg, "threat_model");
    if (!p) return trust::default_threat_model();
    return trust::load_threat_model(read_file(p->string()), params_from_config(cfg));
}

inline anomaly::DetectorRegistry load_registry_input(const RunConfig& cfg) {
    std::optional<std::filesystem::path> p = input_path(cfg, "registry");
    if (!p) return anomaly::default_registry();
    return anomaly::load_registry(read_file(p->string()));
}

inline std::string require_key(const RunConfig& cfg, const std::string& key) {
    auto it = cfg.raw.find(key);
    if (it == cfg.raw.end() || !it->is_string() || it->get<std::string>().empty())
        throw InputError("config key '" + key + "' is required for '" + cfg.command + "'");
    return it->get<std::string>();
}

inline std::vector<std::string> causes_from_config(const RunConfig& cfg,
                                                   const trust::ThreatModel& model) {
    auto it = cfg.raw.find("causes");
    if (it == cfg.raw.end()) {
        std::vector<std::string> all;
        for (const trust::Cause& c : model.causes) all.push_back(c.name);
        return all;
    }
    if (!it->is_array()) throw InputError("config key 'causes' must be an array of names");
    std::vector<std::string> causes;
    for (const nlohmann::json& c : *it) {
        if (!c.is_string()) throw InputError("config key 'causes' must be an array of names");
        causes.push_back(c.get<std::string>());
    }
    if (causes.empty()) throw InputError("config key 'causes' must not be empty");
    return causes;
}

inline trust::BnOptions bn_options(const RunConfig& cfg, anomaly::DetectorRegistry registry,
                                   sim::ProcessParams params) {
    trust::BnOptions opts;
    opts.registry = std::move(registry);
    opts.params = std::move(params);
    try {
        auto learner = cfg.raw.find("learner");
        if (learner != cfg.raw.end()) {
            opts.learner = learner->value("name", opts.learner);
            opts.mle_smoothing = learner->value("smoothing", opts.mle_smoothing);
            opts.rate = learner->value("rate", opts.rate);
            opts.prior_strength = learner->value("prior_strength", opts.prior_strength);
            opts.allow_prior_fallback =
                learner->value("allow_prior_fallback", opts.allow_prior_fallback);
        }
        auto priors = cfg.raw.find("cause_priors");
        if (priors != cfg.raw.end())
            opts.cause_priors = priors->get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed learner options: ") + e.what());
    }
    return opts;
}

inline trust::KnowledgeUpdate update_from_config(const RunConfig& cfg) {
    auto it = cfg.raw.find("update");
    if (it == cfg.raw.end() || !it->is_object())
        throw InputError("config key 'update' is required for 'extend'");
    trust::KnowledgeUpdate u;
    try {
        u.cause = it->at("cause").get<std::string>();
        if (it->contains("origin"))
            u.origin = sim::stage_from_name(it->at("origin").get<std::string>());
        if (it->contains("actor")) u.actor = it->at("actor").get<std::string>();
        if (it->contains("features"))
            u.features = it->at("features").get<std::vector<std::string>>();
        if (it->contains("feature_priors"))
            u.feature_priors = it->at("feature_priors").get<std::map<std::string, double>>();
        if (it->contains("cause_prior")) u.cause_prior = it->at("cause_prior").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed 'update' block: ") + e.what());
    }
    return u;
}

// ---- Output plumbing ---------------------------------------------------

inline void ensure_fresh(const RunConfig& cfg, const std::vector<std::string>& names) {
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.force) return;
    for (const std::string& name : names) {
        const std::filesystem::path p = cfg.out_dir / name;
        if (std::filesystem::exists(p))
            throw InputError("output file '" + p.string() +
                             "' already exists; pass --force to overwrite");
    }
}

inline void write_meta(const RunConfig& cfg) {
    const nlohmann::json meta = {{"format_version", kConfigFormatVersion},
                                 {"command", cfg.command},
                                 {"config_hash", cfg.hash},
                                 {"seed", cfg.seed}};
    write_file((cfg.out_dir / "meta.json").string(), meta.dump(2) + "\n");
}

// Returns the fleet checksum so callers can print it.
inline std::string write_fleet_artifacts(const RunConfig& cfg, const sim::Fleet& fleet) {
    ensure_fresh(cfg, {"fleet.jsonl", "tests.json", "meta.json"});
    const std::string jsonl = sim::fleet_to_jsonl(fleet);
    const std::string tests = sim::save_tests(fleet.tests);
    write_file((cfg.out_dir / "fleet.jsonl").string(), jsonl);
    write_file((cfg.out_dir / "tests.json").string(), tests);
    write_meta(cfg);
    return fnv1a_hex(jsonl + tests);
}

inline std::string fmt_prob(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", p);
    return buf;
}

inline std::string render_report(const trust::RootCauseReport& r) {
    std::ostringstream os;
    os << "engine: " << r.engine << "\n";
    os << "observation: " << r.observation << "\n";
    os << "rank  posterior  cause\n";
    int rank = 1;
    for (const trust::RankedCause& c : r.ranked_causes) {
        char line[64];
        std::snprintf(line, sizeof(line), "%4d  %9s  ", rank++, fmt_prob(c.posterior).c_str());
        os << line << c.cause << "\n";
    }
    os << "implicated stage: " << sim::stage_name(r.implicated_stage)
       << " (p=" << fmt_prob(r.stage_posterior) << ")\n";
    os << "implicated actor: " << r.implicated_actor << "\n";
    if (!r.confidence_note.empty()) os << "note: " << r.confidence_note << "\n";
    return os.str();
}

inline std::string report_with_provenance(const trust::RootCauseReport& r,
                                          const RunConfig& cfg) {
    nlohmann::json j = trust::report_to_json(r);
    j["config_hash"] = cfg.hash;
    return j.dump(2) + "\n";
}

// ---- Subcommands -------------------------------------------------------

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    sim::FleetConfig fc;
    fc.seed = cfg.seed;
    fc.params = params_from_config(cfg);
    auto fleet_block = cfg.raw.find("fleet");
    if (fleet_block != cfg.raw.end()) {
        try {
            fc.size = fleet_block->value("size", fc.size);
            fc.pass_rate = fleet_block->value("pass_rate", fc.pass_rate);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("malformed 'fleet' block: ") + e.what());
        }
    }
    const sim::Fleet fleet = sim::generate_fleet(fc);
    const std::string checksum = write_fleet_artifacts(cfg, fleet);
    out << "devices: " << fleet.devices.size() << "\n";
    out << "checksum: " << checksum << "\n";
    return 0;
}

inline int cmd_inject(const RunConfig& cfg, std::ostream& out) {
    sim::Fleet fleet = load_current_fleet(cfg);
    const sim::ProcessParams params = params_from_config(cfg);
    auto it = cfg.raw.find("injections");
    if (it == cfg.raw.end() || !it->is_array() || it->empty())
        throw InputError("config key 'injections' must be a non-empty array for 'inject'");
    std::uint64_t index = 0;
    for (const nlohmann::json& entry : *it) {
        sim::Injection inj;
        try {
            inj = sim::injection_from_json(entry);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("malformed injection entry: ") + e.what());
        }
        // Unseeded entries draw from the run seed so the whole run replays.
        if (!entry.contains("seed")) inj.seed = mix_seed(cfg.seed, 300 + index);
        fleet = sim::inject_attack(fleet, inj, params);
        ++index;
    }
    const std::string checksum = write_fleet_artifacts(cfg, fleet);
    out << "devices: " << fleet.devices.size() << "\n";
    out << "checksum: " << checksum << "\n";
    return 0;
}

inline int cmd_detect(const RunConfig& cfg, std::ostream& out) {
    const sim::Fleet fleet = load_current_fleet(cfg);
    const trust::ThreatModel model = load_model(cfg);
    const anomaly::DetectorRegistry registry = load_registry_input(cfg);
    const sim::ProcessParams params = params_from_config(cfg);
    const std::vector<std::string> causes = causes_from_config(cfg, model);

    anomaly::EvidenceVector ev;
    auto device = cfg.raw.find("device");
    if (device != cfg.raw.end()) {
        if (!device->is_string()) throw InputError("config key 'device' must be a device id");
        ev = anomaly::extract_evidence(fleet, device->get<std::string>(), registry, causes,
                                       params, model.relationships);
    } else {
        ev = anomaly::extract_evidence(fleet, registry, causes, params, model.relationships);
    }

    ensure_fresh(cfg, {"evidence.json", "meta.json"});
    nlohmann::json j = anomaly::evidence_to_json(ev);
    j["format_version"] = kConfigFormatVersion;
    j["config_hash"] = cfg.hash;
    write_file((cfg.out_dir / "evidence.json").string(), j.dump(2) + "\n");
    write_meta(cfg);

    std::size_t anomalous = 0;
    for (const anomaly::EvidenceItem& item : ev.items) anomalous += item.anomalous ? 1 : 0;
    out << "subject: " << ev.subject << "\n";
    out << "anomalous items: " << anomalous << " of " << ev.items.size() << "\n";
    return 0;
}

inline trust::RootCauseReport infer_report(const RunConfig& cfg) {
    const trust::ThreatModel model = load_model(cfg);
    const anomaly::DetectorRegistry registry = load_registry_input(cfg);
    const sim::ProcessParams params = params_from_config(cfg);
    const sim::Fleet current = load_current_fleet(cfg);
    const std::string device = require_key(cfg, "device");

    if (cfg.engine == "bn") {
        const std::string observation = require_key(cfg, "observation");
        const std::vector<sim::Fleet> history = load_history(cfg);
        return trust::backward_trust_bn(observation, history, current, device, model,
                                        bn_options(cfg, registry, params));
    }
    if (cfg.engine == "hmm") {
        const std::vector<sim::Fleet> history = load_history(cfg);
        std::vector<hmm::ObservationSeq> sequences;
        // No history means the current fleet doubles as the training set.
        const std::vector<const sim::Fleet*> sources = [&] {
            std::vector<const sim::Fleet*> s;
            for (const sim::Fleet& f : history) s.push_back(&f);
            if (s.empty()) s.push_back(&current);
            return s;
        }();
        for (const sim::Fleet* fleet : sources)
            for (const sim::DeviceRecord& rec : fleet->devices)
                sequences.push_back(
                    trust::build_stage_sequence(*fleet, rec.device_id, model, registry, params));
        const hmm::HmmModel stage_model = trust::train_stage_hmm(sequences, model.hmm);
        const hmm::ObservationSeq seq =
            trust::build_stage_sequence(current, device, model, registry, params);
        return trust::backward_trust_hmm(seq, stage_model, trust::stage_mask(), model);
    }
    // mln: causes come from the config or from the configured observation.
    std::vector<std::string> causes;
    if (cfg.raw.contains("causes")) {
        causes = causes_from_config(cfg, model);
    } else {
        causes = trust::candidate_causes(require_key(cfg, "observation"), model);
    }
    const anomaly::EvidenceVector ev = anomaly::extract_evidence(
        current, device, registry, causes, params, model.relationships);
    const mln::KnowledgeBase kb = trust::build_kb(model, causes);
    return trust::backward_trust_mln(ev, kb, model);
}

inline int cmd_infer(const RunConfig& cfg, std::ostream& out) {
    const trust::RootCauseReport report = infer_report(cfg);
    ensure_fresh(cfg, {"report.json", "meta.json"});
    write_file((cfg.out_dir / "report.json").string(),
                       report_with_provenance(report, cfg));
    write_meta(cfg);
    out << render_report(report);
    return 0;
}

inline int cmd_extend(const RunConfig& cfg, std::ostream& out) {
    const trust::ThreatModel model = load_model(cfg);
    const trust::KnowledgeUpdate update = update_from_config(cfg);
    const trust::ThreatModel updated =
        trust::forward_trust_extend(model, update, params_from_config(cfg));

    ensure_fresh(cfg, {"threat_model.json", "meta.json"});
    nlohmann::json j = trust::threat_model_to_json(updated);
    j["config_hash"] = cfg.hash;
    write_file((cfg.out_dir / "threat_model.json").string(), j.dump(2) + "\n");
    write_meta(cfg);

    out << "causes: " << updated.causes.size() << "\n";
    const auto rel = updated.relationships.find(update.cause);
    out << "features of '" << update.cause << "':";
    if (rel != updated.relationships.end())
        for (const std::string& f : rel->second) out << " " << f;
    out << "\n";
    return 0;
}

template <typename Fn>
auto scenario_stage(int scenario, const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw PipelineError("scenario " + std::to_string(scenario) + " failed at stage '" +
                            name + "': " + e.what());
    }
}

// Scenario 1: an accelerated-failure field report investigated with the
// network engine. History holds one labeled fleet per candidate cause; the
// device under test carries the configured attack.
inline trust::RootCauseReport scenario_accelerated_failure(const RunConfig& cfg) {
    const trust::ThreatModel model =
        scenario_stage(1, "threat-model", [&] { return load_model(cfg); });
    const sim::ProcessParams params = params_from_config(cfg);
    const anomaly::DetectorRegistry registry = load_registry_input(cfg);
    const std::vector<std::string> candidates =
        trust::candidate_causes("accelerated-failure", model);
    const std::string truth = cfg.raw.value("attack", std::string("recycled"));
    if (std::find(candidates.begin(), candidates.end(), truth) == candidates.end()) {
        std::string names;
        for (const std::string& c : candidates) names += (names.empty() ? "" : ", ") + c;
        throw InputError("scenario 1 attack must be one of: " + names);
    }
    const double magnitude = cfg.raw.value("magnitude", 4.0);

    const std::vector<sim::Fleet> history = scenario_stage(1, "history-fleets", [&] {
        std::vector<sim::Fleet> db;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            sim::FleetConfig fc;
            fc.size = 40;
            fc.seed = mix_seed(cfg.seed, 100 + k);
            fc.params = params;
            sim::Injection inj;
            inj.attack = sim::attack_from_name(candidates[k]);
            for (int d = 10; d < 22; ++d) inj.targets.push_back(sim::device_id_for(d));
            inj.magnitude = magnitude;
            inj.seed = mix_seed(cfg.seed, 150 + k);
            db.push_back(sim::inject_attack(sim::generate_fleet(fc), inj, params));
        }
        return db;
    });

    std::string device;
    const sim::Fleet current = scenario_stage(1, "current-fleet", [&] {
        sim::FleetConfig fc;
        fc.size = 40;
        fc.seed = mix_seed(cfg.seed, 200);
        fc.params = params;
        device = sim::device_id_for(fc.size / 2);
        sim::Injection inj;
        inj.attack = sim::attack_from_name(truth);
        inj.targets = {device};
        inj.magnitude = magnitude;
        inj.seed = mix_seed(cfg.seed, 201);
        return sim::inject_attack(sim::generate_fleet(fc), inj, params);
    });

    return scenario_stage(1, "inference", [&] {
        return trust::backward_trust_bn("accelerated-failure", history, current, device, model,
                                        bn_options(cfg, registry, params));
    });
}

// Scenario 2: a key-leak report traced to its lifecycle stage with the
// stage-model engine. A labeled training fleet fits the model, then the
// device under test is decoded against it.
inline trust::RootCauseReport scenario_key_leak(const RunConfig& cfg) {
    const trust::ThreatModel model =
        scenario_stage(2, "threat-model", [&] { return load_model(cfg); });
    const sim::ProcessParams params = params_from_config(cfg);
    const anomaly::DetectorRegistry registry = load_registry_input(cfg);
    const double magnitude = cfg.raw.value("magnitude", 4.0);

    const sim::Fleet training = scenario_stage(2, "training-fleet", [&] {
        sim::FleetConfig fc;
        fc.size = 80;
        fc.seed = mix_seed(cfg.seed, 11);
        fc.params = params;
        sim::Injection inj;
        inj.attack = sim::AttackLabel::info_leak_trojan;
        for (int d = 10; d < 30; ++d) inj.targets.push_back(sim::device_id_for(d));
        inj.magnitude = magnitude;
        inj.seed = mix_seed(cfg.seed, 13);
        return sim::inject_attack(sim::generate_fleet(fc), inj, params);
    });

    const hmm::HmmModel stage_model = scenario_stage(2, "stage-model", [&] {
        std::vector<hmm::ObservationSeq> sequences;
        for (const sim::DeviceRecord& rec : training.devices)
            sequences.push_back(
                trust::build_stage_sequence(training, rec.device_id, model, registry, params));
        return trust::train_stage_hmm(sequences, model.hmm);
    });

    std::string device;
    const sim::Fleet current = scenario_stage(2, "current-fleet", [&] {
        sim::FleetConfig fc;
        fc.size = 40;
        fc.seed = mix_seed(cfg.seed, 12);
        fc.params = params;
        device = sim::device_id_for(10);
        sim::Injection inj;
        inj.attack = sim::AttackLabel::info_leak_trojan;
        for (int d = 8; d < 16; ++d) inj.targets.push_back(sim::device_id_for(d));
        inj.magnitude = magnitude;
        inj.seed = mix_seed(cfg.seed, 14);
        return sim::inject_attack(sim::generate_fleet(fc), inj, params);
    });

    return scenario_stage(2, "decoding", [&] {
        const hmm::ObservationSeq seq =
            trust::build_stage_sequence(current, device, model, registry, params);
        return trust::backward_trust_hmm(seq, stage_model, trust::stage_mask(), model);
    });
}

inline int cmd_run_scenario(const RunConfig& cfg, std::ostream& out) {
    if (cfg.scenario != 1 && cfg.scenario != 2)
        throw UsageError("scenario must be 1 or 2");
    const trust::RootCauseReport report =
        cfg.scenario == 1 ? scenario_accelerated_failure(cfg) : scenario_key_leak(cfg);

    ensure_fresh(cfg, {"report.json", "summary.txt", "meta.json"});
    const std::string table = render_report(report);
    write_file((cfg.out_dir / "report.json").string(),
                       report_with_provenance(report, cfg));
    write_file((cfg.out_dir / "summary.txt").string(), table);
    write_meta(cfg);
    out << table;
    return 0;
}

inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
    const std::filesystem::path path = require_input(cfg, "report");
    trust::RootCauseReport report;
    try {
        report = trust::report_from_json(nlohmann::json::parse(read_file(path.string())));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("report file '" + path.string() + "' is not valid json: " + e.what());
    } catch (const trust::BadModelFile& e) {
        throw InputError("report file '" + path.string() + "' is not a valid report: " +
                         e.what());
    }
    out << render_report(report);
    return 0;
}

// ---- Entry point -------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const FileError*>(&e) ||
        dynamic_cast<const sim::BadConfig*>(&e) || dynamic_cast<const sim::UnknownAttack*>(&e) ||
        dynamic_cast<const sim::NoTargets*>(&e) || dynamic_cast<const sim::BadFleetFile*>(&e) ||
        dynamic_cast<const sim::UnknownStage*>(&e) ||
        dynamic_cast<const sim::IncompleteRecord*>(&e) ||
        dynamic_cast<const anomaly::BadRegistryFile*>(&e) ||
        dynamic_cast<const anomaly::DegenerateInput*>(&e) ||
        dynamic_cast<const anomaly::UnknownFeature*>(&e))
        return 2;
    if (dynamic_cast<const trust::BadModelFile*>(&e) ||
        dynamic_cast<const trust::InvalidUpdate*>(&e) ||
        dynamic_cast<const trust::UnknownObservation*>(&e) ||
        dynamic_cast<const trust::BadEngineConfig*>(&e) ||
        dynamic_cast<const hmm::BadModel*>(&e) || dynamic_cast<const hmm::BadModelFile*>(&e) ||
        dynamic_cast<const hmm::MissingStageLabels*>(&e) ||
        dynamic_cast<const hmm::MaskTooRestrictive*>(&e) ||
        dynamic_cast<const mln::BadKb*>(&e) || dynamic_cast<const mln::BadKbFile*>(&e) ||
        dynamic_cast<const mln::ClauseParseError*>(&e) ||
        dynamic_cast<const mln::DomainTooLarge*>(&e) ||
        dynamic_cast<const pgm::BadSpec*>(&e) || dynamic_cast<const pgm::CycleDetected*>(&e) ||
        dynamic_cast<const pgm::BadProbabilityRow*>(&e) ||
        dynamic_cast<const pgm::MissingCptRow*>(&e) ||
        dynamic_cast<const pgm::BadNetworkFile*>(&e))
        return 4;
    return 3;
}

inline int run_command(const RunConfig& cfg, std::ostream& out) {
    if (cfg.command == "simulate") return cmd_simulate(cfg, out);
    if (cfg.command == "inject") return cmd_inject(cfg, out);
    if (cfg.command == "detect") return cmd_detect(cfg, out);
    if (cfg.command == "infer") return cmd_infer(cfg, out);
    if (cfg.command == "extend") return cmd_extend(cfg, out);
    if (cfg.command == "run-scenario") return cmd_run_scenario(cfg, out);
    if (cfg.command == "report") return cmd_report(cfg, out);
    throw UsageError("unknown command '" + cfg.command + "'");
}

inline int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"desk-scale digital twin for semiconductor lifecycle assurance"};
    app.name("siltwin");
    app.require_subcommand(1);

    std::string config_path;
    std::string seed_flag;
    std::string out_flag;
    std::string engine_flag;
    int scenario_flag = 0;
    bool force = false;

    const auto add_common = [&](CLI::App* sub, bool with_engine, bool with_scenario) {
        sub->add_option("--config", config_path, "json run configuration file");
        sub->add_option("--seed", seed_flag, "rng seed; overrides the config value");
        sub->add_option("--out", out_flag, "output directory");
        sub->add_flag("--force", force, "overwrite existing output files");
        if (with_engine)
            sub->add_option("--engine", engine_flag, "inference engine")
                ->check(CLI::IsMember({"bn", "hmm", "mln"}));
        if (with_scenario) sub->add_option("--scenario", scenario_flag, "scenario number");
    };
    struct Command {
        const char* name;
        const char* blurb;
        bool engine;
        bool scenario;
    };
    const Command commands[] = {
        {"simulate", "generate a lifecycle fleet with its test records", false, false},
        {"inject", "apply configured attacks to an existing fleet", false, false},
        {"detect", "run the anomaly detectors and write an evidence vector", false, false},
        {"infer", "rank root causes for a device under test", true, false},
        {"extend", "fold a knowledge update into the threat model", false, false},
        {"run-scenario", "run a canned end-to-end investigation", false, true},
        {"report", "render a stored report as a table", false, false},
    };
    for (const Command& c : commands)
        add_common(app.add_subcommand(c.name, c.blurb), c.engine, c.scenario);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    std::string command;
    for (const CLI::App* sub : app.get_subcommands()) command = sub->get_name();

    try {
        const RunConfig cfg = load_run_config(command, config_path, seed_flag, out_flag,
                                              engine_flag, scenario_flag, force);
        return run_command(cfg, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace siltwin::cli
