#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siltwin/anomaly/extract.hpp"
#include "siltwin/common/error.hpp"
#include "siltwin/pgm/network.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::trust {

SILTWIN_DEFINE_ERROR(UnknownObservation);
SILTWIN_DEFINE_ERROR(InvalidUpdate);
SILTWIN_DEFINE_ERROR(BadModelFile);

inline constexpr double kDefaultFeaturePrior = 0.05;
inline constexpr double kDefaultCausePrior = 0.05;

// Tier-1 node label inside instantiated networks. The report keeps the
// human-readable observation description separately.
inline constexpr const char* kObservationNode = "observation";

struct Cause {
    std::string name;
    sim::StageId origin = sim::StageId::spec;
    std::string actor = "none";
};

// Parameters from which the three-tier network is materialized: root
// feature nodes feed cause nodes feed the single observation node, with
// noisy-OR rows built from the priors and lift weights below.
struct BnTemplate {
    std::map<std::string, double> feature_priors;  // P(feature anomalous)
    std::map<std::string, double> cause_priors;    // P(cause active), leak term
    double feature_lift = 0.6;    // pull of one anomalous parent feature
    double cause_lift = 0.9;      // pull of one active cause on the observation
    double observation_leak = 0.02;
};

// Stage checkpoints a test sequence walks through, with the state and
// symbol alphabets of the lifecycle compromise model.
struct HmmTemplate {
    std::vector<std::string> stages;
    std::vector<std::string> states;
    std::vector<std::string> symbols;
};

struct MlnTemplate {
    double implication_weight = 1.5;  // anomaly-implies-cause clauses
    double cause_bias = -1.0;         // unit clause on each cause atom
};

struct ThreatModel {
    std::vector<Cause> causes;
    anomaly::Relationships relationships;  // cause -> related data items
    std::map<std::string, std::vector<std::string>> observations;  // obs -> causes
    BnTemplate bn;
    HmmTemplate hmm;
    MlnTemplate mln;
};

// Three-tier structure restricted to one observation's candidate causes.
struct CausalTemplate {
    std::string observation;
    std::vector<std::string> causes;    // tier-2, sorted
    std::vector<std::string> features;  // tier-3 roots, sorted union
    std::map<std::string, std::vector<std::string>> parents;  // cause -> features
};

struct KnowledgeUpdate {
    std::string cause;
    sim::StageId origin = sim::StageId::spec;  // used only for a new cause
    std::string actor = "none";
    std::vector<std::string> features;  // parent features to relate
    std::map<std::string, double> feature_priors;
    double cause_prior = kDefaultCausePrior;
};

inline const Cause* find_cause(const ThreatModel& model, const std::string& name) {
    for (const Cause& c : model.causes)
        if (c.name == name) return &c;
    return nullptr;
}

// snake_case or kebab-case -> CamelCase, for logic constants and predicates.
inline std::string camel_name(const std::string& name) {
    std::string out;
    bool upper = true;
    for (char ch : name) {
        if (ch == '_' || ch == '-') {
            upper = true;
            continue;
        }
        out += upper ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch))) : ch;
        upper = false;
    }
    return out;
}

inline bool feature_in_catalog(const std::string& feature, const sim::ProcessParams& params) {
    if (anomaly::is_count_feature(feature)) return true;
    for (const sim::ItemSpec& spec : sim::catalog(params))
        if (spec.name == feature) return true;
    return false;
}

inline void validate_threat_model(const ThreatModel& model,
                                  const sim::ProcessParams& params = sim::default_params()) {
    std::set<std::string> names;
    for (const Cause& c : model.causes) {
        if (c.name.empty()) throw InvalidUpdate("cause with empty name");
        if (!names.insert(c.name).second)
            throw InvalidUpdate("duplicate cause '" + c.name + "'");
        auto it = model.relationships.find(c.name);
        if (it == model.relationships.end() || it->second.empty())
            throw InvalidUpdate("cause '" + c.name + "' has no related features");
    }
    for (const auto& [cause, features] : model.relationships) {
        if (!names.count(cause))
            throw InvalidUpdate("relationships name unknown cause '" + cause + "'");
        for (const std::string& f : features)
            if (!feature_in_catalog(f, params))
                throw InvalidUpdate("feature '" + f + "' is not in the data-item catalog");
    }
    for (const auto& [obs, causes] : model.observations) {
        if (causes.empty()) throw InvalidUpdate("observation '" + obs + "' lists no causes");
        for (const std::string& c : causes)
            if (!names.count(c))
                throw InvalidUpdate("observation '" + obs + "' names unknown cause '" + c + "'");
    }
    for (const auto& [f, p] : model.bn.feature_priors)
        if (!(p > 0.0) || !(p < 1.0))
            throw InvalidUpdate("feature prior for '" + f + "' must lie in (0, 1)");
    for (const auto& [c, p] : model.bn.cause_priors)
        if (!(p > 0.0) || !(p < 1.0))
            throw InvalidUpdate("cause prior for '" + c + "' must lie in (0, 1)");
    if (model.hmm.stages.empty()) throw InvalidUpdate("stage template is empty");
    for (const std::string& s : model.hmm.stages)
        sim::stage_from_name(s);  // UnknownStage on a bad label
}

inline ThreatModel default_threat_model() {
    ThreatModel m;
    for (int i = 1; i <= static_cast<int>(sim::AttackLabel::overproduced); ++i) {
        sim::AttackLabel a = static_cast<sim::AttackLabel>(i);
        m.causes.push_back({sim::attack_name(a), sim::attack_origin_stage(a),
                            sim::actor_name(sim::attack_actor(a))});
    }
    m.relationships = anomaly::default_relationships();
    m.observations = {
        {"accelerated-failure", {"parametric-trojan", "recycled", "defective-shipped"}},
        {"key-leak", {"unintentional-leak", "info-leak-trojan"}},
    };
    for (const auto& [cause, features] : m.relationships) {
        m.bn.cause_priors[cause] = kDefaultCausePrior;
        for (const std::string& f : features) m.bn.feature_priors[f] = kDefaultFeaturePrior;
    }
    m.hmm.stages = {"spec",        "logic-design", "functional-verification",
                    "synthesis",   "dft-insertion", "formal-check",
                    "wafer-sort",  "package-test",  "burn-in",
                    "in-field"};
    m.hmm.states = {"clean", "compromised"};
    m.hmm.symbols = {"pass", "anomaly", "leak"};
    return m;
}

inline std::vector<std::string> candidate_causes(const std::string& observation,
                                                 const ThreatModel& model) {
    auto it = model.observations.find(observation);
    if (it == model.observations.end())
        throw UnknownObservation("observation '" + observation + "' is not registered");
    return it->second;
}

inline CausalTemplate make_template(const ThreatModel& model, const std::string& observation,
                                    const std::vector<std::string>& causes) {
    CausalTemplate tpl;
    tpl.observation = observation;
    std::set<std::string> cause_set(causes.begin(), causes.end());
    std::set<std::string> feature_set;
    for (const std::string& c : cause_set) {
        auto it = model.relationships.find(c);
        if (it == model.relationships.end() || it->second.empty())
            throw InvalidUpdate("cause '" + c + "' has no related features");
        std::vector<std::string> feats(it->second.begin(), it->second.end());
        std::sort(feats.begin(), feats.end());
        feature_set.insert(feats.begin(), feats.end());
        tpl.parents[c] = std::move(feats);
    }
    tpl.causes.assign(cause_set.begin(), cause_set.end());
    tpl.features.assign(feature_set.begin(), feature_set.end());
    return tpl;
}

// Binary network over the template: noisy-OR rows on the cause and
// observation nodes, independent priors on the feature roots.
inline pgm::BayesNet instantiate_template(const CausalTemplate& tpl, const BnTemplate& bn) {
    auto prior_of = [](const std::map<std::string, double>& table, const std::string& key,
                       double fallback) {
        auto it = table.find(key);
        return it == table.end() ? fallback : it->second;
    };
    std::vector<pgm::Variable> vars;
    std::vector<std::vector<std::string>> parents;
    for (const std::string& f : tpl.features) {
        vars.push_back({f, {"no", "yes"}});
        parents.push_back({});
    }
    for (const std::string& c : tpl.causes) {
        vars.push_back({c, {"no", "yes"}});
        parents.push_back(tpl.parents.at(c));
    }
    vars.push_back({kObservationNode, {"no", "yes"}});
    parents.push_back(tpl.causes);

    pgm::BayesNet structure = pgm::make_structure(vars, parents);
    std::vector<pgm::Cpt> cpts = structure.cpts();
    std::size_t v = 0;
    for (const std::string& f : tpl.features) {
        double p = prior_of(bn.feature_priors, f, kDefaultFeaturePrior);
        cpts[v].rows[0] = {1.0 - p, p};
        ++v;
    }
    for (const std::string& c : tpl.causes) {
        double base = prior_of(bn.cause_priors, c, kDefaultCausePrior);
        for (std::size_t r = 0; r < cpts[v].rows.size(); ++r) {
            int k = std::popcount(r);
            double p = 1.0 - (1.0 - base) * std::pow(1.0 - bn.feature_lift, k);
            cpts[v].rows[r] = {1.0 - p, p};
        }
        ++v;
    }
    for (std::size_t r = 0; r < cpts[v].rows.size(); ++r) {
        int k = std::popcount(r);
        double p = 1.0 - (1.0 - bn.observation_leak) * std::pow(1.0 - bn.cause_lift, k);
        cpts[v].rows[r] = {1.0 - p, p};
    }
    return pgm::BayesNet(structure.variables(), std::move(cpts));
}

inline ThreatModel forward_trust_extend(const ThreatModel& model, const KnowledgeUpdate& update,
                                        const sim::ProcessParams& params = sim::default_params()) {
    if (update.cause.empty()) throw InvalidUpdate("update names no cause");
    ThreatModel out = model;
    bool is_new = find_cause(out, update.cause) == nullptr;
    if (is_new && update.features.empty() &&
        (!out.relationships.count(update.cause) || out.relationships.at(update.cause).empty()))
        throw InvalidUpdate("a new cause needs at least one related feature");
    if (is_new) out.causes.push_back({update.cause, update.origin, update.actor});
    for (const std::string& f : update.features) {
        if (!feature_in_catalog(f, params))
            throw InvalidUpdate("feature '" + f + "' is not in the data-item catalog");
        std::vector<std::string>& rel = out.relationships[update.cause];
        if (std::find(rel.begin(), rel.end(), f) == rel.end()) rel.push_back(f);
        auto it = update.feature_priors.find(f);
        out.bn.feature_priors.emplace(f, it == update.feature_priors.end()
                                             ? kDefaultFeaturePrior
                                             : it->second);
    }
    out.bn.cause_priors.emplace(update.cause, update.cause_prior);
    validate_threat_model(out, params);
    return out;
}

// ---- serialization -----------------------------------------------------

inline nlohmann::json threat_model_to_json(const ThreatModel& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["causes"] = nlohmann::json::array();
    for (const Cause& c : m.causes)
        j["causes"].push_back({{"name", c.name},
                               {"origin", sim::stage_name(c.origin)},
                               {"actor", c.actor}});
    j["relationships"] = m.relationships;
    j["observations"] = m.observations;
    j["bn_template"] = {{"feature_priors", m.bn.feature_priors},
                        {"cause_priors", m.bn.cause_priors},
                        {"feature_lift", m.bn.feature_lift},
                        {"cause_lift", m.bn.cause_lift},
                        {"observation_leak", m.bn.observation_leak}};
    j["hmm_template"] = {{"stages", m.hmm.stages},
                         {"states", m.hmm.states},
                         {"symbols", m.hmm.symbols}};
    j["mln_template"] = {{"implication_weight", m.mln.implication_weight},
                         {"cause_bias", m.mln.cause_bias}};
    return j;
}

inline ThreatModel threat_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != 1)
            throw BadModelFile("unsupported threat model format version");
        ThreatModel m;
        for (const auto& c : j.at("causes"))
            m.causes.push_back({c.at("name").get<std::string>(),
                                sim::stage_from_name(c.at("origin").get<std::string>()),
                                c.at("actor").get<std::string>()});
        m.relationships = j.at("relationships").get<anomaly::Relationships>();
        m.observations =
            j.at("observations").get<std::map<std::string, std::vector<std::string>>>();
        const auto& bn = j.at("bn_template");
        m.bn.feature_priors = bn.at("feature_priors").get<std::map<std::string, double>>();
        m.bn.cause_priors = bn.at("cause_priors").get<std::map<std::string, double>>();
        m.bn.feature_lift = bn.at("feature_lift").get<double>();
        m.bn.cause_lift = bn.at("cause_lift").get<double>();
        m.bn.observation_leak = bn.at("observation_leak").get<double>();
        const auto& hmm = j.at("hmm_template");
        m.hmm.stages = hmm.at("stages").get<std::vector<std::string>>();
        m.hmm.states = hmm.at("states").get<std::vector<std::string>>();
        m.hmm.symbols = hmm.at("symbols").get<std::vector<std::string>>();
        const auto& mln = j.at("mln_template");
        m.mln.implication_weight = mln.at("implication_weight").get<double>();
        m.mln.cause_bias = mln.at("cause_bias").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw BadModelFile(std::string("malformed threat model: ") + e.what());
    }
}

inline std::string save_threat_model(const ThreatModel& m) {
    return threat_model_to_json(m).dump(2) + "\n";
}

// A model whose relationships use extra data items only loads against the
// params that declare them.
inline ThreatModel load_threat_model(const std::string& text,
                                     const sim::ProcessParams& params = sim::default_params()) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BadModelFile(std::string("malformed threat model: ") + e.what());
    }
    ThreatModel m = threat_model_from_json(j);
    validate_threat_model(m, params);
    return m;
}

}  // namespace siltwin::trust
