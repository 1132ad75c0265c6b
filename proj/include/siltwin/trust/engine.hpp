#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "siltwin/anomaly/extract.hpp"
#include "siltwin/hmm/algorithms.hpp"
#include "siltwin/mln/inference.hpp"
#include "siltwin/pgm/inference.hpp"
#include "siltwin/pgm/learning.hpp"
#include "siltwin/trust/report.hpp"
#include "siltwin/trust/threat_model.hpp"

namespace siltwin::trust {

SILTWIN_DEFINE_ERROR(InsufficientHistory);
SILTWIN_DEFINE_ERROR(BadEngineConfig);

using anomaly::register_detector;
using mln::UnsatisfiableEvidence;

// Per-feature anomaly verdict: OR over every detector's item.
inline std::map<std::string, bool> feature_truths(const anomaly::EvidenceVector& ev) {
    std::map<std::string, bool> out;
    for (const anomaly::EvidenceItem& item : ev.items) {
        auto [it, inserted] = out.emplace(item.feature, item.anomalous);
        if (!inserted) it->second = it->second || item.anomalous;
    }
    return out;
}

namespace detail {

inline void rank_and_attribute(RootCauseReport& r, const ThreatModel& model) {
    std::stable_sort(r.ranked_causes.begin(), r.ranked_causes.end(),
                     [](const RankedCause& a, const RankedCause& b) {
                         if (a.posterior != b.posterior) return a.posterior > b.posterior;
                         return a.cause < b.cause;
                     });
    if (r.ranked_causes.empty()) return;
    if (const Cause* c = find_cause(model, r.ranked_causes[0].cause)) {
        r.implicated_stage = c->origin;
        r.implicated_actor = c->actor;
    }
    r.stage_posterior = r.ranked_causes[0].posterior;
}

}  // namespace detail

// ---- Bayesian-network engine -------------------------------------------

struct BnOptions {
    std::string learner = "map";  // "mle" | "map"
    // Overrides for the template cause priors, e.g. weighting recycling as
    // the far more likely explanation.
    std::map<std::string, double> cause_priors;
    double rate = 0.0;  // online-update blend toward the device under test; 0 disables
    double mle_smoothing = 1.0;
    double prior_strength = 4.0;  // pseudo-count mass per CPT row under "map"
    bool allow_prior_fallback = true;
    anomaly::DetectorRegistry registry = anomaly::default_registry();
    sim::ProcessParams params = sim::default_params();
};

// Final network and evidence of a run, for auditing the reported ranking
// against a reference inference method.
struct BnTrace {
    CausalTemplate tpl;
    pgm::BayesNet net;
    pgm::Evidence evidence;
    bool prior_fallback = false;
};

inline RootCauseReport backward_trust_bn(const std::string& observation,
                                         const std::vector<sim::Fleet>& historical_db,
                                         const sim::Fleet& current,
                                         const std::string& device_id,
                                         const ThreatModel& model, const BnOptions& opts = {},
                                         BnTrace* trace = nullptr) {
    if (opts.learner != "mle" && opts.learner != "map")
        throw BadEngineConfig("unknown learner '" + opts.learner + "'");
    if (opts.rate < 0.0 || opts.rate > 1.0)
        throw BadEngineConfig("rate must lie in [0, 1]");

    std::vector<std::string> causes = candidate_causes(observation, model);
    anomaly::EvidenceVector ev = anomaly::extract_evidence(
        current, device_id, opts.registry, causes, opts.params, model.relationships);

    CausalTemplate tpl = make_template(model, observation, causes);
    BnTemplate bn = model.bn;
    for (const auto& [cause, prior] : opts.cause_priors) bn.cause_priors[cause] = prior;
    pgm::BayesNet prior_net = instantiate_template(tpl, bn);

    std::set<std::string> candidate_set(causes.begin(), causes.end());
    std::map<std::string, int> labeled;
    for (const std::string& c : tpl.causes) labeled[c] = 0;
    std::map<std::string, int> feature_seen;
    for (const std::string& f : tpl.features) feature_seen[f] = 0;

    pgm::Dataset dataset;
    for (const sim::Fleet& fleet : historical_db) {
        for (const sim::DeviceRecord& rec : fleet.devices) {
            anomaly::EvidenceVector dev_ev = anomaly::extract_evidence(
                fleet, rec.device_id, opts.registry, causes, opts.params,
                model.relationships);
            std::map<std::string, bool> truths = feature_truths(dev_ev);
            std::string attack = sim::attack_name(rec.ground_truth.attack);

            pgm::Assignment row;
            row.reserve(prior_net.size());
            for (const std::string& f : tpl.features) {
                auto it = truths.find(f);
                if (it != truths.end()) {
                    row.push_back(it->second ? 1 : 0);
                    ++feature_seen[f];
                } else {
                    row.push_back(0);  // item predates the catalog entry
                }
            }
            for (const std::string& c : tpl.causes) {
                bool active = (attack == c);
                row.push_back(active ? 1 : 0);
                if (active) ++labeled[c];
            }
            row.push_back(candidate_set.count(attack) ? 1 : 0);
            dataset.push_back(std::move(row));
        }
    }

    std::vector<std::string> unlabeled;
    for (const auto& [c, n] : labeled)
        if (n == 0) unlabeled.push_back(c);

    std::string learner = opts.learner;
    bool fallback = false;
    if (learner == "mle" && !unlabeled.empty()) {
        if (!opts.allow_prior_fallback) {
            std::string joined;
            for (const std::string& c : unlabeled) joined += (joined.empty() ? "" : ", ") + c;
            throw InsufficientHistory("no labeled history for: " + joined);
        }
        learner = "map";
        fallback = true;
    }

    pgm::BayesNet net = prior_net;
    if (learner == "mle") {
        net = pgm::learn_mle(prior_net, dataset, opts.mle_smoothing);
    } else {
        pgm::DirichletPriors priors;
        priors.rows.resize(prior_net.size());
        for (std::size_t i = 0; i < prior_net.size(); ++i) {
            const pgm::Cpt& c = prior_net.cpt(static_cast<int>(i));
            priors.rows[i] = c.rows;
            for (auto& row : priors.rows[i])
                for (double& x : row) x *= opts.prior_strength;
        }
        net = pgm::learn_map(prior_net, dataset, priors);
    }

    // Roots never observed in history keep their template priors instead
    // of a smoothing artifact.
    std::vector<std::string> unseen;
    for (const std::string& f : tpl.features)
        if (feature_seen[f] == 0) unseen.push_back(f);
    if (!unseen.empty()) {
        std::vector<pgm::Cpt> cpts = net.cpts();
        for (const std::string& f : unseen) {
            int idx = net.variable_index(f);
            cpts[static_cast<std::size_t>(idx)] = prior_net.cpt(idx);
        }
        net = pgm::BayesNet(net.variables(), std::move(cpts));
    }

    pgm::Evidence evidence;
    evidence.assignments[kObservationNode] = "yes";
    std::set<std::string> feature_set(tpl.features.begin(), tpl.features.end());
    for (const auto& [feature, truth] : feature_truths(ev))
        if (feature_set.count(feature))
            evidence.assignments[feature] = truth ? "yes" : "no";

    if (opts.rate > 0.0) {
        pgm::MapResult imputed = pgm::map_assignment(net, evidence);
        net = pgm::update_cpt(net, {imputed.assignment}, opts.rate);
    }

    RootCauseReport r;
    r.observation = observation;
    r.engine = "bn";
    r.evidence = ev;
    r.exclusive = false;
    for (const std::string& c : tpl.causes) {
        pgm::Posterior post = pgm::infer_posterior(net, c, evidence);
        r.ranked_causes.push_back({c, post.distribution[1]});
    }
    detail::rank_and_attribute(r, model);

    std::string note = "causes are not mutually exclusive; posteriors are per-cause marginals";
    if (fallback) {
        note += "; no labeled history for";
        for (const std::string& c : unlabeled) note += " " + c;
        note += ": fell back to learning against the template priors";
    }
    if (!unseen.empty()) {
        note += "; features absent from history kept their template priors:";
        for (const std::string& f : unseen) note += " " + f;
    }
    r.confidence_note = note;

    if (trace != nullptr) {
        trace->tpl = tpl;
        trace->net = net;
        trace->evidence = evidence;
        trace->prior_fallback = fallback;
    }
    return r;
}

// ---- hidden-Markov engine ----------------------------------------------

// The compromised state absorbs: a device never returns to clean.
// Kept above zero only so a leak at the very first checkpoint still
// decodes to a defined path.
inline constexpr double kCleanStartFloor = 1e-6;

inline hmm::ConstraintMask stage_mask() {
    hmm::ConstraintMask m;
    m.fixed_zero_transitions.insert({1, 0});
    // Anomaly and leak readings are compromise signatures: the clean
    // state emits only passing results. Without this the estimator can
    // settle into a basin where the clean state absorbs the anomalies
    // and the decoded change point lands one stage late.
    m.fixed_zero_emissions.insert({0, 1});
    m.fixed_zero_emissions.insert({0, 2});
    return m;
}

inline hmm::HmmModel stage_hmm_start(const HmmTemplate& tpl) {
    if (tpl.states.size() != 2 || tpl.symbols.size() != 3)
        throw hmm::BadModel("stage template expects 2 states and 3 symbols");
    hmm::HmmModel m;
    m.states = tpl.states;
    m.symbols = tpl.symbols;
    m.transition = {{0.9, 0.1}, {0.0, 1.0}};
    m.emission = {{1.0, 0.0, 0.0}, {0.60, 0.25, 0.15}};
    // Starting all but surely clean keeps onset mass in the transition
    // row during estimation instead of leaking into the initial vector.
    m.initial = {1.0 - kCleanStartFloor, kCleanStartFloor};
    return m;
}

inline hmm::HmmModel train_stage_hmm(const std::vector<hmm::ObservationSeq>& sequences,
                                     const HmmTemplate& tpl, int max_iters = 60) {
    hmm::HmmModel m = hmm::learn(sequences, 2, stage_mask(), stage_hmm_start(tpl), max_iters).model;
    // Devices enter the flow clean: nothing exists before specification.
    // Left free, the estimator can push onset mass into the initial
    // vector and the decoder then reads every compromise as congenital.
    m.initial = {1.0 - kCleanStartFloor, kCleanStartFloor};
    return m;
}

// Per-stage symbol from the device's evidence: an anomalous leak-type item
// reads as a leak, any other anomaly as an anomaly, otherwise a pass.
inline hmm::ObservationSeq build_stage_sequence(
    const sim::Fleet& fleet, const std::string& device_id, const ThreatModel& model,
    const anomaly::DetectorRegistry& registry = anomaly::default_registry(),
    const sim::ProcessParams& params = sim::default_params()) {
    std::vector<std::string> causes;
    for (const Cause& c : model.causes) causes.push_back(c.name);
    anomaly::EvidenceVector ev = anomaly::extract_evidence(fleet, device_id, registry, causes,
                                                           params, model.relationships);
    hmm::ObservationSeq seq;
    seq.stage_labels = model.hmm.stages;
    for (const std::string& label : model.hmm.stages) {
        sim::StageId sid = sim::stage_from_name(label);
        int symbol = 0;
        for (const anomaly::EvidenceItem& item : ev.items) {
            if (item.stage != sid || !item.anomalous) continue;
            if (item.feature.find("leak") != std::string::npos) {
                symbol = 2;
                break;
            }
            symbol = 1;
        }
        seq.symbols.push_back(symbol);
    }
    return seq;
}

inline RootCauseReport backward_trust_hmm(const hmm::ObservationSeq& seq,
                                          const hmm::HmmModel& model,
                                          const hmm::ConstraintMask& mask,
                                          const ThreatModel& threat) {
    hmm::validate_model(model);
    for (const auto& [i, j] : mask.fixed_zero_transitions)
        if (model.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0.0)
            throw hmm::BadModel("model violates the transition mask");
    for (const auto& [i, k] : mask.fixed_zero_emissions)
        if (model.emission[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] != 0.0)
            throw hmm::BadModel("model violates the emission mask");
    if (!seq.stage_labels)
        throw hmm::MissingStageLabels("sequence carries no stage labels");

    hmm::DecodedPath path = hmm::decode(model, seq);
    int compromised = 1;
    for (std::size_t s = 0; s < model.states.size(); ++s)
        if (model.states[s] == "compromised") compromised = static_cast<int>(s);
    std::size_t first = path.states.size();
    for (std::size_t t = 0; t < path.states.size(); ++t)
        if (path.states[t] == compromised) {
            first = t;
            break;
        }

    RootCauseReport r;
    r.engine = "hmm";
    r.exclusive = true;
    r.evidence.subject = "stage-sequence";
    if (first == path.states.size()) {
        r.observation = "no compromise detected";
        r.confidence_note = "most likely state path stays clean at every stage";
        return r;
    }
    std::string stage_label = (*seq.stage_labels)[first];
    r.observation = "compromise from stage " + stage_label;
    r.implicated_stage = sim::stage_from_name(stage_label);
    std::vector<const Cause*> at_stage;
    for (const Cause& c : threat.causes)
        if (c.origin == r.implicated_stage) at_stage.push_back(&c);
    if (at_stage.empty()) {
        r.stage_posterior = 1.0;
        r.confidence_note =
            "stage attribution from the most likely state path; no modeled cause enters here";
        return r;
    }
    double share = 1.0 / static_cast<double>(at_stage.size());
    for (const Cause* c : at_stage) r.ranked_causes.push_back({c->name, share});
    std::stable_sort(r.ranked_causes.begin(), r.ranked_causes.end(),
                     [](const RankedCause& a, const RankedCause& b) { return a.cause < b.cause; });
    r.implicated_actor = find_cause(threat, r.ranked_causes[0].cause)->actor;
    r.stage_posterior = 1.0;
    r.confidence_note =
        "stage attribution from the most likely state path; causes entering at this stage "
        "share the attribution uniformly";
    return r;
}

// ---- Markov-logic engine -----------------------------------------------

inline mln::KnowledgeBase build_kb(const ThreatModel& model,
                                   const std::vector<std::string>& causes,
                                   const std::string& device = "Dut") {
    mln::KnowledgeBase kb;
    std::set<std::string> cause_set(causes.begin(), causes.end());
    std::set<std::string> features;
    for (const std::string& c : cause_set) {
        auto it = model.relationships.find(c);
        if (it == model.relationships.end() || it->second.empty())
            throw InvalidUpdate("cause '" + c + "' has no related features");
        features.insert(it->second.begin(), it->second.end());
    }
    kb.sorts["device"] = {device};
    for (const std::string& f : features) kb.sorts["feature"].push_back(camel_name(f));
    kb.predicates.push_back({"Anomalous", {"device", "feature"}});
    for (const std::string& c : cause_set) kb.predicates.push_back({camel_name(c), {"device"}});
    for (const std::string& c : cause_set) {
        std::vector<std::string> feats = model.relationships.at(c);
        std::sort(feats.begin(), feats.end());
        for (const std::string& f : feats) {
            mln::Formula imp;
            imp.weight = model.mln.implication_weight;
            imp.clause_text = "Anomalous(d, " + camel_name(f) + ") => " + camel_name(c) + "(d)";
            kb.formulas.push_back(std::move(imp));
        }
        mln::Formula bias;
        bias.weight = model.mln.cause_bias;
        bias.clause_text = camel_name(c) + "(d)";
        kb.formulas.push_back(std::move(bias));
    }
    mln::validate_kb(kb);
    return kb;
}

struct MlnTrace {
    mln::GroundMrf mrf;
    mln::World map_world;
    std::vector<double> marginals;  // empty when over the exact-inference cap
};

inline RootCauseReport backward_trust_mln(const anomaly::EvidenceVector& ev,
                                          const mln::KnowledgeBase& kb,
                                          const ThreatModel& model,
                                          MlnTrace* trace = nullptr) {
    mln::GroundMrf mrf = mln::ground(kb, mln::kGroundingCap);

    mln::PartialWorld evidence(mrf.ground_atoms.size(), std::nullopt);
    for (const auto& [feature, truth] : feature_truths(ev)) {
        std::string constant = camel_name(feature);
        bool found = false;
        for (std::size_t a = 0; a < mrf.ground_atoms.size(); ++a) {
            const mln::GroundAtom& atom = mrf.ground_atoms[a];
            if (mrf.predicates[static_cast<std::size_t>(atom.predicate)].name != "Anomalous")
                continue;
            if (!atom.args.empty() && atom.args.back() == constant) {
                evidence[a] = truth;
                found = true;
            }
        }
        if (!found)
            throw mln::BadKb("evidence feature '" + feature + "' has no ground atom");
    }

    mln::World map_world = mln::map_inference(mrf, evidence);
    bool exact = mrf.n_atoms() <= mln::kExactInferenceCap;
    std::vector<double> marginals;
    if (exact) marginals = mln::enumerate_marginals(mrf, evidence);

    RootCauseReport r;
    r.engine = "mln";
    r.evidence = ev;
    r.exclusive = false;
    r.observation = "anomaly evidence for " + ev.subject;
    for (const Cause& c : model.causes) {
        std::string predicate = camel_name(c.name);
        for (std::size_t a = 0; a < mrf.ground_atoms.size(); ++a) {
            const mln::GroundAtom& atom = mrf.ground_atoms[a];
            if (mrf.predicates[static_cast<std::size_t>(atom.predicate)].name != predicate)
                continue;
            double posterior = exact ? marginals[a] : (map_world[a] ? 1.0 : 0.0);
            r.ranked_causes.push_back({c.name, posterior});
            break;
        }
    }
    detail::rank_and_attribute(r, model);
    r.confidence_note =
        exact ? "posteriors are enumerated marginals; causes are not mutually exclusive"
              : "MAP-only: the grounding exceeds the exact-inference cap, so the posterior "
                "column reflects the most probable world";

    if (trace != nullptr) {
        trace->mrf = std::move(mrf);
        trace->map_world = std::move(map_world);
        trace->marginals = std::move(marginals);
    }
    return r;
}

}  // namespace siltwin::trust
