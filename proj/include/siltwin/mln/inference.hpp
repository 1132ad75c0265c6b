#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "siltwin/common/rng.hpp"
#include "siltwin/mln/ground.hpp"

namespace siltwin::mln {

SILTWIN_DEFINE_ERROR(UnsatisfiableEvidence);

// Atoms fixed by evidence; nullopt entries are free.
using PartialWorld = std::vector<std::optional<bool>>;

struct WorldProbability {
    double probability = 0.0;
    bool hard_violation = false;
};

struct WalkParams {
    double noise = 0.2;
    int restarts = 10;
    int flips_per_atom = 10;
};

namespace detail {

// Hard formulas act as filters: a +inf formula requires every grounding
// true, a -inf formula requires every grounding false.
inline bool satisfies_hard(const GroundMrf& mrf, const World& world) {
    for (const GroundClause& gc : mrf.ground_clauses) {
        const Formula& f = mrf.formulas[static_cast<std::size_t>(gc.formula)];
        if (!f.hard()) continue;
        bool sat = eval_clause(gc.expr, world);
        if (f.weight > 0 ? !sat : sat) return false;
    }
    return true;
}

inline double soft_score(const GroundMrf& mrf, const World& world) {
    double score = 0.0;
    for (const GroundClause& gc : mrf.ground_clauses) {
        const Formula& f = mrf.formulas[static_cast<std::size_t>(gc.formula)];
        if (f.hard()) continue;
        if (eval_clause(gc.expr, world)) score += f.weight;
    }
    return score;
}

// Enumerates completions of the evidence in lexicographic order of the
// full truth vector (false < true, atom 0 most significant).
template <typename Fn>
void for_each_completion(int n_atoms, const PartialWorld& evidence, Fn fn) {
    std::vector<int> free_atoms;
    for (int i = 0; i < n_atoms; ++i)
        if (!evidence[static_cast<std::size_t>(i)].has_value()) free_atoms.push_back(i);
    World world(static_cast<std::size_t>(n_atoms), false);
    for (int i = 0; i < n_atoms; ++i)
        if (evidence[static_cast<std::size_t>(i)].has_value())
            world[static_cast<std::size_t>(i)] = *evidence[static_cast<std::size_t>(i)];

    std::size_t n_free = free_atoms.size();
    for (std::uint64_t counter = 0;; ++counter) {
        for (std::size_t k = 0; k < n_free; ++k) {
            bool bit = (counter >> (n_free - 1 - k)) & 1;
            world[static_cast<std::size_t>(free_atoms[k])] = bit;
        }
        fn(world);
        if (n_free == 0 || counter + 1 == (std::uint64_t{1} << n_free)) return;
    }
}

inline void check_cap(const GroundMrf& mrf, int cap) {
    if (mrf.n_atoms() > cap)
        throw DomainTooLarge("exact inference over " + std::to_string(mrf.n_atoms()) +
                             " atoms exceeds the cap of " + std::to_string(cap));
}

}  // namespace detail

// P(X = x) = exp(sum_i w_i n_i(x)) / Z over hard-satisfying worlds.
// A world violating a hard formula gets probability 0 with the violation
// flagged instead of an error.
inline WorldProbability world_probability(const GroundMrf& mrf, const World& world,
                                          int cap = kExactInferenceCap) {
    detail::check_cap(mrf, cap);
    if (world.size() != mrf.ground_atoms.size())
        throw BadKb("world covers " + std::to_string(world.size()) + " of " +
                    std::to_string(mrf.ground_atoms.size()) + " atoms");
    if (!detail::satisfies_hard(mrf, world)) return {0.0, true};

    // Max-shifted log-sum-exp over the feasible worlds.
    double max_score = -std::numeric_limits<double>::infinity();
    PartialWorld no_evidence(mrf.ground_atoms.size(), std::nullopt);
    detail::for_each_completion(mrf.n_atoms(), no_evidence, [&](const World& w) {
        if (detail::satisfies_hard(mrf, w))
            max_score = std::max(max_score, detail::soft_score(mrf, w));
    });
    double z = 0.0;
    detail::for_each_completion(mrf.n_atoms(), no_evidence, [&](const World& w) {
        if (detail::satisfies_hard(mrf, w))
            z += std::exp(detail::soft_score(mrf, w) - max_score);
    });
    return {std::exp(detail::soft_score(mrf, world) - max_score) / z, false};
}

// Probability of every world in lexicographic order of the truth vector
// (atom 0 most significant, false < true). Hard-violating worlds get 0.
// One entry per world; entries sum to 1.
inline std::vector<double> world_distribution(const GroundMrf& mrf,
                                              int cap = kExactInferenceCap) {
    detail::check_cap(mrf, cap);
    PartialWorld no_evidence(mrf.ground_atoms.size(), std::nullopt);
    double max_score = -std::numeric_limits<double>::infinity();
    detail::for_each_completion(mrf.n_atoms(), no_evidence, [&](const World& w) {
        if (detail::satisfies_hard(mrf, w))
            max_score = std::max(max_score, detail::soft_score(mrf, w));
    });
    if (max_score == -std::numeric_limits<double>::infinity())
        throw UnsatisfiableEvidence("no world satisfies the hard constraints");

    std::vector<double> dist;
    dist.reserve(std::size_t{1} << mrf.n_atoms());
    double z = 0.0;
    detail::for_each_completion(mrf.n_atoms(), no_evidence, [&](const World& w) {
        double m = detail::satisfies_hard(mrf, w)
                       ? std::exp(detail::soft_score(mrf, w) - max_score)
                       : 0.0;
        dist.push_back(m);
        z += m;
    });
    for (double& m : dist) m /= z;
    return dist;
}

// P(atom_i = true | evidence, hard constraints), by enumeration.
inline std::vector<double> enumerate_marginals(const GroundMrf& mrf,
                                               const PartialWorld& evidence,
                                               int cap = kExactInferenceCap) {
    detail::check_cap(mrf, cap);
    double max_score = -std::numeric_limits<double>::infinity();
    detail::for_each_completion(mrf.n_atoms(), evidence, [&](const World& w) {
        if (detail::satisfies_hard(mrf, w))
            max_score = std::max(max_score, detail::soft_score(mrf, w));
    });
    if (max_score == -std::numeric_limits<double>::infinity())
        throw UnsatisfiableEvidence("no completion satisfies the hard constraints");

    double z = 0.0;
    std::vector<double> mass(mrf.ground_atoms.size(), 0.0);
    detail::for_each_completion(mrf.n_atoms(), evidence, [&](const World& w) {
        if (!detail::satisfies_hard(mrf, w)) return;
        double m = std::exp(detail::soft_score(mrf, w) - max_score);
        z += m;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i]) mass[i] += m;
    });
    for (double& m : mass) m /= z;
    return mass;
}

// Most probable world consistent with the evidence.
//
// Exact enumeration under the cap (ties resolve to the lexicographically
// least truth vector); beyond the cap, seeded stochastic local search over
// the free atoms with hard clauses dominating the objective. The search
// result is best-effort; only the exact path is guaranteed optimal.
inline World map_inference(const GroundMrf& mrf, const PartialWorld& evidence,
                           std::uint64_t seed = 1, int cap = kExactInferenceCap,
                           const WalkParams& params = {}) {
    if (evidence.size() != mrf.ground_atoms.size())
        throw BadKb("evidence covers " + std::to_string(evidence.size()) + " of " +
                    std::to_string(mrf.ground_atoms.size()) + " atoms");

    if (mrf.n_atoms() <= cap) {
        World best;
        double best_score = 0.0;
        bool found = false;
        detail::for_each_completion(mrf.n_atoms(), evidence, [&](const World& w) {
            if (!detail::satisfies_hard(mrf, w)) return;
            double s = detail::soft_score(mrf, w);
            if (!found || s > best_score) {
                found = true;
                best_score = s;
                best = w;
            }
        });
        if (!found)
            throw UnsatisfiableEvidence("no completion satisfies the hard constraints");
        return best;
    }

    // Local search. Hard clauses get a weight larger than any possible
    // soft total; negative-weight clauses are flipped into positive-weight
    // clauses over their negation so every clause "wants" to be satisfied.
    struct SearchClause {
        const ClauseExpr* expr;
        double weight;
        bool negate;
        bool hard;
        std::vector<int> free_atoms;
    };
    double soft_total = 0.0;
    for (const GroundClause& gc : mrf.ground_clauses) {
        const Formula& f = mrf.formulas[static_cast<std::size_t>(gc.formula)];
        if (!f.hard()) soft_total += std::abs(f.weight);
    }
    const double hard_weight = 2.0 * soft_total + 1e6;

    std::vector<SearchClause> clauses;
    for (const GroundClause& gc : mrf.ground_clauses) {
        const Formula& f = mrf.formulas[static_cast<std::size_t>(gc.formula)];
        SearchClause sc;
        sc.expr = &gc.expr;
        sc.hard = f.hard();
        if (sc.hard) {
            sc.weight = hard_weight;
            sc.negate = f.weight < 0;
        } else {
            sc.weight = std::abs(f.weight);
            sc.negate = f.weight < 0;
        }
        for (int a : gc.atoms)
            if (!evidence[static_cast<std::size_t>(a)].has_value())
                sc.free_atoms.push_back(a);
        if (sc.weight > 0.0) clauses.push_back(std::move(sc));
    }

    auto clause_sat = [](const SearchClause& sc, const World& w) {
        bool v = eval_clause(*sc.expr, w);
        return sc.negate ? !v : v;
    };
    auto total_score = [&](const World& w) {
        double s = 0.0;
        for (const SearchClause& sc : clauses)
            if (clause_sat(sc, w)) s += sc.weight;
        return s;
    };

    std::vector<int> free_atoms;
    for (std::size_t i = 0; i < evidence.size(); ++i)
        if (!evidence[i].has_value()) free_atoms.push_back(static_cast<int>(i));

    Rng rng(seed);
    World best;
    double best_score = -1.0;
    bool best_feasible = false;
    int max_flips = params.flips_per_atom * std::max<int>(1, mrf.n_atoms());

    for (int restart = 0; restart < params.restarts; ++restart) {
        World world(mrf.ground_atoms.size(), false);
        for (std::size_t i = 0; i < evidence.size(); ++i)
            if (evidence[i].has_value()) world[i] = *evidence[i];
        for (int a : free_atoms) world[static_cast<std::size_t>(a)] = rng.below(2) == 1;

        for (int flip = 0; flip < max_flips; ++flip) {
            std::vector<const SearchClause*> unsat;
            for (const SearchClause& sc : clauses)
                if (!sc.free_atoms.empty() && !clause_sat(sc, world)) unsat.push_back(&sc);
            if (unsat.empty()) break;
            const SearchClause& sc = *unsat[rng.below(unsat.size())];

            int chosen;
            if (rng.uniform() < params.noise) {
                chosen = sc.free_atoms[rng.below(sc.free_atoms.size())];
            } else {
                chosen = sc.free_atoms[0];
                double chosen_score = -std::numeric_limits<double>::infinity();
                for (int a : sc.free_atoms) {
                    World w2 = world;
                    w2[static_cast<std::size_t>(a)] = !w2[static_cast<std::size_t>(a)];
                    double s = total_score(w2);
                    if (s > chosen_score) {
                        chosen_score = s;
                        chosen = a;
                    }
                }
            }
            world[static_cast<std::size_t>(chosen)] = !world[static_cast<std::size_t>(chosen)];

            bool feasible = detail::satisfies_hard(mrf, world);
            double s = detail::soft_score(mrf, world);
            if (feasible && (!best_feasible || s > best_score)) {
                best_feasible = true;
                best_score = s;
                best = world;
            }
        }
    }
    if (!best_feasible)
        throw UnsatisfiableEvidence(
            "local search found no completion satisfying the hard constraints");
    return best;
}

}  // namespace siltwin::mln
