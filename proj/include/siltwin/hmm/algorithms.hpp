#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "siltwin/common/rng.hpp"
#include "siltwin/hmm/model.hpp"

namespace siltwin::hmm {

// log P(O | model) by the forward algorithm with per-step scaling.
inline double likelihood(const HmmModel& m, const ObservationSeq& obs) {
    validate_model(m);
    check_sequence(m, obs);
    int n = m.n_states();
    std::size_t len = obs.symbols.size();

    std::vector<double> alpha(static_cast<std::size_t>(n));
    double log_l = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
        int o = obs.symbols[t];
        std::vector<double> next(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) {
            double mass;
            if (t == 0) {
                mass = m.initial[static_cast<std::size_t>(j)];
            } else {
                mass = 0.0;
                for (int i = 0; i < n; ++i)
                    mass += alpha[static_cast<std::size_t>(i)] *
                            m.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
            next[static_cast<std::size_t>(j)] =
                mass * m.emission[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)];
        }
        double scale = 0.0;
        for (double v : next) scale += v;
        if (scale <= 0.0)
            throw ImpossibleSequence("observation at step " + std::to_string(t) +
                                     " has zero probability in every reachable state");
        for (double& v : next) v /= scale;
        alpha = std::move(next);
        log_l += std::log(scale);
    }
    return log_l;
}

// Most probable state path (log-space Viterbi). Ties at each maximization
// go to the lower state index, which makes the decoded path the
// reverse-lexicographically least among all maximizers.
inline DecodedPath decode(const HmmModel& m, const ObservationSeq& obs) {
    validate_model(m);
    check_sequence(m, obs);
    int n = m.n_states();
    std::size_t len = obs.symbols.size();
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    auto log_or_neg_inf = [](double p) { return p > 0.0 ? std::log(p) : kNegInf; };

    std::vector<std::vector<double>> delta(len, std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<std::vector<int>> psi(len, std::vector<int>(static_cast<std::size_t>(n), 0));

    for (int j = 0; j < n; ++j)
        delta[0][static_cast<std::size_t>(j)] =
            log_or_neg_inf(m.initial[static_cast<std::size_t>(j)]) +
            log_or_neg_inf(m.emission[static_cast<std::size_t>(j)]
                                     [static_cast<std::size_t>(obs.symbols[0])]);

    for (std::size_t t = 1; t < len; ++t) {
        for (int j = 0; j < n; ++j) {
            double best = kNegInf;
            int arg = 0;
            for (int i = 0; i < n; ++i) {
                double v = delta[t - 1][static_cast<std::size_t>(i)] +
                           log_or_neg_inf(m.transition[static_cast<std::size_t>(i)]
                                                      [static_cast<std::size_t>(j)]);
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            delta[t][static_cast<std::size_t>(j)] =
                best + log_or_neg_inf(m.emission[static_cast<std::size_t>(j)]
                                                [static_cast<std::size_t>(obs.symbols[t])]);
            psi[t][static_cast<std::size_t>(j)] = arg;
        }
    }

    double best = kNegInf;
    int last = 0;
    for (int j = 0; j < n; ++j) {
        if (delta[len - 1][static_cast<std::size_t>(j)] > best) {
            best = delta[len - 1][static_cast<std::size_t>(j)];
            last = j;
        }
    }
    if (best == kNegInf)
        throw ImpossibleSequence("no state path has positive probability");

    DecodedPath out;
    out.log_probability = best;
    out.states.assign(len, 0);
    out.states[len - 1] = last;
    for (std::size_t t = len - 1; t > 0; --t)
        out.states[t - 1] = psi[t][static_cast<std::size_t>(out.states[t])];
    for (std::size_t t = 1; t < len; ++t)
        if (out.states[t] != out.states[t - 1]) out.change_points.push_back(static_cast<int>(t));
    return out;
}

// ---- constrained Baum-Welch --------------------------------------------

// Either an explicit starting model or a seed for the jittered-uniform
// initializer.
using LearnStart = std::variant<HmmModel, std::uint64_t>;

struct LearnResult {
    HmmModel model;
    ConstraintMask mask;
    // Log-likelihood of the model entering each iteration; length =
    // iterations performed + 1 (the final entry scores the returned model).
    std::vector<double> log_likelihoods;
};

// Near-uniform start point: every unmasked entry gets a seeded jitter of
// up to 5% before renormalization, breaking EM's symmetry between states.
inline HmmModel seeded_model(int n_states, int n_symbols, const ConstraintMask& mask,
                             std::uint64_t seed, std::vector<std::string> state_labels = {},
                             std::vector<std::string> symbol_labels = {}) {
    validate_mask(mask, n_states, n_symbols);
    HmmModel m;
    if (state_labels.empty())
        for (int i = 0; i < n_states; ++i) state_labels.push_back("s" + std::to_string(i));
    if (symbol_labels.empty())
        for (int k = 0; k < n_symbols; ++k) symbol_labels.push_back("o" + std::to_string(k));
    m.states = std::move(state_labels);
    m.symbols = std::move(symbol_labels);

    Rng rng(seed);
    auto jittered_row = [&](std::size_t width, auto masked) {
        std::vector<double> row(width, 0.0);
        double sum = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            if (masked(j)) continue;
            row[j] = 1.0 + 0.05 * (2.0 * rng.uniform() - 1.0);
            sum += row[j];
        }
        for (double& v : row) v /= sum;
        return row;
    };
    for (int i = 0; i < n_states; ++i) {
        m.transition.push_back(jittered_row(
            static_cast<std::size_t>(n_states),
            [&](std::size_t j) { return mask.zero_transition(i, static_cast<int>(j)); }));
        m.emission.push_back(jittered_row(
            static_cast<std::size_t>(n_symbols),
            [&](std::size_t j) { return mask.zero_emission(i, static_cast<int>(j)); }));
    }
    m.initial = jittered_row(static_cast<std::size_t>(n_states), [](std::size_t) { return false; });
    validate_model(m);
    return m;
}

namespace detail {

struct Stats {
    std::vector<double> pi_num;
    std::vector<std::vector<double>> a_num;
    std::vector<std::vector<double>> b_num;
    double log_likelihood = 0.0;
};

// One E-step pass over a sequence, accumulating expected counts. Scaled
// forward/backward recursions; gammas and xis are normalized per step so
// the statistics are exact up to rounding.
inline void accumulate(const HmmModel& m, const ObservationSeq& obs, Stats& st) {
    int n = m.n_states();
    std::size_t len = obs.symbols.size();

    std::vector<std::vector<double>> alpha(len, std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<double> scale(len, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        int o = obs.symbols[t];
        for (int j = 0; j < n; ++j) {
            double mass;
            if (t == 0) {
                mass = m.initial[static_cast<std::size_t>(j)];
            } else {
                mass = 0.0;
                for (int i = 0; i < n; ++i)
                    mass += alpha[t - 1][static_cast<std::size_t>(i)] *
                            m.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
            alpha[t][static_cast<std::size_t>(j)] =
                mass * m.emission[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)];
        }
        for (int j = 0; j < n; ++j) scale[t] += alpha[t][static_cast<std::size_t>(j)];
        if (scale[t] <= 0.0)
            throw ImpossibleSequence("training sequence impossible at step " + std::to_string(t));
        for (int j = 0; j < n; ++j) alpha[t][static_cast<std::size_t>(j)] /= scale[t];
        st.log_likelihood += std::log(scale[t]);
    }

    std::vector<std::vector<double>> beta(len, std::vector<double>(static_cast<std::size_t>(n), 1.0));
    for (std::size_t t = len - 1; t > 0; --t) {
        int o = obs.symbols[t];
        for (int i = 0; i < n; ++i) {
            double mass = 0.0;
            for (int j = 0; j < n; ++j)
                mass += m.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                        m.emission[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)] *
                        beta[t][static_cast<std::size_t>(j)];
            beta[t - 1][static_cast<std::size_t>(i)] = mass / scale[t];
        }
    }

    for (std::size_t t = 0; t < len; ++t) {
        int o = obs.symbols[t];
        std::vector<double> gamma(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            gamma[static_cast<std::size_t>(i)] =
                alpha[t][static_cast<std::size_t>(i)] * beta[t][static_cast<std::size_t>(i)];
            total += gamma[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < n; ++i) {
            double g = gamma[static_cast<std::size_t>(i)] / total;
            if (t == 0) st.pi_num[static_cast<std::size_t>(i)] += g;
            st.b_num[static_cast<std::size_t>(i)][static_cast<std::size_t>(o)] += g;
        }

        if (t + 1 < len) {
            int o_next = obs.symbols[t + 1];
            double xi_total = 0.0;
            std::vector<double> xi(static_cast<std::size_t>(n * n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double v = alpha[t][static_cast<std::size_t>(i)] *
                               m.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                               m.emission[static_cast<std::size_t>(j)][static_cast<std::size_t>(o_next)] *
                               beta[t + 1][static_cast<std::size_t>(j)];
                    xi[static_cast<std::size_t>(i * n + j)] = v;
                    xi_total += v;
                }
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    st.a_num[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                        xi[static_cast<std::size_t>(i * n + j)] / xi_total;
        }
    }
}

}  // namespace detail

// Baum-Welch EM with fixed-zero constraints. Masked entries are zero in
// the start model and have zero expected counts at every step, so they
// stay exactly zero; each M-step row is renormalized over the unmasked
// entries. A row whose denominator vanishes (state never visited) keeps
// its previous values.
inline LearnResult learn(const std::vector<ObservationSeq>& sequences, int n_states,
                         const ConstraintMask& mask, const LearnStart& start,
                         int max_iters = 100, double tol = 1e-6) {
    if (sequences.empty()) throw NoSequences("no training sequences");

    int n_symbols = 0;
    HmmModel model;
    if (std::holds_alternative<HmmModel>(start)) {
        model = std::get<HmmModel>(start);
        validate_model(model);
        if (model.n_states() != n_states)
            throw BadModel("start model has " + std::to_string(model.n_states()) +
                           " states, expected " + std::to_string(n_states));
        n_symbols = model.n_symbols();
        validate_mask(mask, n_states, n_symbols);
        for (const auto& [i, j] : mask.fixed_zero_transitions)
            if (model.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0.0)
                throw BadModel("start model violates the transition mask at (" +
                               std::to_string(i) + "," + std::to_string(j) + ")");
        for (const auto& [i, k] : mask.fixed_zero_emissions)
            if (model.emission[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] != 0.0)
                throw BadModel("start model violates the emission mask at (" +
                               std::to_string(i) + "," + std::to_string(k) + ")");
    } else {
        for (const ObservationSeq& s : sequences)
            for (int sym : s.symbols) n_symbols = std::max(n_symbols, sym + 1);
        model = seeded_model(n_states, n_symbols, mask, std::get<std::uint64_t>(start));
    }
    for (const ObservationSeq& s : sequences) check_sequence(model, s);

    LearnResult out;
    out.mask = mask;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter <= max_iters; ++iter) {
        detail::Stats st;
        st.pi_num.assign(static_cast<std::size_t>(n_states), 0.0);
        st.a_num.assign(static_cast<std::size_t>(n_states),
                        std::vector<double>(static_cast<std::size_t>(n_states), 0.0));
        st.b_num.assign(static_cast<std::size_t>(n_states),
                        std::vector<double>(static_cast<std::size_t>(n_symbols), 0.0));
        for (const ObservationSeq& s : sequences) detail::accumulate(model, s, st);
        out.log_likelihoods.push_back(st.log_likelihood);

        if (iter == max_iters || st.log_likelihood - prev_ll < tol) break;
        prev_ll = st.log_likelihood;

        auto renorm = [](std::vector<double>& row, const std::vector<double>& old,
                         auto masked) {
            double sum = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (masked(j)) row[j] = 0.0;
                sum += row[j];
            }
            if (sum <= 0.0) {
                row = old;
                return;
            }
            for (double& v : row) v /= sum;
        };

        for (int i = 0; i < n_states; ++i) {
            std::vector<double> a_row = st.a_num[static_cast<std::size_t>(i)];
            renorm(a_row, model.transition[static_cast<std::size_t>(i)],
                   [&](std::size_t j) { return mask.zero_transition(i, static_cast<int>(j)); });
            model.transition[static_cast<std::size_t>(i)] = std::move(a_row);

            std::vector<double> b_row = st.b_num[static_cast<std::size_t>(i)];
            renorm(b_row, model.emission[static_cast<std::size_t>(i)],
                   [&](std::size_t j) { return mask.zero_emission(i, static_cast<int>(j)); });
            model.emission[static_cast<std::size_t>(i)] = std::move(b_row);
        }
        std::vector<double> pi = st.pi_num;
        renorm(pi, model.initial, [](std::size_t) { return false; });
        model.initial = std::move(pi);
    }

    out.model = std::move(model);
    return out;
}

// Stage label at the path's first change point; nullopt when the path
// never changes state.
inline std::optional<std::string> attribute_stage(const DecodedPath& path,
                                                  const ObservationSeq& obs) {
    if (!obs.stage_labels)
        throw MissingStageLabels("observation sequence carries no stage labels");
    if (obs.stage_labels->size() != path.states.size())
        throw MissingStageLabels("stage labels cover " +
                                 std::to_string(obs.stage_labels->size()) + " of " +
                                 std::to_string(path.states.size()) + " steps");
    if (path.change_points.empty()) return std::nullopt;
    return (*obs.stage_labels)[static_cast<std::size_t>(path.change_points.front())];
}

}  // namespace siltwin::hmm
