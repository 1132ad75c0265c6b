#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "siltwin/pgm/network.hpp"

namespace siltwin::pgm {

SILTWIN_DEFINE_ERROR(ZeroEvidenceProbability);

struct MapResult {
    Assignment assignment;
    double probability = 0.0;
};

// Probability of one complete assignment: the product of each variable's
// CPT entry under its parents. Accumulated in log space.
inline double joint_log_probability(const BayesNet& net, const Assignment& full) {
    if (full.size() != net.size())
        throw IncompleteAssignment("assignment covers " + std::to_string(full.size()) +
                                   " of " + std::to_string(net.size()) + " variables");
    double log_p = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        int s = full[i];
        if (s < 0 || s >= net.cardinality(static_cast<int>(i)))
            throw IncompleteAssignment("variable '" + net.variable(static_cast<int>(i)).name +
                                       "' has an out-of-range state");
        double p = net.cpt(static_cast<int>(i))
                       .rows[net.row_index(static_cast<int>(i), full)][static_cast<std::size_t>(s)];
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        log_p += std::log(p);
    }
    return log_p;
}

inline double joint_probability(const BayesNet& net, const Assignment& full) {
    return std::exp(joint_log_probability(net, full));
}

namespace detail {

// Multilinear table over a sorted set of variables. Values are indexed in
// mixed radix with the first scope variable most significant.
struct Factor {
    std::vector<int> vars;
    std::vector<double> values;
};

inline std::size_t table_size(const BayesNet& net, const std::vector<int>& vars) {
    std::size_t n = 1;
    for (int v : vars) n *= static_cast<std::size_t>(net.cardinality(v));
    return n;
}

// Walks all configurations of `vars`, exposing per-variable states.
struct ScopeIter {
    const BayesNet& net;
    const std::vector<int>& vars;
    std::vector<int> state;
    bool done = false;

    ScopeIter(const BayesNet& n, const std::vector<int>& v)
        : net(n), vars(v), state(v.size(), 0) {}

    void next() {
        for (std::size_t k = vars.size(); k-- > 0;) {
            if (++state[k] < net.cardinality(vars[k])) return;
            state[k] = 0;
        }
        done = true;
    }
};

inline std::size_t project_index(const BayesNet& net, const std::vector<int>& from_vars,
                                 const std::vector<int>& states,
                                 const std::vector<int>& to_vars) {
    std::size_t idx = 0;
    for (int v : to_vars) {
        auto it = std::lower_bound(from_vars.begin(), from_vars.end(), v);
        std::size_t pos = static_cast<std::size_t>(it - from_vars.begin());
        idx = idx * static_cast<std::size_t>(net.cardinality(v)) +
              static_cast<std::size_t>(states[pos]);
    }
    return idx;
}

inline Factor product(const BayesNet& net, const Factor& a, const Factor& b) {
    Factor out;
    std::set_union(a.vars.begin(), a.vars.end(), b.vars.begin(), b.vars.end(),
                   std::back_inserter(out.vars));
    out.values.resize(table_size(net, out.vars));
    std::size_t idx = 0;
    for (ScopeIter it(net, out.vars); !it.done; it.next(), ++idx)
        out.values[idx] = a.values[project_index(net, out.vars, it.state, a.vars)] *
                          b.values[project_index(net, out.vars, it.state, b.vars)];
    return out;
}

inline Factor sum_out(const BayesNet& net, const Factor& f, int var) {
    Factor out;
    for (int v : f.vars)
        if (v != var) out.vars.push_back(v);
    out.values.assign(table_size(net, out.vars), 0.0);
    std::size_t idx = 0;
    for (ScopeIter it(net, f.vars); !it.done; it.next(), ++idx)
        out.values[project_index(net, f.vars, it.state, out.vars)] += f.values[idx];
    return out;
}

// Max-analogue of sum_out. For each reduced configuration also records the
// eliminated variable's best state, scanning states in label order and
// keeping the first maximum, so ties resolve to the label-least state.
struct MaxMessage {
    Factor factor;
    int var = -1;
    std::vector<int> argmax;  // indexed like factor.values
};

inline MaxMessage max_out(const BayesNet& net, const Factor& f, int var) {
    MaxMessage out;
    out.var = var;
    for (int v : f.vars)
        if (v != var) out.factor.vars.push_back(v);
    std::size_t n = table_size(net, out.factor.vars);
    out.factor.values.assign(n, -std::numeric_limits<double>::infinity());
    out.argmax.assign(n, 0);

    std::vector<int> order = net.label_order(var);
    std::vector<int> label_rank(order.size());
    for (std::size_t r = 0; r < order.size(); ++r)
        label_rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r);

    auto it_var = std::lower_bound(f.vars.begin(), f.vars.end(), var);
    std::size_t var_pos = static_cast<std::size_t>(it_var - f.vars.begin());

    std::size_t idx = 0;
    for (ScopeIter it(net, f.vars); !it.done; it.next(), ++idx) {
        std::size_t reduced = project_index(net, f.vars, it.state, out.factor.vars);
        int s = it.state[var_pos];
        double v = f.values[idx];
        double best = out.factor.values[reduced];
        if (v > best ||
            (v == best && label_rank[static_cast<std::size_t>(s)] <
                              label_rank[static_cast<std::size_t>(out.argmax[reduced])])) {
            out.factor.values[reduced] = v;
            out.argmax[reduced] = s;
        }
    }
    return out;
}

// CPT of `child` as a factor, with evidence variables sliced out of the
// scope. Unobserved scope variables remain.
inline Factor cpt_factor(const BayesNet& net, int child, const std::vector<int>& evidence) {
    Factor out;
    std::vector<int> scope = net.cpt(child).parents;
    scope.push_back(child);
    std::sort(scope.begin(), scope.end());
    for (int v : scope)
        if (evidence[static_cast<std::size_t>(v)] < 0) out.vars.push_back(v);
    out.values.resize(table_size(net, out.vars));

    std::vector<int> full(net.size(), 0);
    for (std::size_t i = 0; i < full.size(); ++i)
        if (evidence[i] >= 0) full[i] = evidence[i];

    std::size_t idx = 0;
    for (ScopeIter it(net, out.vars); !it.done; it.next(), ++idx) {
        for (std::size_t k = 0; k < out.vars.size(); ++k)
            full[static_cast<std::size_t>(out.vars[k])] = it.state[k];
        out.values[idx] = net.cpt(child).rows[net.row_index(child, full)]
                                             [static_cast<std::size_t>(full[static_cast<std::size_t>(child)])];
    }
    return out;
}

// Min-degree elimination order over the moralized evidence-reduced graph.
// Simulates elimination: the cheapest node (fewest neighbours, ties to the
// lower index) goes first and its neighbourhood becomes a clique.
inline std::vector<int> min_degree_order(const BayesNet& net, const std::vector<bool>& eliminate,
                                         const std::vector<detail::Factor>& factors) {
    std::size_t n = net.size();
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (const Factor& f : factors)
        for (std::size_t a = 0; a < f.vars.size(); ++a)
            for (std::size_t b = a + 1; b < f.vars.size(); ++b) {
                adj[static_cast<std::size_t>(f.vars[a])][static_cast<std::size_t>(f.vars[b])] = true;
                adj[static_cast<std::size_t>(f.vars[b])][static_cast<std::size_t>(f.vars[a])] = true;
            }

    std::vector<bool> remaining = eliminate;
    std::vector<int> order;
    for (;;) {
        int best = -1;
        int best_degree = std::numeric_limits<int>::max();
        for (std::size_t i = 0; i < n; ++i) {
            if (!remaining[i]) continue;
            int degree = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && adj[i][j] && (remaining[j] || !eliminate[j])) ++degree;
            if (degree < best_degree) {
                best_degree = degree;
                best = static_cast<int>(i);
            }
        }
        if (best < 0) break;
        remaining[static_cast<std::size_t>(best)] = false;
        order.push_back(best);
        std::vector<int> neighbours;
        for (std::size_t j = 0; j < n; ++j)
            if (static_cast<int>(j) != best && adj[static_cast<std::size_t>(best)][j] &&
                (remaining[j] || !eliminate[j]))
                neighbours.push_back(static_cast<int>(j));
        for (std::size_t a = 0; a < neighbours.size(); ++a)
            for (std::size_t b = a + 1; b < neighbours.size(); ++b) {
                adj[static_cast<std::size_t>(neighbours[a])][static_cast<std::size_t>(neighbours[b])] = true;
                adj[static_cast<std::size_t>(neighbours[b])][static_cast<std::size_t>(neighbours[a])] = true;
            }
    }
    return order;
}

inline void validate_query(const BayesNet& net, const std::string& query, const Evidence& ev) {
    net.variable_index(query);
    if (ev.assignments.count(query))
        throw QueryInEvidence("query variable '" + query + "' is fixed by evidence");
}

}  // namespace detail

// Posterior P(query | evidence).
//
// elimination: variable elimination with a min-degree ordering.
// enumeration: direct summation of the joint over all completions; kept as
// a slow reference path.
//
// Throws ZeroEvidenceProbability when the evidence has probability zero.
inline Posterior infer_posterior(const BayesNet& net, const std::string& query,
                                 const Evidence& evidence,
                                 InferMethod method = InferMethod::elimination) {
    detail::validate_query(net, query, evidence);
    int q = net.variable_index(query);
    std::vector<int> ev = net.evidence_states(evidence);

    Posterior out;
    out.variable = query;
    out.method = method;
    std::vector<double> mass(static_cast<std::size_t>(net.cardinality(q)), 0.0);

    if (method == InferMethod::enumeration) {
        Assignment full(net.size(), 0);
        for (std::size_t i = 0; i < full.size(); ++i)
            if (ev[i] >= 0) full[i] = ev[i];
        std::vector<int> free_vars;
        for (std::size_t i = 0; i < net.size(); ++i)
            if (ev[i] < 0) free_vars.push_back(static_cast<int>(i));
        detail::ScopeIter it(net, free_vars);
        for (; !it.done; it.next()) {
            for (std::size_t k = 0; k < free_vars.size(); ++k)
                full[static_cast<std::size_t>(free_vars[k])] = it.state[k];
            double log_p = joint_log_probability(net, full);
            if (log_p > -std::numeric_limits<double>::infinity())
                mass[static_cast<std::size_t>(full[static_cast<std::size_t>(q)])] += std::exp(log_p);
        }
    } else {
        std::vector<detail::Factor> factors;
        for (std::size_t i = 0; i < net.size(); ++i)
            factors.push_back(detail::cpt_factor(net, static_cast<int>(i), ev));

        std::vector<bool> eliminate(net.size(), false);
        for (std::size_t i = 0; i < net.size(); ++i)
            eliminate[i] = ev[i] < 0 && static_cast<int>(i) != q;
        std::vector<int> order = detail::min_degree_order(net, eliminate, factors);

        for (int var : order) {
            detail::Factor merged{{}, {1.0}};
            std::vector<detail::Factor> rest;
            for (auto& f : factors) {
                if (std::binary_search(f.vars.begin(), f.vars.end(), var))
                    merged = detail::product(net, merged, f);
                else
                    rest.push_back(std::move(f));
            }
            rest.push_back(detail::sum_out(net, merged, var));
            factors = std::move(rest);
        }

        detail::Factor result{{}, {1.0}};
        for (const auto& f : factors) result = detail::product(net, result, f);
        mass = result.values;
    }

    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0)
        throw ZeroEvidenceProbability("evidence has probability zero under the model");
    for (double& m : mass) m /= total;
    out.distribution = std::move(mass);
    return out;
}

// Most probable completion of the evidence, by max-product elimination.
// Free variables are eliminated in reverse declaration order so traceback
// assigns them in declaration order; together with label-order tie-breaking
// inside max_out this returns the label-lexicographically least maximizer.
inline MapResult map_assignment(const BayesNet& net, const Evidence& evidence) {
    std::vector<int> ev = net.evidence_states(evidence);

    std::vector<detail::Factor> factors;
    for (std::size_t i = 0; i < net.size(); ++i)
        factors.push_back(detail::cpt_factor(net, static_cast<int>(i), ev));

    std::vector<int> order;
    for (std::size_t i = net.size(); i-- > 0;)
        if (ev[i] < 0) order.push_back(static_cast<int>(i));

    std::vector<detail::MaxMessage> messages;
    for (int var : order) {
        detail::Factor merged{{}, {1.0}};
        std::vector<detail::Factor> rest;
        for (auto& f : factors) {
            if (std::binary_search(f.vars.begin(), f.vars.end(), var))
                merged = detail::product(net, merged, f);
            else
                rest.push_back(std::move(f));
        }
        detail::MaxMessage msg = detail::max_out(net, merged, var);
        rest.push_back(msg.factor);
        messages.push_back(std::move(msg));
        factors = std::move(rest);
    }

    double value = 1.0;
    for (const auto& f : factors)
        for (double v : f.values) value *= v;

    MapResult out;
    out.assignment.assign(net.size(), -1);
    for (std::size_t i = 0; i < net.size(); ++i)
        if (ev[i] >= 0) out.assignment[i] = ev[i];
    for (std::size_t k = messages.size(); k-- > 0;) {
        const detail::MaxMessage& msg = messages[k];
        std::size_t idx = 0;
        for (int v : msg.factor.vars)
            idx = idx * static_cast<std::size_t>(net.cardinality(v)) +
                  static_cast<std::size_t>(out.assignment[static_cast<std::size_t>(v)]);
        out.assignment[static_cast<std::size_t>(msg.var)] = msg.argmax[idx];
    }
    out.probability = value;
    return out;
}

}  // namespace siltwin::pgm
