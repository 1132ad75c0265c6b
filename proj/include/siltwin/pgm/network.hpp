#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "siltwin/common/error.hpp"

namespace siltwin::pgm {

SILTWIN_DEFINE_ERROR(CycleDetected);
SILTWIN_DEFINE_ERROR(MissingCptRow);
SILTWIN_DEFINE_ERROR(BadProbabilityRow);
SILTWIN_DEFINE_ERROR(UnknownVariable);
SILTWIN_DEFINE_ERROR(IncompleteAssignment);
SILTWIN_DEFINE_ERROR(QueryInEvidence);
SILTWIN_DEFINE_ERROR(BadSpec);

inline constexpr double kRowSumTolerance = 1e-9;

struct Variable {
    std::string name;
    std::vector<std::string> states;

    int state_index(const std::string& label) const {
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] == label) return static_cast<int>(i);
        throw UnknownVariable("variable '" + name + "' has no state '" + label + "'");
    }
};

// Conditional probability table of one variable. Rows are indexed by the
// parent configuration in mixed radix with the first parent most
// significant.
struct Cpt {
    int child = -1;
    std::vector<int> parents;
    std::vector<std::vector<double>> rows;
};

// Per-variable state indices; one entry per network variable.
using Assignment = std::vector<int>;

struct Evidence {
    std::map<std::string, std::string> assignments;

    bool empty() const { return assignments.empty(); }
};

enum class InferMethod { elimination, enumeration };

inline const char* to_string(InferMethod m) {
    return m == InferMethod::elimination ? "elimination" : "enumeration";
}

struct Posterior {
    std::string variable;
    std::vector<double> distribution;
    InferMethod method = InferMethod::elimination;
};

// Input description for build_network; mirrors the network file format.
struct CptRowSpec {
    std::vector<std::string> given;
    std::vector<double> p;
};

struct CptSpec {
    std::string child;
    std::vector<std::string> parents;
    std::vector<CptRowSpec> rows;
};

struct NetworkSpec {
    std::vector<Variable> variables;
    std::vector<CptSpec> cpts;
};

class BayesNet {
public:
    BayesNet() = default;
    BayesNet(std::vector<Variable> vars, std::vector<Cpt> cpts)
        : vars_(std::move(vars)), cpts_(std::move(cpts)) {
        for (std::size_t i = 0; i < vars_.size(); ++i)
            index_[vars_[i].name] = static_cast<int>(i);
    }

    std::size_t size() const { return vars_.size(); }
    const std::vector<Variable>& variables() const { return vars_; }
    const std::vector<Cpt>& cpts() const { return cpts_; }
    const Variable& variable(int i) const { return vars_[static_cast<std::size_t>(i)]; }
    const Cpt& cpt(int i) const { return cpts_[static_cast<std::size_t>(i)]; }
    int cardinality(int i) const { return static_cast<int>(vars_[static_cast<std::size_t>(i)].states.size()); }

    bool has_variable(const std::string& name) const { return index_.count(name) > 0; }

    int variable_index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UnknownVariable("unknown variable '" + name + "'");
        return it->second;
    }

    // Row of the child's CPT selected by a full assignment.
    std::size_t row_index(int child, const Assignment& full) const {
        const Cpt& c = cpts_[static_cast<std::size_t>(child)];
        std::size_t idx = 0;
        for (int p : c.parents)
            idx = idx * static_cast<std::size_t>(cardinality(p)) +
                  static_cast<std::size_t>(full[static_cast<std::size_t>(p)]);
        return idx;
    }

    // Internal evidence form: state index per variable, -1 when free.
    std::vector<int> evidence_states(const Evidence& ev) const {
        std::vector<int> out(vars_.size(), -1);
        for (const auto& [name, state] : ev.assignments) {
            int v = variable_index(name);
            out[static_cast<std::size_t>(v)] = vars_[static_cast<std::size_t>(v)].state_index(state);
        }
        return out;
    }

    Assignment assignment_from_labels(const std::map<std::string, std::string>& labels) const {
        Assignment out(vars_.size(), -1);
        for (const auto& [name, state] : labels) {
            int v = variable_index(name);
            out[static_cast<std::size_t>(v)] = vars_[static_cast<std::size_t>(v)].state_index(state);
        }
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] < 0)
                throw IncompleteAssignment("variable '" + vars_[i].name + "' is unassigned");
        return out;
    }

    // States of a variable ordered by label; used for deterministic
    // tie-breaking in maximization.
    std::vector<int> label_order(int v) const {
        const auto& states = vars_[static_cast<std::size_t>(v)].states;
        std::vector<int> order(states.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return states[static_cast<std::size_t>(a)] < states[static_cast<std::size_t>(b)];
        });
        return order;
    }

private:
    std::vector<Variable> vars_;
    std::vector<Cpt> cpts_;
    std::map<std::string, int> index_;
};

namespace detail {

inline std::size_t parent_config_count(const std::vector<Variable>& vars,
                                       const std::vector<int>& parents) {
    std::size_t n = 1;
    for (int p : parents) n *= vars[static_cast<std::size_t>(p)].states.size();
    return n;
}

inline void check_acyclic(const std::vector<Variable>& vars,
                          const std::vector<Cpt>& cpts) {
    std::size_t n = vars.size();
    std::vector<int> indegree(n, 0);
    std::vector<std::vector<int>> children(n);
    for (const Cpt& c : cpts) {
        for (int p : c.parents) {
            children[static_cast<std::size_t>(p)].push_back(c.child);
            ++indegree[static_cast<std::size_t>(c.child)];
        }
    }
    std::vector<int> queue;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) queue.push_back(static_cast<int>(i));
    std::size_t seen = 0;
    while (!queue.empty()) {
        int v = queue.back();
        queue.pop_back();
        ++seen;
        for (int ch : children[static_cast<std::size_t>(v)])
            if (--indegree[static_cast<std::size_t>(ch)] == 0) queue.push_back(ch);
    }
    if (seen != n) {
        for (std::size_t i = 0; i < n; ++i)
            if (indegree[i] > 0)
                throw CycleDetected("variable '" + vars[i].name + "' lies on a directed cycle");
    }
}

}  // namespace detail

// Validates and assembles a network from its description. Rejects cycles,
// missing or duplicate CPT rows, and rows that are negative or do not sum
// to 1 within kRowSumTolerance.
inline BayesNet build_network(const NetworkSpec& spec) {
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < spec.variables.size(); ++i) {
        const Variable& v = spec.variables[i];
        if (v.states.size() < 2)
            throw BadSpec("variable '" + v.name + "' needs at least two states");
        std::map<std::string, int> seen;
        for (const auto& s : v.states)
            if (++seen[s] > 1)
                throw BadSpec("variable '" + v.name + "' repeats state '" + s + "'");
        if (!index.emplace(v.name, static_cast<int>(i)).second)
            throw BadSpec("duplicate variable '" + v.name + "'");
    }

    std::vector<Cpt> cpts(spec.variables.size());
    std::vector<bool> have_cpt(spec.variables.size(), false);
    for (const CptSpec& cs : spec.cpts) {
        auto it = index.find(cs.child);
        if (it == index.end())
            throw UnknownVariable("cpt child '" + cs.child + "' is not a declared variable");
        int child = it->second;
        if (have_cpt[static_cast<std::size_t>(child)])
            throw BadSpec("variable '" + cs.child + "' has more than one cpt");
        have_cpt[static_cast<std::size_t>(child)] = true;

        Cpt cpt;
        cpt.child = child;
        for (const auto& pname : cs.parents) {
            auto pit = index.find(pname);
            if (pit == index.end())
                throw UnknownVariable("parent '" + pname + "' of '" + cs.child +
                                      "' is not a declared variable");
            cpt.parents.push_back(pit->second);
        }

        std::size_t n_rows = detail::parent_config_count(spec.variables, cpt.parents);
        std::size_t n_states = spec.variables[static_cast<std::size_t>(child)].states.size();
        cpt.rows.assign(n_rows, {});
        for (const CptRowSpec& row : cs.rows) {
            if (row.given.size() != cpt.parents.size())
                throw MissingCptRow("variable '" + cs.child + "': row condition arity mismatch");
            std::size_t idx = 0;
            for (std::size_t k = 0; k < cpt.parents.size(); ++k) {
                const Variable& pv =
                    spec.variables[static_cast<std::size_t>(cpt.parents[k])];
                idx = idx * pv.states.size() +
                      static_cast<std::size_t>(pv.state_index(row.given[k]));
            }
            if (!cpt.rows[idx].empty())
                throw MissingCptRow("variable '" + cs.child + "': duplicate row");
            if (row.p.size() != n_states)
                throw BadProbabilityRow("variable '" + cs.child + "': row has " +
                                        std::to_string(row.p.size()) + " entries, expected " +
                                        std::to_string(n_states));
            double sum = 0.0;
            for (double p : row.p) {
                if (p < 0.0)
                    throw BadProbabilityRow("variable '" + cs.child + "': negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                throw BadProbabilityRow("variable '" + cs.child + "': row sums to " +
                                        std::to_string(sum));
            cpt.rows[idx] = row.p;
        }
        for (std::size_t r = 0; r < n_rows; ++r)
            if (cpt.rows[r].empty())
                throw MissingCptRow("variable '" + cs.child + "': missing row " + std::to_string(r));
        cpts[static_cast<std::size_t>(child)] = std::move(cpt);
    }

    for (std::size_t i = 0; i < spec.variables.size(); ++i)
        if (!have_cpt[i])
            throw MissingCptRow("variable '" + spec.variables[i].name + "' has no cpt");

    detail::check_acyclic(spec.variables, cpts);
    return BayesNet(spec.variables, std::move(cpts));
}

// Structure-only network: given parent lists, every CPT row is uniform.
// Starting point for the learners.
inline BayesNet make_structure(const std::vector<Variable>& variables,
                               const std::vector<std::vector<std::string>>& parent_lists) {
    if (variables.size() != parent_lists.size())
        throw BadSpec("one parent list required per variable");
    NetworkSpec spec;
    spec.variables = variables;
    for (std::size_t i = 0; i < variables.size(); ++i) {
        CptSpec cs;
        cs.child = variables[i].name;
        cs.parents = parent_lists[i];
        spec.cpts.push_back(std::move(cs));
    }
    // Fill uniform rows by enumerating parent configurations.
    std::map<std::string, const Variable*> by_name;
    for (const auto& v : spec.variables) by_name[v.name] = &v;
    for (CptSpec& cs : spec.cpts) {
        std::vector<const Variable*> parents;
        std::size_t n_rows = 1;
        for (const auto& pname : cs.parents) {
            auto it = by_name.find(pname);
            if (it == by_name.end())
                throw UnknownVariable("parent '" + pname + "' is not a declared variable");
            parents.push_back(it->second);
            n_rows *= it->second->states.size();
        }
        std::size_t n_states = by_name.at(cs.child)->states.size();
        for (std::size_t r = 0; r < n_rows; ++r) {
            CptRowSpec row;
            std::size_t rem = r;
            std::vector<std::string> given(parents.size());
            for (std::size_t k = parents.size(); k-- > 0;) {
                std::size_t card = parents[k]->states.size();
                given[k] = parents[k]->states[rem % card];
                rem /= card;
            }
            row.given = std::move(given);
            row.p.assign(n_states, 1.0 / static_cast<double>(n_states));
            cs.rows.push_back(std::move(row));
        }
    }
    return build_network(spec);
}

}  // namespace siltwin::pgm
