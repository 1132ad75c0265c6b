#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "siltwin/mln/kb.hpp"

namespace siltwin::mln {

SILTWIN_DEFINE_ERROR(DomainTooLarge);

// Enumeration bound: exact probabilities and exact MAP are available only
// up to this many ground atoms. Grounding defaults to the same cap;
// callers wanting the local-search MAP path pass a larger cap explicitly.
inline constexpr int kExactInferenceCap = 20;

// Absolute ceiling on the grounding cross product, regardless of the cap
// a caller passes.
inline constexpr int kGroundingCap = 4096;

struct GroundAtom {
    int predicate = -1;
    std::vector<std::string> args;
};

// One grounding of one formula: the clause AST with every atom node's
// `predicate` field rebound to a ground-atom index (args cleared).
struct GroundClause {
    int formula = -1;
    ClauseExpr expr;
    std::vector<int> atoms;  // distinct ground atoms appearing in expr
};

struct GroundMrf {
    std::vector<GroundAtom> ground_atoms;
    std::vector<GroundClause> ground_clauses;
    std::vector<Formula> formulas;  // weights; parallel to the KB's list
    std::vector<Predicate> predicates;

    int n_atoms() const { return static_cast<int>(ground_atoms.size()); }

    int atom_index(const std::string& predicate, const std::vector<std::string>& args) const {
        for (std::size_t i = 0; i < ground_atoms.size(); ++i) {
            const GroundAtom& a = ground_atoms[i];
            if (predicates[static_cast<std::size_t>(a.predicate)].name == predicate &&
                a.args == args)
                return static_cast<int>(i);
        }
        return -1;
    }

    std::string atom_name(int i) const {
        const GroundAtom& a = ground_atoms[static_cast<std::size_t>(i)];
        std::string out = predicates[static_cast<std::size_t>(a.predicate)].name;
        if (!a.args.empty()) {
            out += "(";
            for (std::size_t k = 0; k < a.args.size(); ++k) {
                if (k) out += ",";
                out += a.args[k];
            }
            out += ")";
        }
        return out;
    }
};

// Truth assignment, one entry per ground atom.
using World = std::vector<bool>;

namespace detail {

// Enumerates the cross product of the given domains in mixed radix with
// the first position most significant; calls fn(tuple).
template <typename Fn>
void for_each_tuple(const std::vector<const std::vector<std::string>*>& domains, Fn fn) {
    std::vector<std::size_t> idx(domains.size(), 0);
    for (;;) {
        std::vector<std::string> tuple(domains.size());
        for (std::size_t k = 0; k < domains.size(); ++k) tuple[k] = (*domains[k])[idx[k]];
        fn(tuple);
        std::size_t k = domains.size();
        while (k-- > 0) {
            if (++idx[k] < domains[k]->size()) break;
            idx[k] = 0;
            if (k == 0) return;
        }
        if (domains.empty()) return;
    }
}

inline void collect_variables(const ClauseExpr& e, std::vector<std::string>& order,
                              std::map<std::string, bool>& seen) {
    if (e.kind == NodeKind::atom) {
        for (const Term& t : e.args)
            if (!t.is_constant && !seen[t.text]) {
                seen[t.text] = true;
                order.push_back(t.text);
            }
        return;
    }
    for (const ClauseExpr& c : e.children) collect_variables(c, order, seen);
}

inline ClauseExpr substitute(const ClauseExpr& e,
                             const std::map<std::string, std::string>& binding,
                             const std::map<std::pair<int, std::vector<std::string>>, int>& atom_ids,
                             std::vector<int>& used) {
    if (e.kind == NodeKind::atom) {
        std::vector<std::string> args;
        for (const Term& t : e.args)
            args.push_back(t.is_constant ? t.text : binding.at(t.text));
        int id = atom_ids.at({e.predicate, args});
        ClauseExpr out;
        out.kind = NodeKind::atom;
        out.predicate = id;
        bool present = false;
        for (int u : used)
            if (u == id) present = true;
        if (!present) used.push_back(id);
        return out;
    }
    ClauseExpr out;
    out.kind = e.kind;
    for (const ClauseExpr& c : e.children)
        out.children.push_back(substitute(c, binding, atom_ids, used));
    return out;
}

}  // namespace detail

// Evaluates a ground clause expression against a world.
inline bool eval_clause(const ClauseExpr& e, const World& world) {
    switch (e.kind) {
        case NodeKind::atom:
            return world[static_cast<std::size_t>(e.predicate)];
        case NodeKind::negation:
            return !eval_clause(e.children[0], world);
        case NodeKind::conjunction:
            return eval_clause(e.children[0], world) && eval_clause(e.children[1], world);
        case NodeKind::disjunction:
            return eval_clause(e.children[0], world) || eval_clause(e.children[1], world);
        case NodeKind::implication:
            return !eval_clause(e.children[0], world) || eval_clause(e.children[1], world);
    }
    return false;
}

// Substitutes every sorted constant tuple into every predicate and
// formula. Atom order: predicates in declaration order, argument tuples in
// mixed radix over the sort constant lists.
inline GroundMrf ground(KnowledgeBase kb, int atom_cap = kExactInferenceCap) {
    validate_kb(kb);
    atom_cap = std::min(atom_cap, kGroundingCap);
    GroundMrf mrf;
    mrf.formulas = kb.formulas;
    mrf.predicates = kb.predicates;

    std::map<std::pair<int, std::vector<std::string>>, int> atom_ids;
    long long total = 0;
    for (std::size_t p = 0; p < kb.predicates.size(); ++p) {
        long long count = 1;
        std::vector<const std::vector<std::string>*> domains;
        for (const auto& s : kb.predicates[p].sorts) {
            domains.push_back(&kb.sorts.at(s));
            count *= static_cast<long long>(kb.sorts.at(s).size());
        }
        total += count;
        if (total > atom_cap)
            throw DomainTooLarge("grounding needs " + std::to_string(total) +
                                 " atoms, cap is " + std::to_string(atom_cap));
        detail::for_each_tuple(domains, [&](const std::vector<std::string>& tuple) {
            atom_ids[{static_cast<int>(p), tuple}] = static_cast<int>(mrf.ground_atoms.size());
            mrf.ground_atoms.push_back({static_cast<int>(p), tuple});
        });
    }

    for (std::size_t f = 0; f < kb.formulas.size(); ++f) {
        const Formula& formula = kb.formulas[f];
        std::vector<std::string> vars;
        std::map<std::string, bool> seen;
        detail::collect_variables(formula.expr, vars, seen);
        std::map<std::string, std::string> var_sorts;
        detail::check_clause_sorts(kb, formula.expr, var_sorts, formula.clause_text);

        std::vector<const std::vector<std::string>*> domains;
        for (const auto& v : vars) domains.push_back(&kb.sorts.at(var_sorts.at(v)));
        detail::for_each_tuple(domains, [&](const std::vector<std::string>& tuple) {
            std::map<std::string, std::string> binding;
            for (std::size_t k = 0; k < vars.size(); ++k) binding[vars[k]] = tuple[k];
            GroundClause gc;
            gc.formula = static_cast<int>(f);
            gc.expr = detail::substitute(formula.expr, binding, atom_ids, gc.atoms);
            mrf.ground_clauses.push_back(std::move(gc));
        });
    }
    return mrf;
}

// n_i(x): satisfied groundings of one formula in a world.
inline int count_true_groundings(const GroundMrf& mrf, int formula_index, const World& world) {
    if (world.size() != mrf.ground_atoms.size())
        throw BadKb("world covers " + std::to_string(world.size()) + " of " +
                    std::to_string(mrf.ground_atoms.size()) + " atoms");
    int count = 0;
    for (const GroundClause& gc : mrf.ground_clauses)
        if (gc.formula == formula_index && eval_clause(gc.expr, world)) ++count;
    return count;
}

}  // namespace siltwin::mln
