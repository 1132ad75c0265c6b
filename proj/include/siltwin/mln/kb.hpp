#pragma once

#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "siltwin/common/error.hpp"
#include "siltwin/common/fileio.hpp"

namespace siltwin::mln {

SILTWIN_DEFINE_ERROR(BadKb);
SILTWIN_DEFINE_ERROR(ClauseParseError);
SILTWIN_DEFINE_ERROR(BadKbFile);

struct Predicate {
    std::string name;
    std::vector<std::string> sorts;  // one per argument; arity = size

    int arity() const { return static_cast<int>(sorts.size()); }
};

// A term is a variable (lowercase first letter) or a constant (uppercase
// first letter), following the clause grammar.
struct Term {
    bool is_constant = false;
    std::string text;

    bool operator==(const Term&) const = default;
};

enum class NodeKind { atom, negation, conjunction, disjunction, implication };

// Clause AST. Atoms carry a predicate index and argument terms; inner
// nodes carry one child (negation) or two (binary connectives).
struct ClauseExpr {
    NodeKind kind = NodeKind::atom;
    int predicate = -1;
    std::vector<Term> args;
    std::vector<ClauseExpr> children;
};

struct Formula {
    double weight = 0.0;  // +-infinity marks a hard formula
    std::string clause_text;
    ClauseExpr expr;

    bool hard() const { return std::isinf(weight); }
};

struct KnowledgeBase {
    std::map<std::string, std::vector<std::string>> sorts;  // sort -> constants
    std::vector<Predicate> predicates;
    std::vector<Formula> formulas;

    int predicate_index(const std::string& name) const {
        for (std::size_t i = 0; i < predicates.size(); ++i)
            if (predicates[i].name == name) return static_cast<int>(i);
        return -1;
    }
};

// ---- clause grammar ----------------------------------------------------
// clause     := implication
// implication := disjunction ("=>" implication)?        (right associative)
// disjunction := conjunction ("|" conjunction)*
// conjunction := unary ("&" unary)*
// unary       := "!" unary | "(" clause ")" | atom
// atom        := IDENT "(" term ("," term)* ")" | IDENT
// Terms starting with a lowercase letter are variables, uppercase are
// constants. Free variables are implicitly universally quantified.

namespace detail {

struct Token {
    enum Kind { ident, lparen, rparen, comma, bang, amp, pipe, arrow, end } kind;
    std::string text;
};

inline std::vector<Token> tokenize(const std::string& s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) ||
                                    s[j] == '_' || s[j] == '-'))
                ++j;
            out.push_back({Token::ident, s.substr(i, j - i)});
            i = j;
        } else if (c == '(') {
            out.push_back({Token::lparen, "("});
            ++i;
        } else if (c == ')') {
            out.push_back({Token::rparen, ")"});
            ++i;
        } else if (c == ',') {
            out.push_back({Token::comma, ","});
            ++i;
        } else if (c == '!') {
            out.push_back({Token::bang, "!"});
            ++i;
        } else if (c == '&') {
            out.push_back({Token::amp, "&"});
            ++i;
        } else if (c == '|') {
            out.push_back({Token::pipe, "|"});
            ++i;
        } else if (c == '=' && i + 1 < s.size() && s[i + 1] == '>') {
            out.push_back({Token::arrow, "=>"});
            i += 2;
        } else {
            throw ClauseParseError("unexpected character '" + std::string(1, c) +
                                   "' in clause: " + s);
        }
    }
    out.push_back({Token::end, ""});
    return out;
}

class ClauseParser {
public:
    ClauseParser(const KnowledgeBase& kb, const std::string& text)
        : kb_(kb), text_(text), tokens_(tokenize(text)) {}

    ClauseExpr parse() {
        ClauseExpr e = implication();
        expect(Token::end, "end of clause");
        return e;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    Token take() { return tokens_[pos_++]; }

    void expect(Token::Kind kind, const std::string& what) {
        if (peek().kind != kind)
            throw ClauseParseError("expected " + what + " near '" + peek().text +
                                   "' in clause: " + text_);
        ++pos_;
    }

    ClauseExpr implication() {
        ClauseExpr lhs = disjunction();
        if (peek().kind == Token::arrow) {
            ++pos_;
            ClauseExpr rhs = implication();
            ClauseExpr node;
            node.kind = NodeKind::implication;
            node.children = {std::move(lhs), std::move(rhs)};
            return node;
        }
        return lhs;
    }

    ClauseExpr disjunction() {
        ClauseExpr lhs = conjunction();
        while (peek().kind == Token::pipe) {
            ++pos_;
            ClauseExpr node;
            node.kind = NodeKind::disjunction;
            node.children = {std::move(lhs), conjunction()};
            lhs = std::move(node);
        }
        return lhs;
    }

    ClauseExpr conjunction() {
        ClauseExpr lhs = unary();
        while (peek().kind == Token::amp) {
            ++pos_;
            ClauseExpr node;
            node.kind = NodeKind::conjunction;
            node.children = {std::move(lhs), unary()};
            lhs = std::move(node);
        }
        return lhs;
    }

    ClauseExpr unary() {
        if (peek().kind == Token::bang) {
            ++pos_;
            ClauseExpr node;
            node.kind = NodeKind::negation;
            node.children = {unary()};
            return node;
        }
        if (peek().kind == Token::lparen) {
            ++pos_;
            ClauseExpr inner = implication();
            expect(Token::rparen, "')'");
            return inner;
        }
        return atom();
    }

    ClauseExpr atom() {
        if (peek().kind != Token::ident)
            throw ClauseParseError("expected a predicate near '" + peek().text +
                                   "' in clause: " + text_);
        std::string name = take().text;
        int pred = kb_.predicate_index(name);
        if (pred < 0)
            throw BadKb("clause references undeclared predicate '" + name + "': " + text_);

        ClauseExpr node;
        node.kind = NodeKind::atom;
        node.predicate = pred;
        if (peek().kind == Token::lparen) {
            ++pos_;
            for (;;) {
                if (peek().kind != Token::ident)
                    throw ClauseParseError("expected a term near '" + peek().text +
                                           "' in clause: " + text_);
                std::string t = take().text;
                Term term;
                term.text = t;
                term.is_constant = std::isupper(static_cast<unsigned char>(t[0])) != 0;
                node.args.push_back(std::move(term));
                if (peek().kind == Token::comma) {
                    ++pos_;
                    continue;
                }
                break;
            }
            expect(Token::rparen, "')'");
        }
        if (static_cast<int>(node.args.size()) !=
            kb_.predicates[static_cast<std::size_t>(pred)].arity())
            throw BadKb("predicate '" + name + "' takes " +
                        std::to_string(kb_.predicates[static_cast<std::size_t>(pred)].arity()) +
                        " arguments, got " + std::to_string(node.args.size()) + ": " + text_);
        return node;
    }

    const KnowledgeBase& kb_;
    std::string text_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

// Collects the sort of each variable in a clause; verifies constants
// belong to the sort demanded by their argument position and variables are
// used consistently.
inline void check_clause_sorts(const KnowledgeBase& kb, const ClauseExpr& e,
                               std::map<std::string, std::string>& var_sorts,
                               const std::string& text) {
    if (e.kind == NodeKind::atom) {
        const Predicate& p = kb.predicates[static_cast<std::size_t>(e.predicate)];
        for (std::size_t k = 0; k < e.args.size(); ++k) {
            const std::string& want = p.sorts[k];
            const Term& t = e.args[k];
            if (t.is_constant) {
                auto it = kb.sorts.find(want);
                bool found = false;
                if (it != kb.sorts.end())
                    for (const auto& c : it->second)
                        if (c == t.text) found = true;
                if (!found)
                    throw BadKb("constant '" + t.text + "' is not in sort '" + want +
                                "': " + text);
            } else {
                auto [it, inserted] = var_sorts.emplace(t.text, want);
                if (!inserted && it->second != want)
                    throw BadKb("variable '" + t.text + "' used with sorts '" + it->second +
                                "' and '" + want + "': " + text);
            }
        }
        return;
    }
    for (const ClauseExpr& child : e.children)
        check_clause_sorts(kb, child, var_sorts, text);
}

}  // namespace detail

inline ClauseExpr parse_clause(const KnowledgeBase& kb, const std::string& text) {
    return detail::ClauseParser(kb, text).parse();
}

// Validates the whole KB and parses every formula clause in place.
inline void validate_kb(KnowledgeBase& kb) {
    std::map<std::string, std::string> constant_sort;
    for (const auto& [sort, constants] : kb.sorts) {
        if (constants.empty()) throw BadKb("sort '" + sort + "' has no constants");
        for (const auto& c : constants) {
            auto [it, inserted] = constant_sort.emplace(c, sort);
            if (!inserted)
                throw BadKb("constant '" + c + "' belongs to both '" + it->second +
                            "' and '" + sort + "'");
        }
    }
    std::map<std::string, bool> seen_pred;
    for (const Predicate& p : kb.predicates) {
        if (seen_pred[p.name])
            throw BadKb("duplicate predicate '" + p.name + "'");
        seen_pred[p.name] = true;
        for (const auto& s : p.sorts)
            if (!kb.sorts.count(s))
                throw BadKb("predicate '" + p.name + "' uses undeclared sort '" + s + "'");
    }
    for (Formula& f : kb.formulas) {
        if (std::isnan(f.weight)) throw BadKb("formula weight is NaN: " + f.clause_text);
        f.expr = parse_clause(kb, f.clause_text);
        std::map<std::string, std::string> var_sorts;
        detail::check_clause_sorts(kb, f.expr, var_sorts, f.clause_text);
    }
}

// ---- serialization -----------------------------------------------------
// KB file: {"sorts":{"Device":["D1",..]},
//           "predicates":[{"name":..,"sorts":[..]}],
//           "formulas":[{"weight":1.5,"clause":"..."}]}
// Hard weights travel as the strings "inf" / "-inf".

inline nlohmann::json to_json(const KnowledgeBase& kb) {
    nlohmann::json j;
    j["sorts"] = nlohmann::json::object();
    for (const auto& [sort, constants] : kb.sorts) j["sorts"][sort] = constants;
    j["predicates"] = nlohmann::json::array();
    for (const Predicate& p : kb.predicates)
        j["predicates"].push_back({{"name", p.name}, {"sorts", p.sorts}});
    j["formulas"] = nlohmann::json::array();
    for (const Formula& f : kb.formulas) {
        nlohmann::json jf;
        if (std::isinf(f.weight))
            jf["weight"] = f.weight > 0 ? "inf" : "-inf";
        else
            jf["weight"] = f.weight;
        jf["clause"] = f.clause_text;
        j["formulas"].push_back(std::move(jf));
    }
    return j;
}

inline KnowledgeBase kb_from_json(const nlohmann::json& j) {
    try {
        KnowledgeBase kb;
        for (auto it = j.at("sorts").begin(); it != j.at("sorts").end(); ++it)
            kb.sorts[it.key()] = it.value().get<std::vector<std::string>>();
        for (const auto& jp : j.at("predicates")) {
            Predicate p;
            p.name = jp.at("name").get<std::string>();
            p.sorts = jp.at("sorts").get<std::vector<std::string>>();
            kb.predicates.push_back(std::move(p));
        }
        for (const auto& jf : j.at("formulas")) {
            Formula f;
            const auto& w = jf.at("weight");
            if (w.is_string()) {
                std::string s = w.get<std::string>();
                if (s == "inf")
                    f.weight = std::numeric_limits<double>::infinity();
                else if (s == "-inf")
                    f.weight = -std::numeric_limits<double>::infinity();
                else
                    throw BadKbFile("unrecognized weight string '" + s + "'");
            } else {
                f.weight = w.get<double>();
            }
            f.clause_text = jf.at("clause").get<std::string>();
            kb.formulas.push_back(std::move(f));
        }
        validate_kb(kb);
        return kb;
    } catch (const nlohmann::json::exception& e) {
        throw BadKbFile(std::string("malformed knowledge base file: ") + e.what());
    }
}

inline std::string save_kb(const KnowledgeBase& kb) { return to_json(kb).dump(2) + "\n"; }

inline KnowledgeBase load_kb(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw BadKbFile("knowledge base file is not valid JSON");
    return kb_from_json(j);
}

}  // namespace siltwin::mln
