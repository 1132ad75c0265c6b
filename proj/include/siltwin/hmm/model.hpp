#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "siltwin/common/error.hpp"
#include "siltwin/common/fileio.hpp"

namespace siltwin::hmm {

SILTWIN_DEFINE_ERROR(BadModel);
SILTWIN_DEFINE_ERROR(BadModelFile);
SILTWIN_DEFINE_ERROR(EmptySequence);
SILTWIN_DEFINE_ERROR(SymbolOutOfRange);
SILTWIN_DEFINE_ERROR(ImpossibleSequence);
SILTWIN_DEFINE_ERROR(MaskTooRestrictive);
SILTWIN_DEFINE_ERROR(NoSequences);
SILTWIN_DEFINE_ERROR(MissingStageLabels);

inline constexpr double kRowSumTolerance = 1e-9;

struct HmmModel {
    std::vector<std::string> states;
    std::vector<std::string> symbols;
    std::vector<std::vector<double>> transition;  // N x N
    std::vector<std::vector<double>> emission;    // N x M
    std::vector<double> initial;                  // length N

    int n_states() const { return static_cast<int>(states.size()); }
    int n_symbols() const { return static_cast<int>(symbols.size()); }
};

struct ObservationSeq {
    std::vector<int> symbols;
    std::optional<std::vector<std::string>> stage_labels;
};

struct ConstraintMask {
    std::set<std::pair<int, int>> fixed_zero_transitions;
    std::set<std::pair<int, int>> fixed_zero_emissions;

    bool zero_transition(int i, int j) const {
        return fixed_zero_transitions.count({i, j}) > 0;
    }
    bool zero_emission(int i, int k) const {
        return fixed_zero_emissions.count({i, k}) > 0;
    }
};

struct DecodedPath {
    std::vector<int> states;
    double log_probability = 0.0;
    std::vector<int> change_points;  // indices t with state(t) != state(t-1)
};

namespace detail {

inline void check_row(const std::vector<double>& row, std::size_t width,
                      const std::string& what) {
    if (row.size() != width)
        throw BadModel(what + " has width " + std::to_string(row.size()) + ", expected " +
                       std::to_string(width));
    double sum = 0.0;
    for (double p : row) {
        if (p < 0.0) throw BadModel(what + " has a negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw BadModel(what + " sums to " + std::to_string(sum));
}

}  // namespace detail

inline void validate_model(const HmmModel& m) {
    std::size_t n = m.states.size();
    std::size_t k = m.symbols.size();
    if (n == 0) throw BadModel("model has no states");
    if (k == 0) throw BadModel("model has no observation symbols");
    if (m.transition.size() != n || m.emission.size() != n)
        throw BadModel("matrix row count does not match the state count");
    for (std::size_t i = 0; i < n; ++i) {
        detail::check_row(m.transition[i], n, "transition row " + std::to_string(i));
        detail::check_row(m.emission[i], k, "emission row " + std::to_string(i));
    }
    detail::check_row(m.initial, n, "initial distribution");
}

// A mask must leave every state at least one outgoing transition and one
// emittable symbol; otherwise no parameterization can satisfy it.
inline void validate_mask(const ConstraintMask& mask, int n_states, int n_symbols) {
    for (int i = 0; i < n_states; ++i) {
        int zeroed = 0;
        for (int j = 0; j < n_states; ++j)
            if (mask.zero_transition(i, j)) ++zeroed;
        if (zeroed >= n_states)
            throw MaskTooRestrictive("all transitions out of state " + std::to_string(i) +
                                     " are fixed to zero");
        zeroed = 0;
        for (int j = 0; j < n_symbols; ++j)
            if (mask.zero_emission(i, j)) ++zeroed;
        if (zeroed >= n_symbols)
            throw MaskTooRestrictive("all emissions of state " + std::to_string(i) +
                                     " are fixed to zero");
    }
    for (const auto& [i, j] : mask.fixed_zero_transitions)
        if (i < 0 || i >= n_states || j < 0 || j >= n_states)
            throw MaskTooRestrictive("transition mask entry out of range");
    for (const auto& [i, j] : mask.fixed_zero_emissions)
        if (i < 0 || i >= n_states || j < 0 || j >= n_symbols)
            throw MaskTooRestrictive("emission mask entry out of range");
}

inline void check_sequence(const HmmModel& m, const ObservationSeq& obs) {
    if (obs.symbols.empty()) throw EmptySequence("observation sequence is empty");
    for (int s : obs.symbols)
        if (s < 0 || s >= m.n_symbols())
            throw SymbolOutOfRange("symbol index " + std::to_string(s) +
                                   " outside alphabet of size " + std::to_string(m.n_symbols()));
    if (obs.stage_labels && obs.stage_labels->size() != obs.symbols.size())
        throw MissingStageLabels("stage labels cover " +
                                 std::to_string(obs.stage_labels->size()) + " of " +
                                 std::to_string(obs.symbols.size()) + " steps");
}

// ---- serialization -----------------------------------------------------
// Model file: {"states":[...],"symbols":[...],"A":[[..]],"B":[[..]],
//              "pi":[...],"mask":{"A_zero":[[i,j]..],"B_zero":[[i,k]..]}}

inline nlohmann::json to_json(const HmmModel& m, const ConstraintMask& mask) {
    nlohmann::json j;
    j["states"] = m.states;
    j["symbols"] = m.symbols;
    j["A"] = m.transition;
    j["B"] = m.emission;
    j["pi"] = m.initial;
    j["mask"]["A_zero"] = nlohmann::json::array();
    for (const auto& [i, k] : mask.fixed_zero_transitions)
        j["mask"]["A_zero"].push_back({i, k});
    j["mask"]["B_zero"] = nlohmann::json::array();
    for (const auto& [i, k] : mask.fixed_zero_emissions)
        j["mask"]["B_zero"].push_back({i, k});
    return j;
}

inline std::pair<HmmModel, ConstraintMask> hmm_from_json(const nlohmann::json& j) {
    try {
        HmmModel m;
        m.states = j.at("states").get<std::vector<std::string>>();
        m.symbols = j.at("symbols").get<std::vector<std::string>>();
        m.transition = j.at("A").get<std::vector<std::vector<double>>>();
        m.emission = j.at("B").get<std::vector<std::vector<double>>>();
        m.initial = j.at("pi").get<std::vector<double>>();
        ConstraintMask mask;
        if (j.contains("mask")) {
            for (const auto& e : j.at("mask").at("A_zero"))
                mask.fixed_zero_transitions.insert({e.at(0).get<int>(), e.at(1).get<int>()});
            for (const auto& e : j.at("mask").at("B_zero"))
                mask.fixed_zero_emissions.insert({e.at(0).get<int>(), e.at(1).get<int>()});
        }
        validate_model(m);
        validate_mask(mask, m.n_states(), m.n_symbols());
        return {std::move(m), std::move(mask)};
    } catch (const nlohmann::json::exception& e) {
        throw BadModelFile(std::string("malformed model file: ") + e.what());
    }
}

inline std::string save_hmm(const HmmModel& m, const ConstraintMask& mask) {
    return to_json(m, mask).dump(2) + "\n";
}

inline std::pair<HmmModel, ConstraintMask> load_hmm(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw BadModelFile("model file is not valid JSON");
    return hmm_from_json(j);
}

}  // namespace siltwin::hmm
