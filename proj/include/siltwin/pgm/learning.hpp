#pragma once

#include <string>
#include <vector>

#include "siltwin/pgm/network.hpp"

namespace siltwin::pgm {

SILTWIN_DEFINE_ERROR(EmptyDataset);
SILTWIN_DEFINE_ERROR(BadPrior);
SILTWIN_DEFINE_ERROR(BadLearningRate);

// Complete-assignment dataset: one Assignment per record.
using Dataset = std::vector<Assignment>;

// Dirichlet pseudo-counts, shaped exactly like the CPT tables they apply
// to: rows[var][parent_config][state].
struct DirichletPriors {
    std::vector<std::vector<std::vector<double>>> rows;
};

inline DirichletPriors uniform_priors(const BayesNet& structure, double strength) {
    if (strength <= 0.0) throw BadPrior("prior strength must be positive");
    DirichletPriors out;
    out.rows.resize(structure.size());
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const Cpt& c = structure.cpt(static_cast<int>(i));
        out.rows[i].assign(c.rows.size(),
                           std::vector<double>(c.rows[0].size(), strength));
    }
    return out;
}

namespace detail {

inline void check_dataset(const BayesNet& structure, const Dataset& dataset) {
    for (const Assignment& row : dataset) {
        if (row.size() != structure.size())
            throw IncompleteAssignment("dataset row covers " + std::to_string(row.size()) +
                                       " of " + std::to_string(structure.size()) + " variables");
        for (std::size_t i = 0; i < row.size(); ++i)
            if (row[i] < 0 || row[i] >= structure.cardinality(static_cast<int>(i)))
                throw IncompleteAssignment("dataset row has an out-of-range state for '" +
                                           structure.variable(static_cast<int>(i)).name + "'");
    }
}

// counts[var][parent_config][state] over the dataset.
inline std::vector<std::vector<std::vector<double>>> count_table(const BayesNet& structure,
                                                                 const Dataset& dataset) {
    std::vector<std::vector<std::vector<double>>> counts(structure.size());
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const Cpt& c = structure.cpt(static_cast<int>(i));
        counts[i].assign(c.rows.size(), std::vector<double>(c.rows[0].size(), 0.0));
    }
    for (const Assignment& row : dataset)
        for (std::size_t i = 0; i < structure.size(); ++i)
            counts[i][structure.row_index(static_cast<int>(i), row)]
                  [static_cast<std::size_t>(row[i])] += 1.0;
    return counts;
}

}  // namespace detail

// Maximum-likelihood tables with additive smoothing. With smoothing zero an
// unobserved parent configuration has no estimate and raises EmptyDataset.
inline BayesNet learn_mle(const BayesNet& structure, const Dataset& dataset,
                          double smoothing = 1.0) {
    if (smoothing < 0.0) throw BadPrior("smoothing must be non-negative");
    detail::check_dataset(structure, dataset);
    if (dataset.empty() && smoothing == 0.0)
        throw EmptyDataset("no records and no smoothing");

    auto counts = detail::count_table(structure, dataset);
    std::vector<Cpt> cpts = structure.cpts();
    for (std::size_t i = 0; i < cpts.size(); ++i) {
        for (std::size_t r = 0; r < cpts[i].rows.size(); ++r) {
            std::size_t k = cpts[i].rows[r].size();
            double total = 0.0;
            for (double c : counts[i][r]) total += c;
            if (total == 0.0 && smoothing == 0.0)
                throw EmptyDataset("variable '" + structure.variable(static_cast<int>(i)).name +
                                   "': parent configuration " + std::to_string(r) +
                                   " never observed");
            for (std::size_t s = 0; s < k; ++s)
                cpts[i].rows[r][s] = (counts[i][r][s] + smoothing) /
                                     (total + smoothing * static_cast<double>(k));
        }
    }
    return BayesNet(structure.variables(), std::move(cpts));
}

// Posterior-mean tables under Dirichlet priors:
// entry = (count + prior) / (row total + row prior total).
inline BayesNet learn_map(const BayesNet& structure, const Dataset& dataset,
                          const DirichletPriors& priors) {
    detail::check_dataset(structure, dataset);
    if (priors.rows.size() != structure.size())
        throw BadPrior("priors cover " + std::to_string(priors.rows.size()) + " of " +
                       std::to_string(structure.size()) + " variables");
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const Cpt& c = structure.cpt(static_cast<int>(i));
        if (priors.rows[i].size() != c.rows.size())
            throw BadPrior("variable '" + structure.variable(static_cast<int>(i)).name +
                           "': prior row count mismatch");
        for (const auto& row : priors.rows[i]) {
            if (row.size() != c.rows[0].size())
                throw BadPrior("variable '" + structure.variable(static_cast<int>(i)).name +
                               "': prior row width mismatch");
            for (double a : row)
                if (a <= 0.0)
                    throw BadPrior("variable '" + structure.variable(static_cast<int>(i)).name +
                                   "': prior pseudo-counts must be positive");
        }
    }

    auto counts = detail::count_table(structure, dataset);
    std::vector<Cpt> cpts = structure.cpts();
    for (std::size_t i = 0; i < cpts.size(); ++i) {
        for (std::size_t r = 0; r < cpts[i].rows.size(); ++r) {
            double total = 0.0;
            for (std::size_t s = 0; s < cpts[i].rows[r].size(); ++s)
                total += counts[i][r][s] + priors.rows[i][r][s];
            for (std::size_t s = 0; s < cpts[i].rows[r].size(); ++s)
                cpts[i].rows[r][s] = (counts[i][r][s] + priors.rows[i][r][s]) / total;
        }
    }
    return BayesNet(structure.variables(), std::move(cpts));
}

// Incremental refresh from a batch of new records. Only rows whose parent
// configuration occurs in the batch move; each moves toward the batch
// estimate (smoothing 1) by `rate`. Rows stay normalized because both terms
// of the blend are normalized.
inline BayesNet update_cpt(const BayesNet& net, const Dataset& new_records, double rate) {
    if (!(rate > 0.0) || rate > 1.0)
        throw BadLearningRate("rate must lie in (0, 1], got " + std::to_string(rate));
    detail::check_dataset(net, new_records);

    auto counts = detail::count_table(net, new_records);
    std::vector<Cpt> cpts = net.cpts();
    for (std::size_t i = 0; i < cpts.size(); ++i) {
        for (std::size_t r = 0; r < cpts[i].rows.size(); ++r) {
            double total = 0.0;
            for (double c : counts[i][r]) total += c;
            if (total == 0.0) continue;
            std::size_t k = cpts[i].rows[r].size();
            for (std::size_t s = 0; s < k; ++s) {
                double batch = (counts[i][r][s] + 1.0) / (total + static_cast<double>(k));
                cpts[i].rows[r][s] = (1.0 - rate) * cpts[i].rows[r][s] + rate * batch;
            }
        }
    }
    return BayesNet(net.variables(), std::move(cpts));
}

}  // namespace siltwin::pgm
