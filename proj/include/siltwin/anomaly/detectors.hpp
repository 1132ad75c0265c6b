#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "siltwin/anomaly/evidence.hpp"
#include "siltwin/sim/lifecycle.hpp"

namespace siltwin::anomaly {

inline constexpr int kKdeGridPoints = 256;
inline constexpr double kKdeGridPad = 3.0;  // bandwidths beyond the data range
inline constexpr double kMeanShiftTol = 1e-4;
inline constexpr int kMeanShiftMaxIters = 300;
inline constexpr double kMinorityFraction = 0.2;
inline constexpr double kMinorityDistance = 3.0;  // bandwidths from the main mode

struct ChangePoint {
    std::size_t index;
    double score;
};

namespace detail {

// Gaussian-kernel density of one window evaluated on a shared grid,
// normalized to a discrete probability vector. The floor keeps the KL terms
// finite when the windows are far apart.
inline std::vector<double> kde_on_grid(const std::vector<double>& series, std::size_t lo,
                                       std::size_t hi, double grid_lo, double grid_step,
                                       double bandwidth) {
    std::vector<double> density(kKdeGridPoints, 0.0);
    for (int k = 0; k < kKdeGridPoints; ++k) {
        double g = grid_lo + grid_step * k;
        double sum = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
            double z = (g - series[j]) / bandwidth;
            sum += std::exp(-0.5 * z * z);
        }
        density[k] = std::max(sum, 1e-300);
    }
    double total = 0.0;
    for (double d : density) total += d;
    for (double& d : density) d /= total;
    return density;
}

inline double jeffreys_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    double j = 0.0;
    for (int k = 0; k < kKdeGridPoints; ++k) j += (p[k] - q[k]) * std::log(p[k] / q[k]);
    return j;
}

}  // namespace detail

// Slides two adjacent windows over the series, estimates each window's
// density on a shared grid, and scores the boundary by symmetrized KL
// divergence. Indices whose score clears the threshold are returned after
// non-maximum suppression within one window length.
inline std::vector<ChangePoint> kde_kl_changepoint(const std::vector<double>& series,
                                                   std::size_t window, double bandwidth,
                                                   double threshold) {
    if (window < 1) throw SeriesTooShort("window must be at least 1");
    if (series.size() < 2 * window)
        throw SeriesTooShort("series of length " + std::to_string(series.size()) +
                             " is shorter than two windows of " + std::to_string(window));
    if (!(bandwidth > 0.0)) throw DegenerateInput("bandwidth must be positive");

    std::vector<ChangePoint> candidates;
    for (std::size_t i = window; i + window <= series.size(); ++i) {
        auto [lo_it, hi_it] =
            std::minmax_element(series.begin() + (i - window), series.begin() + (i + window));
        double grid_lo = *lo_it - kKdeGridPad * bandwidth;
        double grid_hi = *hi_it + kKdeGridPad * bandwidth;
        double grid_step = (grid_hi - grid_lo) / (kKdeGridPoints - 1);
        std::vector<double> before =
            detail::kde_on_grid(series, i - window, i, grid_lo, grid_step, bandwidth);
        std::vector<double> after =
            detail::kde_on_grid(series, i, i + window, grid_lo, grid_step, bandwidth);
        double score = detail::jeffreys_divergence(before, after);
        if (score > threshold) candidates.push_back({i, score});
    }

    // Keep the highest peak in any window-length neighborhood; equal scores
    // resolve to the lower index.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ChangePoint& a, const ChangePoint& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.index < b.index;
                     });
    std::vector<ChangePoint> kept;
    for (const ChangePoint& c : candidates) {
        bool suppressed = false;
        for (const ChangePoint& k : kept) {
            std::size_t gap = c.index > k.index ? c.index - k.index : k.index - c.index;
            if (gap < window) suppressed = true;
        }
        if (!suppressed) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end(),
              [](const ChangePoint& a, const ChangePoint& b) { return a.index < b.index; });

    // The divergence plateau is flat within a few samples of the true
    // boundary, so each kept peak's index snaps to the maximum-likelihood
    // mean split of its neighborhood. Scores stay the divergence values.
    for (ChangePoint& cp : kept) {
        std::size_t a = cp.index >= window ? cp.index - window : 0;
        std::size_t b = std::min(cp.index + window, series.size());
        double mean = 0.0;
        for (std::size_t t = a; t < b; ++t) mean += series[t];
        mean /= static_cast<double>(b - a);
        double cum = 0.0, best = -1.0;
        std::size_t best_j = cp.index;
        for (std::size_t j = a + 1; j < b; ++j) {
            cum += series[j - 1] - mean;
            if (std::fabs(cum) > best) {
                best = std::fabs(cum);
                best_j = j;
            }
        }
        cp.index = best_j;
    }
    return kept;
}

struct MeanShiftCluster {
    std::array<double, 2> center{0.0, 0.0};
    std::vector<std::size_t> members;
};

struct MeanShiftResult {
    std::vector<MeanShiftCluster> clusters;
    bool minority_flag = false;
    // Largest distance-to-main-mode ratio among minority clusters, in units
    // of the flagging distance; 0 when no minority cluster exists.
    double minority_score = 0.0;
};

// Flat-kernel mean shift. Each point climbs to its density mode; modes
// closer than bandwidth/2 merge into one cluster. The flag trips when a
// cluster holding under 20% of the points sits at least three bandwidths
// from the largest cluster's center.
inline MeanShiftResult meanshift_outlier(const std::vector<std::array<double, 2>>& points,
                                         double bandwidth) {
    if (points.size() < 2) throw DegenerateInput("mean shift needs at least two points");
    if (!(bandwidth > 0.0)) throw DegenerateInput("bandwidth must be positive");

    auto dist = [](const std::array<double, 2>& a, const std::array<double, 2>& b) {
        return std::hypot(a[0] - b[0], a[1] - b[1]);
    };

    std::vector<std::array<double, 2>> modes(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::array<double, 2> mode = points[i];
        for (int iter = 0; iter < kMeanShiftMaxIters; ++iter) {
            double sx = 0.0, sy = 0.0;
            int n = 0;
            for (const auto& p : points) {
                if (dist(mode, p) <= bandwidth) {
                    sx += p[0];
                    sy += p[1];
                    ++n;
                }
            }
            std::array<double, 2> next{sx / n, sy / n};
            double moved = dist(mode, next);
            mode = next;
            if (moved < kMeanShiftTol * bandwidth) break;
        }
        modes[i] = mode;
    }

    MeanShiftResult result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool placed = false;
        for (MeanShiftCluster& c : result.clusters) {
            if (dist(modes[i], c.center) <= bandwidth / 2.0) {
                // Running mean of member modes keeps the center stable.
                double n = static_cast<double>(c.members.size());
                c.center[0] = (c.center[0] * n + modes[i][0]) / (n + 1.0);
                c.center[1] = (c.center[1] * n + modes[i][1]) / (n + 1.0);
                c.members.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) result.clusters.push_back({modes[i], {i}});
    }

    std::size_t largest = 0;
    for (std::size_t c = 1; c < result.clusters.size(); ++c)
        if (result.clusters[c].members.size() > result.clusters[largest].members.size())
            largest = c;

    double minority_cap = kMinorityFraction * static_cast<double>(points.size());
    for (std::size_t c = 0; c < result.clusters.size(); ++c) {
        if (c == largest) continue;
        if (static_cast<double>(result.clusters[c].members.size()) >= minority_cap) continue;
        double d = dist(result.clusters[c].center, result.clusters[largest].center);
        result.minority_score =
            std::max(result.minority_score, d / (kMinorityDistance * bandwidth));
    }
    result.minority_flag = result.minority_score >= 1.0;
    return result;
}

// Nominal value plus acceptance tolerance for one feature; booleans compare
// against flag_nominal.
struct FeatureSpec {
    double nominal = 0.0;
    double tolerance = 0.0;
    bool flag_nominal = false;
};

inline EvidenceItem spec_mismatch(const sim::DataItem& item, const FeatureSpec& spec) {
    EvidenceItem ev;
    ev.feature = item.name;
    ev.stage = item.stage;
    ev.detector = "spec_mismatch";
    switch (item.kind) {
        case sim::ItemKind::real_value: {
            if (!(spec.tolerance > 0.0))
                throw DegenerateInput("tolerance for '" + item.name + "' must be positive");
            double delta = std::fabs(item.real - spec.nominal);
            ev.score = delta / spec.tolerance;
            ev.anomalous = delta > spec.tolerance;
            break;
        }
        case sim::ItemKind::boolean_value: {
            bool mismatch = item.flag != spec.flag_nominal;
            ev.score = mismatch ? 1.0 : 0.0;
            ev.anomalous = mismatch;
            break;
        }
        case sim::ItemKind::point_set:
            throw UnknownFeature("no spec registered for point-set item '" + item.name + "'");
    }
    return ev;
}

// Cross-checks the count records: shipped vs good per lot, hardware bins vs
// total tested, wafer sums vs master good counts, and audit edits that name
// count fields. Only violated signals are returned.
inline std::vector<EvidenceItem> reconcile_counts(const sim::TestRecordSet& records) {
    std::vector<EvidenceItem> out;
    auto push = [&](const std::string& feature, double score) {
        out.push_back({feature, sim::StageId::wafer_sort, true, score, "count_reconcile"});
    };

    std::int64_t audit_edits = 0;
    for (const sim::AuditEntry& entry : records.audit_trail)
        if (entry.field.find("count") != std::string::npos) ++audit_edits;
    if (audit_edits > 0) push("audit_trail", static_cast<double>(audit_edits));

    std::int64_t tested_total = 0;
    for (const auto& [lot, r] : records.master_results) tested_total += r.tested;
    std::int64_t bin_total = 0;
    for (const auto& [bin, count] : records.hardware_bins) bin_total += count;
    if (!records.hardware_bins.empty() && bin_total != tested_total)
        push("bin_counts", static_cast<double>(std::llabs(bin_total - tested_total)));

    if (!records.wafer_results.empty()) {
        std::int64_t wafer_mismatch = 0;
        for (const auto& [lot, r] : records.master_results) {
            std::int64_t wafer_sum = 0;
            bool has_wafers = false;
            for (const auto& [wafer, good] : records.wafer_results) {
                if (wafer.rfind(lot + "-", 0) == 0) {
                    wafer_sum += good;
                    has_wafers = true;
                }
            }
            if (has_wafers) wafer_mismatch += std::llabs(wafer_sum - r.good);
        }
        if (wafer_mismatch > 0) push("good_parts_count", static_cast<double>(wafer_mismatch));
    }

    std::int64_t over_shipped = 0;
    for (const auto& [lot, r] : records.master_results)
        if (r.shipped > r.good) over_shipped += r.shipped - r.good;
    if (over_shipped > 0) push("shipped_parts_count", static_cast<double>(over_shipped));

    std::sort(out.begin(), out.end(), evidence_order);
    return out;
}

}  // namespace siltwin::anomaly
