#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "siltwin/anomaly/detectors.hpp"
#include "siltwin/anomaly/evidence.hpp"
#include "siltwin/anomaly/extract.hpp"
#include "siltwin/anomaly/registry.hpp"
#include "siltwin/common/rng.hpp"
#include "siltwin/sim/generate.hpp"

namespace {

using namespace siltwin;
using namespace siltwin::anomaly;

// Independent divergence computation with a different accumulation: the two
// KL directions are summed separately instead of via the (p-q)*log(p/q)
// form.
double oracle_jeffreys(const std::vector<double>& s, std::size_t i, std::size_t w,
                       double bw) {
    double lo = *std::min_element(s.begin() + (i - w), s.begin() + (i + w));
    double hi = *std::max_element(s.begin() + (i - w), s.begin() + (i + w));
    lo -= 3.0 * bw;
    hi += 3.0 * bw;
    std::vector<double> p(256, 0.0), q(256, 0.0);
    double psum = 0.0, qsum = 0.0;
    for (int k = 0; k < 256; ++k) {
        double g = lo + (hi - lo) * k / 255.0;
        for (std::size_t t = i - w; t < i; ++t)
            p[k] += std::exp(-0.5 * (g - s[t]) * (g - s[t]) / (bw * bw));
        for (std::size_t t = i; t < i + w; ++t)
            q[k] += std::exp(-0.5 * (g - s[t]) * (g - s[t]) / (bw * bw));
        p[k] = std::max(p[k], 1e-300);
        q[k] = std::max(q[k], 1e-300);
        psum += p[k];
        qsum += q[k];
    }
    double forward = 0.0, backward = 0.0;
    for (int k = 0; k < 256; ++k) {
        double pk = p[k] / psum, qk = q[k] / qsum;
        forward += pk * std::log(pk / qk);
        backward += qk * std::log(qk / pk);
    }
    return forward + backward;
}

std::vector<double> step_series(std::uint64_t seed, double level, double noise) {
    Rng rng(mix_seed(7100, seed));
    std::vector<double> s(100);
    for (std::size_t i = 0; i < 100; ++i)
        s[i] = (i < 50 ? 0.0 : level) + noise * rng.normal();
    return s;
}

void no_duplicate_keys(const EvidenceVector& ev) {
    for (std::size_t i = 1; i < ev.items.size(); ++i) {
        EXPECT_TRUE(evidence_order(ev.items[i - 1], ev.items[i]))
            << ev.items[i - 1].feature << "/" << ev.items[i].feature;
    }
}

const EvidenceItem* find_evidence(const EvidenceVector& ev, const std::string& feature,
                                  const std::string& detector) {
    for (const EvidenceItem& item : ev.items)
        if (item.feature == feature && item.detector == detector) return &item;
    return nullptr;
}

// ---- change point detection --------------------------------------------

TEST(KdeKl, ConstantSeriesHasNoChangePoints) {
    std::vector<double> s(100, 3.25);
    EXPECT_TRUE(kde_kl_changepoint(s, 20, 0.5, kKdeKlThreshold).empty());
    for (const ChangePoint& cp : kde_kl_changepoint(s, 20, 0.5, -1.0))
        EXPECT_EQ(cp.score, 0.0) << cp.index;
}

TEST(KdeKl, StepSeriesSingleChangePointAtBoundary) {
    std::vector<double> s = step_series(1, 5.0, 0.1);
    std::vector<ChangePoint> cps = kde_kl_changepoint(s, 20, 0.5, kKdeKlThreshold);
    ASSERT_EQ(cps.size(), 1u);
    EXPECT_GE(cps[0].index, 49u);
    EXPECT_LE(cps[0].index, 51u);
    EXPECT_GT(cps[0].score, kKdeKlThreshold);
}

TEST(KdeKl, ThreeSigmaStepLocalizedWithinOne) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::vector<ChangePoint> cps =
            kde_kl_changepoint(step_series(seed, 3.0, 1.0), 20, 0.5, kKdeKlThreshold);
        if (cps.size() == 1 && cps[0].index >= 49 && cps[0].index <= 51) ++hits;
    }
    EXPECT_GE(hits, 190);  // 95% of 200
}

TEST(KdeKl, CleanSeriesFalsePositiveRate) {
    int fp = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(mix_seed(7200, seed));
        std::vector<double> s(60);
        for (double& x : s) x = rng.normal();
        if (!kde_kl_changepoint(s, 20, 0.5, kKdeKlThreshold).empty()) ++fp;
    }
    EXPECT_LE(fp, 10);  // 5% of 200
}

TEST(KdeKl, ReversalSymmetry) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<double> s = step_series(seed, 3.0, 1.0);
        std::vector<double> r(s.rbegin(), s.rend());
        std::vector<ChangePoint> fwd = kde_kl_changepoint(s, 20, 0.5, kKdeKlThreshold);
        std::vector<ChangePoint> rev = kde_kl_changepoint(r, 20, 0.5, kKdeKlThreshold);
        ASSERT_EQ(fwd.size(), rev.size());
        for (std::size_t k = 0; k < fwd.size(); ++k) {
            const ChangePoint& mirror = rev[rev.size() - 1 - k];
            EXPECT_EQ(mirror.index, s.size() - fwd[k].index);
            EXPECT_NEAR(mirror.score, fwd[k].score, 1e-9);
        }
    }
}

TEST(KdeKl, ScoreMatchesIndependentComputation) {
    Rng rng(mix_seed(7300, 0));
    std::vector<double> s(24);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = (i < 12 ? 0.0 : 1.5) + rng.normal();
    std::vector<ChangePoint> cps = kde_kl_changepoint(s, 8, 0.6, -1.0);
    // With threshold below zero every candidate index is scored; scores are
    // reported before index refinement only through their values, so match
    // them against the oracle at the refined winner's neighborhood instead:
    // recompute all candidate scores directly.
    for (std::size_t i = 8; i + 8 <= s.size(); ++i) {
        double expected = oracle_jeffreys(s, i, 8, 0.6);
        // Locate this candidate's score among the raw (unsuppressed) runs by
        // re-running with a window small enough to keep it: compare via a
        // single-candidate sub-series.
        std::vector<double> sub(s.begin() + (i - 8), s.begin() + (i + 8));
        std::vector<ChangePoint> one = kde_kl_changepoint(sub, 8, 0.6, -1.0);
        ASSERT_EQ(one.size(), 1u);
        EXPECT_NEAR(one[0].score, expected, 1e-9) << i;
    }
    EXPECT_FALSE(cps.empty());
}

TEST(KdeKl, PreconditionsEnforced) {
    std::vector<double> s(39, 0.0);
    EXPECT_THROW(kde_kl_changepoint(s, 20, 0.5, 1.0), SeriesTooShort);
    std::vector<double> ok(40, 0.0);
    EXPECT_NO_THROW(kde_kl_changepoint(ok, 20, 0.5, 1.0));
    EXPECT_THROW(kde_kl_changepoint(ok, 0, 0.5, 1.0), SeriesTooShort);
    EXPECT_THROW(kde_kl_changepoint(ok, 20, 0.0, 1.0), DegenerateInput);
}

// ---- mean shift --------------------------------------------------------

std::vector<std::array<double, 2>> blob(std::uint64_t seed, std::size_t n, double cx,
                                        double cy, double spread) {
    Rng rng(mix_seed(7400, seed));
    std::vector<std::array<double, 2>> pts(n);
    for (auto& p : pts) p = {cx + spread * rng.normal(), cy + spread * rng.normal()};
    return pts;
}

TEST(MeanShift, SingleBlobOneClusterNoFlag) {
    MeanShiftResult r = meanshift_outlier(blob(1, 60, 0.5, 0.5, 0.02), 0.1);
    EXPECT_EQ(r.clusters.size(), 1u);
    EXPECT_FALSE(r.minority_flag);
    EXPECT_EQ(r.minority_score, 0.0);
}

TEST(MeanShift, DistantMinorityFlagged) {
    std::vector<std::array<double, 2>> pts = blob(2, 45, 0.5, 0.5, 0.02);
    std::vector<std::array<double, 2>> minority = blob(3, 5, 0.95, 0.05, 0.01);
    pts.insert(pts.end(), minority.begin(), minority.end());
    MeanShiftResult r = meanshift_outlier(pts, 0.1);
    ASSERT_GE(r.clusters.size(), 2u);
    EXPECT_TRUE(r.minority_flag);
    EXPECT_GE(r.minority_score, 1.0);

    // The flagged cluster is exactly the five appended points.
    std::size_t largest = 0;
    for (std::size_t c = 1; c < r.clusters.size(); ++c)
        if (r.clusters[c].members.size() > r.clusters[largest].members.size()) largest = c;
    for (std::size_t c = 0; c < r.clusters.size(); ++c) {
        if (c == largest) continue;
        for (std::size_t m : r.clusters[c].members) EXPECT_GE(m, 45u);
    }
}

TEST(MeanShift, TwoEqualClustersNoMinority) {
    std::vector<std::array<double, 2>> pts = blob(4, 30, 0.2, 0.2, 0.01);
    std::vector<std::array<double, 2>> other = blob(5, 30, 0.8, 0.8, 0.01);
    pts.insert(pts.end(), other.begin(), other.end());
    MeanShiftResult r = meanshift_outlier(pts, 0.1);
    EXPECT_EQ(r.clusters.size(), 2u);
    EXPECT_FALSE(r.minority_flag);
    EXPECT_EQ(r.minority_score, 0.0);
}

TEST(MeanShift, IdenticalPointsConvergeToOneCluster) {
    std::vector<std::array<double, 2>> pts(10, {0.3, 0.7});
    MeanShiftResult r = meanshift_outlier(pts, 0.1);
    ASSERT_EQ(r.clusters.size(), 1u);
    EXPECT_EQ(r.clusters[0].members.size(), 10u);
    EXPECT_FALSE(r.minority_flag);
}

TEST(MeanShift, DegenerateInputsRejected) {
    std::vector<std::array<double, 2>> one = {{0.5, 0.5}};
    EXPECT_THROW(meanshift_outlier(one, 0.1), DegenerateInput);
    std::vector<std::array<double, 2>> two = {{0.5, 0.5}, {0.6, 0.6}};
    EXPECT_THROW(meanshift_outlier(two, 0.0), DegenerateInput);
}

// ---- spec mismatch -----------------------------------------------------

sim::DataItem real_item(const std::string& name, double value) {
    sim::DataItem item;
    item.name = name;
    item.stage = sim::StageId::etching;
    item.kind = sim::ItemKind::real_value;
    item.real = value;
    return item;
}

TEST(SpecMismatch, AtNominalScoreZero) {
    EvidenceItem ev = spec_mismatch(real_item("etch_depth", 120.0), {120.0, 4.4, false});
    EXPECT_FALSE(ev.anomalous);
    EXPECT_EQ(ev.score, 0.0);
    EXPECT_EQ(ev.detector, "spec_mismatch");
    EXPECT_EQ(ev.stage, sim::StageId::etching);
}

TEST(SpecMismatch, TwoToleranceDeviationScoresTwo) {
    EvidenceItem ev = spec_mismatch(real_item("etch_depth", 128.8), {120.0, 4.4, false});
    EXPECT_TRUE(ev.anomalous);
    EXPECT_NEAR(ev.score, 2.0, 1e-12);
}

TEST(SpecMismatch, ExactlyAtToleranceIsNotAnomalous) {
    EvidenceItem ev = spec_mismatch(real_item("x", 1.5), {1.0, 0.5, false});
    EXPECT_FALSE(ev.anomalous);
    EXPECT_NEAR(ev.score, 1.0, 1e-12);
}

TEST(SpecMismatch, BooleanMismatchScoresOne) {
    sim::DataItem marking;
    marking.name = "marking_valid";
    marking.stage = sim::StageId::package_test;
    marking.kind = sim::ItemKind::boolean_value;
    marking.flag = false;
    EvidenceItem ev = spec_mismatch(marking, {0.0, 0.0, true});
    EXPECT_TRUE(ev.anomalous);
    EXPECT_EQ(ev.score, 1.0);

    marking.flag = true;
    EvidenceItem ok = spec_mismatch(marking, {0.0, 0.0, true});
    EXPECT_FALSE(ok.anomalous);
    EXPECT_EQ(ok.score, 0.0);
}

TEST(SpecMismatch, PointSetAndBadToleranceRejected) {
    sim::DataItem points;
    points.name = "branching_points";
    points.kind = sim::ItemKind::point_set;
    EXPECT_THROW(spec_mismatch(points, {0.0, 1.0, false}), UnknownFeature);
    EXPECT_THROW(spec_mismatch(real_item("x", 1.0), {1.0, 0.0, false}), DegenerateInput);
}

// ---- count reconciliation ----------------------------------------------

TEST(ReconcileCounts, ConsistentRecordsYieldNothing) {
    sim::FleetConfig cfg;
    cfg.size = 150;
    cfg.seed = 21;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    EXPECT_TRUE(reconcile_counts(fleet.tests).empty());
}

TEST(ReconcileCounts, ShippedBeyondGoodScoresDifference) {
    sim::TestRecordSet records;
    records.master_results["L001"] = {100, 90, 95};
    std::vector<EvidenceItem> out = reconcile_counts(records);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].feature, "shipped_parts_count");
    EXPECT_TRUE(out[0].anomalous);
    EXPECT_EQ(out[0].score, 5.0);
    EXPECT_EQ(out[0].stage, sim::StageId::wafer_sort);
}

TEST(ReconcileCounts, AuditEditOnCountFieldFlagged) {
    sim::TestRecordSet records;
    records.master_results["L001"] = {100, 90, 90};
    records.audit_trail.push_back({0, "good_parts_count:L001", 88, 90});
    std::vector<EvidenceItem> out = reconcile_counts(records);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].feature, "audit_trail");
    EXPECT_EQ(out[0].score, 1.0);
}

TEST(ReconcileCounts, BinTotalsCrossChecked) {
    sim::TestRecordSet records;
    records.master_results["L001"] = {100, 90, 90};
    records.hardware_bins["bin1_pass"] = 90;
    records.hardware_bins["bin2_parametric_fail"] = 7;
    std::vector<EvidenceItem> out = reconcile_counts(records);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].feature, "bin_counts");
    EXPECT_EQ(out[0].score, 3.0);
}

TEST(ReconcileCounts, WaferSumsCrossChecked) {
    sim::TestRecordSet records;
    records.master_results["L001"] = {50, 48, 48};
    records.wafer_results["L001-W1"] = 25;
    records.wafer_results["L001-W2"] = 25;
    std::vector<EvidenceItem> out = reconcile_counts(records);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].feature, "good_parts_count");
    EXPECT_EQ(out[0].score, 2.0);
}

TEST(ReconcileCounts, InjectedAttacksProduceTheirSignals) {
    sim::FleetConfig cfg;
    cfg.size = 100;
    cfg.seed = 22;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    std::vector<std::string> failed;
    for (const auto& rec : fleet.devices)
        if (!rec.sort_passed && failed.size() < 3) failed.push_back(rec.device_id);
    ASSERT_GE(failed.size(), 1u);

    sim::Injection ship;
    ship.attack = sim::AttackLabel::defective_shipped;
    ship.targets = failed;
    std::vector<EvidenceItem> shipped = reconcile_counts(sim::inject_attack(fleet, ship).tests);
    ASSERT_EQ(shipped.size(), 2u);
    EXPECT_EQ(shipped[0].feature, "audit_trail");
    EXPECT_EQ(shipped[1].feature, "shipped_parts_count");
    EXPECT_EQ(shipped[1].score, static_cast<double>(failed.size()));

    sim::Injection over;
    over.attack = sim::AttackLabel::overproduced;
    over.targets = {fleet.devices[0].device_id, fleet.devices[1].device_id};
    std::vector<EvidenceItem> overproduced =
        reconcile_counts(sim::inject_attack(fleet, over).tests);
    ASSERT_EQ(overproduced.size(), 1u);
    EXPECT_EQ(overproduced[0].feature, "good_parts_count");
    EXPECT_EQ(overproduced[0].score, 2.0);
}

// ---- registry ----------------------------------------------------------

TEST(Registry, DefaultCoversEveryRelatedFeature) {
    DetectorRegistry reg = default_registry();
    std::set<std::string> covered;
    for (const auto& [name, cfg] : reg.detectors)
        covered.insert(cfg.features.begin(), cfg.features.end());
    for (const auto& [cause, features] : default_relationships())
        for (const std::string& f : features)
            EXPECT_TRUE(covered.count(f)) << cause << " -> " << f;
}

TEST(Registry, RoundTripIsByteIdentical) {
    DetectorRegistry reg = default_registry();
    std::string text = save_registry(reg);
    EXPECT_EQ(save_registry(load_registry(text)), text);
}

TEST(Registry, MalformedInputRejected) {
    EXPECT_THROW(load_registry("nope"), BadRegistryFile);
    EXPECT_THROW(load_registry("{\"format_version\":1,\"detectors\":{\"x\":{\"kind\":"
                               "\"sorcery\",\"features\":[],\"threshold\":1.0}}}"),
                 BadRegistryFile);
    EXPECT_THROW(load_registry("{\"format_version\":9,\"detectors\":{}}"), BadRegistryFile);
}

TEST(Registry, RegisterDetectorValidatesFeatures) {
    DetectorRegistry reg = default_registry();
    DetectorConfig cfg{"spec_mismatch", {"oxide_thickness"}, {{"tolerance_sigma", 3.0}}, 1.0};
    DetectorRegistry next = register_detector(reg, "tight_spec", cfg);
    EXPECT_EQ(next.detectors.count("tight_spec"), 1u);

    DetectorConfig bad_feature{"spec_mismatch", {"warp_factor"}, {}, 1.0};
    EXPECT_THROW(register_detector(reg, "x", bad_feature), UnknownFeature);
    DetectorConfig bad_kind{"sorcery", {"oxide_thickness"}, {}, 1.0};
    EXPECT_THROW(register_detector(reg, "x", bad_kind), BadRegistryFile);
}

// ---- evidence extraction -----------------------------------------------

TEST(ExtractEvidence, RemarkedCausesRunOnlyMarkingDetectors) {
    sim::FleetConfig cfg;
    cfg.size = 10;
    cfg.seed = 30;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    EvidenceVector ev = extract_evidence(fleet, fleet.devices[0].device_id,
                                         default_registry(), {"remarked"});
    ASSERT_EQ(ev.items.size(), 1u);
    EXPECT_EQ(ev.items[0].feature, "marking_valid");
    EXPECT_EQ(ev.items[0].detector, "spec_mismatch");
    EXPECT_FALSE(ev.items[0].anomalous);
    EXPECT_EQ(ev.subject, fleet.devices[0].device_id);
}

TEST(ExtractEvidence, FeaturesStayWithinTheCauseClosure) {
    sim::FleetConfig cfg;
    cfg.size = 60;
    cfg.seed = 31;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    EvidenceVector ev = extract_evidence(fleet, default_registry(), {"recycled"});
    std::set<std::string> allowed = {"lead_dimension", "ball_composition_score",
                                    "early_failure_rate"};
    EXPECT_FALSE(ev.items.empty());
    for (const EvidenceItem& item : ev.items) EXPECT_TRUE(allowed.count(item.feature));
    no_duplicate_keys(ev);
    // Real features get both the spec check and the population change-point
    // detector.
    EXPECT_NE(find_evidence(ev, "lead_dimension", "spec_mismatch"), nullptr);
    EXPECT_NE(find_evidence(ev, "lead_dimension", "kde_kl"), nullptr);
}

TEST(ExtractEvidence, CleanDeviceAllNonAnomalous) {
    sim::FleetConfig cfg;
    cfg.size = 60;
    cfg.seed = 33;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    std::vector<std::string> all_causes;
    for (const auto& [cause, features] : default_relationships()) all_causes.push_back(cause);
    EvidenceVector ev = extract_evidence(fleet, fleet.devices[5].device_id,
                                         default_registry(), all_causes);
    no_duplicate_keys(ev);
    for (const EvidenceItem& item : ev.items)
        EXPECT_FALSE(item.anomalous) << item.feature << "/" << item.detector;
}

TEST(ExtractEvidence, InjectedParametricDeviceEvidence) {
    sim::FleetConfig cfg;
    cfg.size = 20;
    cfg.seed = 34;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    sim::Injection inj;
    inj.attack = sim::AttackLabel::parametric_trojan;
    inj.targets = {fleet.devices[7].device_id};
    sim::Fleet attacked = sim::inject_attack(fleet, inj);

    EvidenceVector ev = extract_evidence(attacked, inj.targets[0], default_registry(),
                                         {"parametric-trojan"});
    for (const std::string& f :
         {"doping_density", "etch_depth", "oxide_thickness", "gate_dimension"}) {
        const EvidenceItem* item = find_evidence(ev, f, "spec_mismatch");
        ASSERT_NE(item, nullptr) << f;
        EXPECT_TRUE(item->anomalous) << f;
        EXPECT_GE(item->score, 1.0) << f;
    }

    // An untouched sibling shows no anomaly under the same causes.
    EvidenceVector clean = extract_evidence(attacked, fleet.devices[2].device_id,
                                            default_registry(), {"parametric-trojan"});
    for (const EvidenceItem& item : clean.items) EXPECT_FALSE(item.anomalous) << item.feature;
}

TEST(ExtractEvidence, FleetLevelSeesInjectedBlock) {
    sim::FleetConfig cfg;
    cfg.size = 100;
    cfg.seed = 35;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    sim::Injection inj;
    inj.attack = sim::AttackLabel::parametric_trojan;
    for (std::size_t i = 30; i < 60; ++i) inj.targets.push_back(fleet.devices[i].device_id);
    sim::Fleet attacked = sim::inject_attack(fleet, inj);

    EvidenceVector ev = extract_evidence(attacked, default_registry(), {"parametric-trojan"});
    const EvidenceItem* kde = find_evidence(ev, "doping_density", "kde_kl");
    ASSERT_NE(kde, nullptr);
    EXPECT_TRUE(kde->anomalous);
    const EvidenceItem* mean = find_evidence(ev, "doping_density", "spec_mismatch");
    ASSERT_NE(mean, nullptr);
    EXPECT_TRUE(mean->anomalous);

    EvidenceVector before = extract_evidence(fleet, default_registry(), {"parametric-trojan"});
    for (const EvidenceItem& item : before.items)
        EXPECT_FALSE(item.anomalous) << item.feature << "/" << item.detector;
}

TEST(ExtractEvidence, ReRegisteredDetectorShowsItsName) {
    sim::FleetConfig cfg;
    cfg.size = 10;
    cfg.seed = 36;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    DetectorConfig cfg2{"spec_mismatch", {"marking_valid"}, {}, 1.0};
    DetectorRegistry reg = register_detector(default_registry(), "marking_check_v2", cfg2);
    EvidenceVector ev =
        extract_evidence(fleet, fleet.devices[0].device_id, reg, {"remarked"});
    ASSERT_EQ(ev.items.size(), 2u);
    EXPECT_NE(find_evidence(ev, "marking_valid", "marking_check_v2"), nullptr);
    EXPECT_NE(find_evidence(ev, "marking_valid", "spec_mismatch"), nullptr);
}

TEST(ExtractEvidence, UncoveredFeatureAndUnknownCauseRejected) {
    sim::FleetConfig cfg;
    cfg.size = 10;
    cfg.seed = 37;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    DetectorRegistry reg = default_registry();
    reg.detectors.erase("count_reconcile");
    EXPECT_THROW(
        extract_evidence(fleet, fleet.devices[0].device_id, reg, {"defective-shipped"}),
        UncoveredFeature);
    EXPECT_THROW(extract_evidence(fleet, fleet.devices[0].device_id, default_registry(),
                                  {"alien-implant"}),
                 UncoveredFeature);
}

TEST(ExtractEvidence, CountEvidenceScopedToDeviceLot) {
    sim::FleetConfig cfg;
    cfg.size = 200;
    cfg.seed = 38;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    std::vector<std::string> failed_in_first;
    for (const auto& rec : fleet.devices)
        if (!rec.sort_passed && rec.lot_id == "L001" && failed_in_first.size() < 4)
            failed_in_first.push_back(rec.device_id);
    ASSERT_GE(failed_in_first.size(), 1u);
    sim::Injection inj;
    inj.attack = sim::AttackLabel::defective_shipped;
    inj.targets = failed_in_first;
    sim::Fleet attacked = sim::inject_attack(fleet, inj);

    EvidenceVector hit = extract_evidence(attacked, failed_in_first[0], default_registry(),
                                          {"defective-shipped"});
    const EvidenceItem* shipped = find_evidence(hit, "shipped_parts_count", "count_reconcile");
    ASSERT_NE(shipped, nullptr);
    EXPECT_TRUE(shipped->anomalous);
    EXPECT_EQ(shipped->score, static_cast<double>(failed_in_first.size()));
    const EvidenceItem* audit = find_evidence(hit, "audit_trail", "count_reconcile");
    ASSERT_NE(audit, nullptr);
    EXPECT_TRUE(audit->anomalous);

    std::string other_lot_device;
    for (const auto& rec : attacked.devices)
        if (rec.lot_id == "L002") {
            other_lot_device = rec.device_id;
            break;
        }
    EvidenceVector miss = extract_evidence(attacked, other_lot_device, default_registry(),
                                           {"defective-shipped"});
    for (const EvidenceItem& item : miss.items)
        EXPECT_FALSE(item.anomalous) << item.feature;
}

TEST(ExtractEvidence, JsonRoundTripAndDeterminism) {
    sim::FleetConfig cfg;
    cfg.size = 60;
    cfg.seed = 39;
    sim::Fleet fleet = sim::generate_fleet(cfg);
    EvidenceVector a = extract_evidence(fleet, default_registry(), {"recycled", "remarked"});
    EvidenceVector b = extract_evidence(fleet, default_registry(), {"recycled", "remarked"});
    ASSERT_EQ(a.items.size(), b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_TRUE(a.items[i] == b.items[i]);

    EvidenceVector back = evidence_from_json(evidence_to_json(a));
    EXPECT_EQ(back.subject, a.subject);
    ASSERT_EQ(back.items.size(), a.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_TRUE(back.items[i] == a.items[i]);
}

}  // namespace
