#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "siltwin/anomaly/registry.hpp"
#include "siltwin/cli/cli.hpp"
#include "siltwin/common/fileio.hpp"
#include "siltwin/sim/generate.hpp"
#include "siltwin/sim/io.hpp"
#include "siltwin/trust/engine.hpp"
#include "siltwin/trust/report.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = siltwin::cli::dispatch(std::move(args), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Fresh scratch directory per call; stale content from earlier runs is wiped.
fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / "siltwin_cli_tests" / tag;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_config(const fs::path& dir, const std::string& name, const json& j) {
    fs::path p = dir / name;
    siltwin::write_file(p.string(), j.dump(2) + "\n");
    return p.string();
}

json simulate_config(std::uint64_t seed, int size) {
    return {{"format_version", 1}, {"seed", seed}, {"fleet", {{"size", size}}}};
}

// Runs simulate and returns the output directory; asserts success.
fs::path simulated_fleet(const fs::path& dir, const std::string& name, std::uint64_t seed,
                         int size) {
    std::string cfg = write_config(dir, name + ".json", simulate_config(seed, size));
    fs::path out = dir / name;
    CliResult r = run_cli({"simulate", "--config", cfg, "--out", out.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
}

json fleet_inputs(const fs::path& fleet_dir) {
    return {{"fleet", (fleet_dir / "fleet.jsonl").string()},
            {"tests", (fleet_dir / "tests.json").string()}};
}

// Injects one attack into a simulated fleet directory, writing a new one.
fs::path injected_fleet(const fs::path& dir, const std::string& name, const fs::path& src,
                        const std::string& attack, const std::vector<int>& devices,
                        std::uint64_t seed) {
    json targets = json::array();
    for (int d : devices) targets.push_back(siltwin::sim::device_id_for(d));
    json cfg = {{"format_version", 1},
                {"seed", seed},
                {"inputs", fleet_inputs(src)},
                {"injections",
                 json::array({{{"attack", attack}, {"targets", targets}, {"magnitude", 4.0}}})}};
    std::string path = write_config(dir, name + ".json", cfg);
    fs::path out = dir / name;
    CliResult r = run_cli({"inject", "--config", path, "--out", out.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
}

std::string slurp(const fs::path& p) { return siltwin::read_file(p.string()); }

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

// ---- simulate ----------------------------------------------------------

TEST(CliSimulate, WritesArtifactsAndPrintsCountAndChecksum) {
    fs::path dir = fresh_dir("sim_basic");
    std::string cfg = write_config(dir, "run.json", simulate_config(42, 25));
    fs::path out = dir / "out";

    CliResult r = run_cli({"simulate", "--config", cfg, "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("devices: 25"), std::string::npos);
    EXPECT_NE(r.out.find("checksum: "), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "fleet.jsonl"));
    EXPECT_TRUE(fs::exists(out / "tests.json"));

    json meta = load_json(out / "meta.json");
    EXPECT_EQ(meta.at("command"), "simulate");
    EXPECT_EQ(meta.at("seed"), 42);
    EXPECT_EQ(meta.at("config_hash"), siltwin::fnv1a_hex(slurp(cfg)));
}

TEST(CliSimulate, TwoRunsProduceIdenticalBytes) {
    fs::path dir = fresh_dir("sim_repeat");
    std::string cfg = write_config(dir, "run.json", simulate_config(42, 25));

    CliResult a = run_cli({"simulate", "--config", cfg, "--out", (dir / "a").string()});
    CliResult b = run_cli({"simulate", "--config", cfg, "--out", (dir / "b").string()});
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(slurp(dir / "a" / "fleet.jsonl"), slurp(dir / "b" / "fleet.jsonl"));
    EXPECT_EQ(slurp(dir / "a" / "tests.json"), slurp(dir / "b" / "tests.json"));
    EXPECT_EQ(slurp(dir / "a" / "meta.json"), slurp(dir / "b" / "meta.json"));
}

TEST(CliSimulate, MissingConfigFileNamesThePath) {
    fs::path dir = fresh_dir("sim_missing");
    std::string cfg = (dir / "nowhere.json").string();
    CliResult r = run_cli({"simulate", "--config", cfg, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(cfg), std::string::npos);
}

TEST(CliSimulate, ZeroSizeFleetIsRejected) {
    fs::path dir = fresh_dir("sim_zero");
    std::string cfg = write_config(dir, "run.json", simulate_config(3, 0));
    CliResult r = run_cli({"simulate", "--config", cfg, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(CliSimulate, OccupiedOutputNeedsForce) {
    fs::path dir = fresh_dir("sim_force");
    std::string cfg = write_config(dir, "run.json", simulate_config(42, 10));
    fs::path out = dir / "out";
    ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out", out.string()}).code, 0);

    CliResult blocked = run_cli({"simulate", "--config", cfg, "--out", out.string()});
    EXPECT_EQ(blocked.code, 2);
    EXPECT_NE(blocked.err.find("--force"), std::string::npos);

    CliResult forced = run_cli({"simulate", "--config", cfg, "--out", out.string(), "--force"});
    EXPECT_EQ(forced.code, 0);
}

TEST(CliSimulate, SeedComesFromFlagOrConfigButNeverTheClock) {
    fs::path dir = fresh_dir("sim_seed");
    std::string unseeded =
        write_config(dir, "unseeded.json", {{"format_version", 1}, {"fleet", {{"size", 10}}}});

    CliResult r = run_cli({"simulate", "--config", unseeded, "--out", (dir / "a").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("seed"), std::string::npos);

    CliResult with_flag =
        run_cli({"simulate", "--config", unseeded, "--seed", "9", "--out", (dir / "b").string()});
    EXPECT_EQ(with_flag.code, 0);

    // The flag overrides a config seed: seed 9 via flag equals seed 9 via file.
    std::string seeded = write_config(dir, "seeded.json",
                                      {{"format_version", 1},
                                       {"seed", 9},
                                       {"fleet", {{"size", 10}}}});
    CliResult from_file =
        run_cli({"simulate", "--config", seeded, "--out", (dir / "c").string()});
    ASSERT_EQ(from_file.code, 0);
    EXPECT_EQ(slurp(dir / "b" / "fleet.jsonl"), slurp(dir / "c" / "fleet.jsonl"));

    std::string overridden = write_config(dir, "overridden.json",
                                          {{"format_version", 1},
                                           {"seed", 1234},
                                           {"fleet", {{"size", 10}}}});
    CliResult via_flag = run_cli(
        {"simulate", "--config", overridden, "--seed", "9", "--out", (dir / "d").string()});
    ASSERT_EQ(via_flag.code, 0);
    EXPECT_EQ(slurp(dir / "b" / "fleet.jsonl"), slurp(dir / "d" / "fleet.jsonl"));
}

// ---- usage surface -----------------------------------------------------

TEST(CliUsage, BadInvocationsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"infer", "--engine", "quantum"}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--seed", "abc", "--config", "x.json", "--out", "y"}).code, 1);
}

TEST(CliUsage, HelpPrintsTheCommandListAndExitsZero) {
    CliResult r = run_cli({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("simulate"), std::string::npos);
    EXPECT_NE(r.out.find("run-scenario"), std::string::npos);
}

TEST(CliUsage, MissingOutIsAUsageError) {
    fs::path dir = fresh_dir("usage_out");
    std::string cfg = write_config(dir, "run.json", simulate_config(1, 5));
    CliResult r = run_cli({"simulate", "--config", cfg});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--out"), std::string::npos);
}

// ---- inject + detect ---------------------------------------------------

TEST(CliDetect, InjectedDeviceShowsItsSignature) {
    fs::path dir = fresh_dir("detect_injected");
    fs::path clean = simulated_fleet(dir, "clean", 42, 25);
    fs::path hit = injected_fleet(dir, "hit", clean, "recycled", {7}, 5);

    json cfg = {{"format_version", 1},
                {"seed", 5},
                {"device", siltwin::sim::device_id_for(7)},
                {"inputs", fleet_inputs(hit)}};
    std::string path = write_config(dir, "detect.json", cfg);
    CliResult r = run_cli({"detect", "--config", path, "--out", (dir / "ev").string()});
    ASSERT_EQ(r.code, 0) << r.err;

    json ev = load_json(dir / "ev" / "evidence.json");
    EXPECT_EQ(ev.at("config_hash"), siltwin::fnv1a_hex(slurp(path)));
    std::set<std::string> anomalous;
    for (const json& item : ev.at("items"))
        if (item.at("anomalous").get<bool>()) anomalous.insert(item.at("feature").get<std::string>());
    EXPECT_TRUE(anomalous.count("lead_dimension") || anomalous.count("ball_composition_score") ||
                anomalous.count("early_failure_rate"))
        << r.out;
}

TEST(CliDetect, CleanFleetsStayNearTheCalibratedFalseAlarmRate) {
    fs::path dir = fresh_dir("detect_clean");
    int flagged = 0;
    int total = 0;
    for (std::uint64_t seed : {21u, 22u, 23u, 24u, 25u, 26u}) {
        fs::path fleet = simulated_fleet(dir, "f" + std::to_string(seed), seed, 30);
        json cfg = {{"format_version", 1}, {"seed", seed}, {"inputs", fleet_inputs(fleet)}};
        std::string path = write_config(dir, "d" + std::to_string(seed) + ".json", cfg);
        fs::path out = dir / ("ev" + std::to_string(seed));
        ASSERT_EQ(run_cli({"detect", "--config", path, "--out", out.string()}).code, 0);
        const json ev = load_json(out / "evidence.json");
        for (const json& item : ev.at("items")) {
            total += 1;
            flagged += item.at("anomalous").get<bool>() ? 1 : 0;
        }
    }
    ASSERT_GT(total, 0);
    EXPECT_LE(static_cast<double>(flagged) / total, 0.08)
        << flagged << " of " << total << " clean items flagged";
}

TEST(CliInject, UnknownAttackNameIsAnInputError) {
    fs::path dir = fresh_dir("inject_unknown");
    fs::path clean = simulated_fleet(dir, "clean", 1, 10);
    json cfg = {{"format_version", 1},
                {"seed", 1},
                {"inputs", fleet_inputs(clean)},
                {"injections", json::array({{{"attack", "alien-ray"},
                                             {"targets", {siltwin::sim::device_id_for(1)}}}})}};
    std::string path = write_config(dir, "inj.json", cfg);
    CliResult r = run_cli({"inject", "--config", path, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(CliInject, CommandsNeverMutateTheirInputs) {
    fs::path dir = fresh_dir("inject_inputs");
    fs::path clean = simulated_fleet(dir, "clean", 42, 15);
    std::string before = slurp(clean / "fleet.jsonl") + slurp(clean / "tests.json");
    injected_fleet(dir, "hit", clean, "recycled", {3}, 5);
    std::string after = slurp(clean / "fleet.jsonl") + slurp(clean / "tests.json");
    EXPECT_EQ(before, after);
}

// ---- infer -------------------------------------------------------------

namespace {

// History with one labeled fleet per cause, plus a recycled device under test.
struct BnFixture {
    fs::path dir;
    std::string config_path;
    std::string device;
};

BnFixture make_bn_fixture(const std::string& tag) {
    BnFixture fx;
    fx.dir = fresh_dir(tag);
    fs::path h1 = simulated_fleet(fx.dir, "h1", 900, 30);
    fs::path h1i = injected_fleet(fx.dir, "h1i", h1, "recycled", {10, 11, 12, 13, 14, 15}, 31);
    fs::path h2 = simulated_fleet(fx.dir, "h2", 950, 30);
    fs::path h2i =
        injected_fleet(fx.dir, "h2i", h2, "parametric-trojan", {5, 6, 7, 8, 9, 10}, 32);
    fs::path cur = simulated_fleet(fx.dir, "cur", 1000, 20);
    fs::path curi = injected_fleet(fx.dir, "curi", cur, "recycled", {7}, 33);

    fx.device = siltwin::sim::device_id_for(7);
    json cfg = {{"format_version", 1},
                {"seed", 77},
                {"observation", "accelerated-failure"},
                {"device", fx.device},
                {"inputs",
                 {{"fleet", (curi / "fleet.jsonl").string()},
                  {"tests", (curi / "tests.json").string()},
                  {"history", json::array({fleet_inputs(h1i), fleet_inputs(h2i)})}}}};
    fx.config_path = write_config(fx.dir, "infer.json", cfg);
    return fx;
}

}  // namespace

TEST(CliInfer, NetworkEngineRanksTheInjectedCauseFirst) {
    BnFixture fx = make_bn_fixture("infer_bn");
    fs::path out = fx.dir / "report";
    CliResult r = run_cli({"infer", "--config", fx.config_path, "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;

    json report = load_json(out / "report.json");
    EXPECT_EQ(report.at("config_hash"), siltwin::fnv1a_hex(slurp(fx.config_path)));
    ASSERT_FALSE(report.at("ranked_causes").empty());
    EXPECT_EQ(report.at("ranked_causes")[0].at("cause"), "recycled");
    EXPECT_NE(r.out.find("recycled"), std::string::npos);
}

TEST(CliInfer, ReportMatchesTheLibraryCallOnTheSameInputs) {
    BnFixture fx = make_bn_fixture("infer_bn_oracle");
    fs::path out = fx.dir / "report";
    ASSERT_EQ(run_cli({"infer", "--config", fx.config_path, "--out", out.string()}).code, 0);

    auto load_pair = [&](const std::string& name) {
        return siltwin::sim::load_fleet(slurp(fx.dir / name / "fleet.jsonl"),
                                        slurp(fx.dir / name / "tests.json"));
    };
    std::vector<siltwin::sim::Fleet> history = {load_pair("h1i"), load_pair("h2i")};
    siltwin::sim::Fleet current = load_pair("curi");
    siltwin::trust::RootCauseReport direct = siltwin::trust::backward_trust_bn(
        "accelerated-failure", history, current, fx.device,
        siltwin::trust::default_threat_model());

    json written = load_json(out / "report.json");
    written.erase("config_hash");
    EXPECT_EQ(written, siltwin::trust::report_to_json(direct));
}

TEST(CliInfer, LogicEngineMatchesTheLibraryCallOverTheFullKb) {
    fs::path dir = fresh_dir("infer_mln");
    fs::path clean = simulated_fleet(dir, "clean", 42, 20);
    fs::path hit = injected_fleet(dir, "hit", clean, "remarked", {4}, 9);
    std::string device = siltwin::sim::device_id_for(4);
    const std::vector<std::string> causes = {"recycled", "remarked", "unintentional-leak",
                                             "defective-shipped"};

    json cfg = {{"format_version", 1},
                {"seed", 9},
                {"device", device},
                {"causes", causes},
                {"inputs", fleet_inputs(hit)}};
    std::string path = write_config(dir, "infer.json", cfg);
    fs::path out = dir / "report";
    CliResult r = run_cli({"infer", "--config", path, "--engine", "mln", "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("enumerated marginals"), std::string::npos);

    siltwin::sim::Fleet current =
        siltwin::sim::load_fleet(slurp(hit / "fleet.jsonl"), slurp(hit / "tests.json"));
    siltwin::trust::ThreatModel model = siltwin::trust::default_threat_model();
    siltwin::anomaly::EvidenceVector ev = siltwin::anomaly::extract_evidence(
        current, device, siltwin::anomaly::default_registry(), causes,
        siltwin::sim::default_params(), model.relationships);
    siltwin::trust::RootCauseReport direct =
        siltwin::trust::backward_trust_mln(ev, siltwin::trust::build_kb(model, causes), model);

    json written = load_json(out / "report.json");
    written.erase("config_hash");
    EXPECT_EQ(written, siltwin::trust::report_to_json(direct));
    ASSERT_FALSE(direct.ranked_causes.empty());
    EXPECT_EQ(direct.ranked_causes[0].cause, "remarked");
}

TEST(CliInfer, StageEngineTracesALeakToItsOriginStage) {
    fs::path dir = fresh_dir("infer_hmm");
    fs::path train = simulated_fleet(dir, "train", 500, 60);
    fs::path traini = injected_fleet(dir, "traini", train, "info-leak-trojan",
                                     {10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21}, 51);
    fs::path cur = simulated_fleet(dir, "cur", 600, 30);
    fs::path curi = injected_fleet(dir, "curi", cur, "info-leak-trojan", {5, 6, 7, 8}, 52);

    json cfg = {{"format_version", 1},
                {"seed", 11},
                {"engine", "hmm"},
                {"device", siltwin::sim::device_id_for(8)},
                {"inputs",
                 {{"fleet", (curi / "fleet.jsonl").string()},
                  {"tests", (curi / "tests.json").string()},
                  {"history", json::array({fleet_inputs(traini)})}}}};
    std::string path = write_config(dir, "infer.json", cfg);
    CliResult r = run_cli({"infer", "--config", path, "--out", (dir / "report").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("logic-design"), std::string::npos);
    EXPECT_NE(r.out.find("3pip-vendor"), std::string::npos);
}

TEST(CliInfer, UnknownObservationIsAModelError) {
    fs::path dir = fresh_dir("infer_unknown_obs");
    fs::path clean = simulated_fleet(dir, "clean", 1, 10);
    json cfg = {{"format_version", 1},
                {"seed", 1},
                {"observation", "weird-noise"},
                {"device", siltwin::sim::device_id_for(1)},
                {"inputs", fleet_inputs(clean)}};
    std::string path = write_config(dir, "infer.json", cfg);
    CliResult r = run_cli({"infer", "--config", path, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 4);
}

TEST(CliInfer, BadLearnerNameIsAModelError) {
    fs::path dir = fresh_dir("infer_bad_learner");
    fs::path clean = simulated_fleet(dir, "clean", 1, 10);
    json cfg = {{"format_version", 1},
                {"seed", 1},
                {"observation", "accelerated-failure"},
                {"device", siltwin::sim::device_id_for(1)},
                {"learner", {{"name", "em"}}},
                {"inputs", fleet_inputs(clean)}};
    std::string path = write_config(dir, "infer.json", cfg);
    CliResult r = run_cli({"infer", "--config", path, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 4);
}

// ---- extend ------------------------------------------------------------

TEST(CliExtend, CrosstalkUpdateFlowsIntoTheNextInference) {
    fs::path dir = fresh_dir("extend_chain");
    json extra = {{"name", "metal_rerouting_score"},
                  {"stage", "routing"},
                  {"mean", 1.0},
                  {"sigma", 0.02}};
    json params = {{"extra_items", json::array({extra})}};

    // The new measurement needs a covering detector for extraction to use it.
    siltwin::sim::ProcessParams aug = siltwin::sim::params_from_json(params);
    siltwin::anomaly::DetectorRegistry registry = siltwin::anomaly::register_detector(
        siltwin::anomaly::default_registry(), "rerouting_check",
        {"spec_mismatch", {"metal_rerouting_score"}, {}, 1.0}, aug);
    fs::path registry_path = dir / "registry.json";
    siltwin::write_file(registry_path.string(), siltwin::anomaly::save_registry(registry));

    json extend_cfg = {{"format_version", 1},
                       {"seed", 3},
                       {"params", params},
                       {"update",
                        {{"cause", "parametric-trojan"},
                         {"features", {"metal_rerouting_score"}},
                         {"feature_priors", {{"metal_rerouting_score", 0.04}}}}}};
    std::string extend_path = write_config(dir, "extend.json", extend_cfg);
    fs::path model_dir = dir / "model";
    CliResult ext = run_cli({"extend", "--config", extend_path, "--out", model_dir.string()});
    ASSERT_EQ(ext.code, 0) << ext.err;

    json model_json = load_json(model_dir / "threat_model.json");
    EXPECT_EQ(model_json.at("config_hash"), siltwin::fnv1a_hex(slurp(extend_path)));
    const auto& related = model_json.at("relationships").at("parametric-trojan");
    EXPECT_NE(std::find(related.begin(), related.end(), "metal_rerouting_score"),
              related.end());

    // Simulate with the extra measurement, inject the trojan, then infer
    // against the extended model: the new feature appears in the evidence.
    json sim_cfg = {{"format_version", 1},
                    {"seed", 42},
                    {"params", params},
                    {"fleet", {{"size", 20}}}};
    std::string sim_path = write_config(dir, "sim.json", sim_cfg);
    fs::path fleet_dir = dir / "fleet";
    ASSERT_EQ(run_cli({"simulate", "--config", sim_path, "--out", fleet_dir.string()}).code, 0);
    fs::path hit = injected_fleet(dir, "hit", fleet_dir, "parametric-trojan", {6}, 8);

    json infer_cfg = {{"format_version", 1},
                      {"seed", 8},
                      {"observation", "accelerated-failure"},
                      {"device", siltwin::sim::device_id_for(6)},
                      {"params", params},
                      {"inputs",
                       {{"fleet", (hit / "fleet.jsonl").string()},
                        {"tests", (hit / "tests.json").string()},
                        {"registry", registry_path.string()},
                        {"threat_model", (model_dir / "threat_model.json").string()}}}};
    std::string infer_path = write_config(dir, "infer.json", infer_cfg);
    fs::path report_dir = dir / "report";
    CliResult inf = run_cli({"infer", "--config", infer_path, "--out", report_dir.string()});
    ASSERT_EQ(inf.code, 0) << inf.err;

    const json written = load_json(report_dir / "report.json");
    bool found = false;
    for (const json& item : written.at("evidence").at("items"))
        found = found || item.at("feature") == "metal_rerouting_score";
    EXPECT_TRUE(found);
}

TEST(CliExtend, UpdateWithoutACauseIsRejected) {
    fs::path dir = fresh_dir("extend_bad");
    std::string path = write_config(
        dir, "extend.json",
        {{"format_version", 1}, {"seed", 1}, {"update", {{"features", {"etch_rate"}}}}});
    CliResult r = run_cli({"extend", "--config", path, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);  // the block is malformed before the engine sees it
}

TEST(CliExtend, NewCauseWithoutFeaturesIsAModelError) {
    fs::path dir = fresh_dir("extend_model_err");
    std::string path = write_config(dir, "extend.json",
                                    {{"format_version", 1},
                                     {"seed", 1},
                                     {"update", {{"cause", "mystery"}, {"origin", "routing"}}}});
    CliResult r = run_cli({"extend", "--config", path, "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 4);
}

// ---- run-scenario ------------------------------------------------------

TEST(CliScenario, AcceleratedFailureRanksTheConfiguredTruthFirst) {
    fs::path dir = fresh_dir("scenario1");
    std::string path = write_config(
        dir, "run.json", {{"format_version", 1}, {"seed", 7}, {"attack", "recycled"}});
    fs::path out = dir / "out";
    CliResult r =
        run_cli({"run-scenario", "--config", path, "--scenario", "1", "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;

    json report = load_json(out / "report.json");
    ASSERT_FALSE(report.at("ranked_causes").empty());
    EXPECT_EQ(report.at("ranked_causes")[0].at("cause"), "recycled");
    EXPECT_EQ(slurp(out / "summary.txt"), r.out);
}

TEST(CliScenario, KeyLeakImplicatesTheLogicDesignStage) {
    fs::path dir = fresh_dir("scenario2");
    std::string path = write_config(dir, "run.json", {{"format_version", 1}, {"seed", 7}});
    fs::path out = dir / "out";
    CliResult r =
        run_cli({"run-scenario", "--config", path, "--scenario", "2", "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("logic-design"), std::string::npos);
    EXPECT_NE(r.out.find("3pip-vendor"), std::string::npos);
    EXPECT_EQ(slurp(out / "summary.txt"), r.out);
}

TEST(CliScenario, UnknownScenarioNumberIsAUsageError) {
    fs::path dir = fresh_dir("scenario9");
    std::string path = write_config(dir, "run.json", {{"format_version", 1}, {"seed", 7}});
    CliResult r = run_cli(
        {"run-scenario", "--config", path, "--scenario", "9", "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 1);
}

TEST(CliScenario, PipelineFailureNamesTheFailingStage) {
    fs::path dir = fresh_dir("scenario_fail");
    nlohmann::json broken =
        json::parse(siltwin::trust::save_threat_model(siltwin::trust::default_threat_model()));
    broken.erase("bn_template");
    fs::path model_path = dir / "broken_model.json";
    siltwin::write_file(model_path.string(), broken.dump(2) + "\n");

    std::string path = write_config(dir, "run.json",
                                    {{"format_version", 1},
                                     {"seed", 7},
                                     {"inputs", {{"threat_model", model_path.string()}}}});
    CliResult r = run_cli(
        {"run-scenario", "--config", path, "--scenario", "1", "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("failed at stage 'threat-model'"), std::string::npos);
}

// ---- report ------------------------------------------------------------

TEST(CliReport, RendersAStoredReportExactlyLikeTheRunThatWroteIt) {
    BnFixture fx = make_bn_fixture("report_render");
    fs::path out = fx.dir / "report";
    CliResult infer = run_cli({"infer", "--config", fx.config_path, "--out", out.string()});
    ASSERT_EQ(infer.code, 0);

    std::string cfg = write_config(
        fx.dir, "render.json",
        {{"format_version", 1},
         {"seed", 1},
         {"inputs", {{"report", (out / "report.json").string()}}}});
    CliResult render = run_cli({"report", "--config", cfg});
    EXPECT_EQ(render.code, 0);
    EXPECT_EQ(render.out, infer.out);
}

TEST(CliReport, MalformedReportFileIsAnInputError) {
    fs::path dir = fresh_dir("report_bad");
    fs::path bad = dir / "bad.json";
    siltwin::write_file(bad.string(), "{}\n");
    std::string cfg = write_config(
        dir, "render.json",
        {{"format_version", 1}, {"seed", 1}, {"inputs", {{"report", bad.string()}}}});
    CliResult r = run_cli({"report", "--config", cfg});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(bad.string()), std::string::npos);
}

// ---- reproducibility across every command ------------------------------

TEST(CliReproducibility, EveryCommandWritesTheSameBytesTwice) {
    fs::path dir = fresh_dir("repro_all");
    fs::path clean = simulated_fleet(dir, "clean", 42, 20);
    fs::path hit = injected_fleet(dir, "hit", clean, "recycled", {7}, 5);

    struct Case {
        std::string name;
        std::vector<std::string> args;  // without --out
        std::vector<std::string> files;
    };
    json detect_cfg = {{"format_version", 1}, {"seed", 5}, {"inputs", fleet_inputs(hit)}};
    json infer_cfg = {{"format_version", 1},
                      {"seed", 5},
                      {"observation", "accelerated-failure"},
                      {"device", siltwin::sim::device_id_for(7)},
                      {"inputs",
                       {{"fleet", (hit / "fleet.jsonl").string()},
                        {"tests", (hit / "tests.json").string()},
                        {"history", json::array({fleet_inputs(hit)})}}}};
    json extend_cfg = {{"format_version", 1},
                       {"seed", 5},
                       {"update",
                        {{"cause", "parametric-trojan"}, {"features", {"etch_rate"}}}}};
    json scenario_cfg = {{"format_version", 1}, {"seed", 5}, {"scenario", 2}};

    const std::vector<Case> cases = {
        {"simulate",
         {"simulate", "--config", write_config(dir, "c_sim.json", simulate_config(5, 15))},
         {"fleet.jsonl", "tests.json", "meta.json"}},
        {"detect",
         {"detect", "--config", write_config(dir, "c_det.json", detect_cfg)},
         {"evidence.json", "meta.json"}},
        {"infer",
         {"infer", "--config", write_config(dir, "c_inf.json", infer_cfg)},
         {"report.json", "meta.json"}},
        {"extend",
         {"extend", "--config", write_config(dir, "c_ext.json", extend_cfg)},
         {"threat_model.json", "meta.json"}},
        {"run-scenario",
         {"run-scenario", "--config", write_config(dir, "c_scn.json", scenario_cfg)},
         {"report.json", "summary.txt", "meta.json"}},
    };
    for (const Case& c : cases) {
        fs::path a = dir / (c.name + "_a");
        fs::path b = dir / (c.name + "_b");
        std::vector<std::string> run_a = c.args;
        run_a.insert(run_a.end(), {"--out", a.string()});
        std::vector<std::string> run_b = c.args;
        run_b.insert(run_b.end(), {"--out", b.string()});
        CliResult ra = run_cli(run_a);
        CliResult rb = run_cli(run_b);
        ASSERT_EQ(ra.code, 0) << c.name << ": " << ra.err;
        ASSERT_EQ(rb.code, 0) << c.name << ": " << rb.err;
        EXPECT_EQ(ra.out, rb.out) << c.name;
        for (const std::string& f : c.files)
            EXPECT_EQ(slurp(a / f), slurp(b / f)) << c.name << "/" << f;
    }
}
