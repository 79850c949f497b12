#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "e91/harness/scenarios.hpp"
#include "support.hpp"

using namespace e91;
using namespace e91::harness;
using testing_support::scratch_dir;
using testing_support::slurp;

namespace {

const char* kSmallIdeal = R"(scenario = ideal
seed = 5
session.duration_s = 1
session.block_s = 0.5
source.pair_rate = 2e4
channel.bob.delay_ps = 3000000
analysis.delay_max_ps = 10000000
calibration.duration_s = 1
)";

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

RunOutcome run_into(ScenarioConfig c, const std::filesystem::path& dir) {
    c.output = dir.string();
    return run_scenario(c);
}

}  // namespace

TEST(ParallelMap, KeepsIndexOrder) {
    const auto out = parallel_map(100, [](std::size_t i) { return i * i; }, 4);
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
    EXPECT_TRUE(parallel_map(0, [](std::size_t i) { return i; }).empty());
    EXPECT_THROW(parallel_map(
                     8, [](std::size_t i) { return i == 5 ? throw InvalidArgument("five") : i; }, 3),
                 InvalidArgument);
}

TEST(Blocks, CountCoversDuration) {
    EXPECT_EQ(block_count(30, 10), 3u);
    EXPECT_EQ(block_count(25, 10), 3u);
    EXPECT_EQ(block_count(1, 0.5), 2u);
    EXPECT_EQ(block_count(0.3, 0.1), 3u);
}

TEST(Scenario, IdealRunIsDeterministic) {
    const auto c = parse_config(kSmallIdeal);
    const auto d1 = scratch_dir("ideal_a"), d2 = scratch_dir("ideal_b");
    const auto r1 = run_into(c, d1);
    const auto r2 = run_into(c, d2);
    EXPECT_EQ(r1.exit_code, kSuccess);
    EXPECT_EQ(r1.files, r2.files);
    for (const auto& f : r1.files) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
    const auto report = slurp(d1 / "report.csv");
    EXPECT_EQ(lines(report), 1u + 2u + 1u);  // header, two blocks, aggregate
    ASSERT_TRUE(r1.report);
    EXPECT_LT(r1.report->aggregate.qber, 0.001);
    EXPECT_NEAR(r1.report->aggregate.s, 2 * std::numbers::sqrt2, 3 * r1.report->aggregate.s_err);
    EXPECT_EQ(lines(slurp(d1 / "terms.csv")), 6u);
    EXPECT_EQ(lines(slurp(d1 / "matrix.csv")), 1u + 16u);  // header and the 16 test-port pairs
}

TEST(Scenario, SeedChangesOutput) {
    auto c = parse_config(kSmallIdeal);
    const auto d1 = scratch_dir("seed_a"), d2 = scratch_dir("seed_b");
    run_into(c, d1);
    c.seed = 6;
    run_into(c, d2);
    EXPECT_NE(slurp(d1 / "report.csv"), slurp(d2 / "report.csv"));
    EXPECT_NE(slurp(d1 / "manifest.json"), slurp(d2 / "manifest.json"));
}

TEST(Scenario, ManifestRecordsHashSeedAndOutputs) {
    const auto c = parse_config(kSmallIdeal);
    const auto dir = scratch_dir("manifest");
    run_into(c, dir);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["seed"], 5);
    EXPECT_EQ(m["scenario"], "ideal");
    EXPECT_EQ(m["version"], kVersion);
    EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
    EXPECT_EQ(m["config"]["source.pair_rate"], "20000");
    EXPECT_FALSE(m["config"].contains("output"));
    EXPECT_EQ(m["outputs"].size(), 3u);
}

TEST(Scenario, DumpedTagsReanalyze) {
    auto c = parse_config(kSmallIdeal);
    c.dump_tags = true;
    const auto dir = scratch_dir("dump");
    const auto r = run_into(c, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "block_001_bob.tags"));
    std::ifstream fa(dir / "block_000_alice.tags"), fb(dir / "block_000_bob.tags");
    const auto a = read_tagstream(fa), b = read_tagstream(fb);
    const auto res = analyze_streams(a, b, c.protocol.window, c.protocol.delay);
    EXPECT_NEAR(static_cast<double>(res.delay), 3e6, 16.0);  // one histogram bin
    EXPECT_EQ(res.key_errors, 0u);
    ASSERT_TRUE(res.chsh);
    EXPECT_NEAR(res.chsh->s, 2 * std::numbers::sqrt2, 4 * res.chsh->std_error);
    EXPECT_EQ(r.report->blocks[0].raw_bits, res.key_pairs);
}

TEST(Scenario, AbortExitCode) {
    auto c = parse_config(kSmallIdeal);
    c.physics.source.reference_phase = 0.0;
    const auto r = run_into(c, scratch_dir("abort"));
    EXPECT_EQ(r.exit_code, kProtocolAbort);
    EXPECT_EQ(r.report->aggregate.verdict, Verdict::abort);
}

TEST(Scenario, StabilityRowsPerBlock) {
    auto c = parse_config(kSmallIdeal);
    c.scenario = Scenario::stability;
    c.duration_s = 2.0;
    c.block_s = 0.5;
    c.physics.drift.kind = DriftKind::linear;
    c.physics.drift.slope = 0.5;
    const auto dir = scratch_dir("stability");
    run_into(c, dir);
    const auto csv = slurp(dir / "stability.csv");
    EXPECT_EQ(lines(csv), 1u + 4u);
    EXPECT_NE(csv.find("\n3,1.500,2.000,4.016593,"), std::string::npos) << csv;  // pi + 0.5 * 1.75
}

TEST(Scenario, PhaseSweepRowsAndOrder) {
    auto c = parse_config(kSmallIdeal);
    c.scenario = Scenario::phase_sweep;
    c.sweep.values = {3.14159, 0.0, 1.5};
    c.sweep.duration_s = 0.5;
    const auto dir = scratch_dir("sweep");
    run_into(c, dir);
    const auto csv = slurp(dir / "sweep.csv");
    EXPECT_EQ(lines(csv), 1u + 3u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "point,source.reference_phase,phase_rad,S,S_err,qber,raw_bps,secure_bps,verdict");
    const auto points = run_phase_sweep(c);
    ASSERT_EQ(points.size(), 3u);
    EXPECT_EQ(points[1].value, 0.0);
    EXPECT_EQ(points[0].report.verdict, Verdict::accept);
    EXPECT_EQ(points[1].report.verdict, Verdict::abort);
    for (const auto& p : points)
        EXPECT_NEAR(p.report.s, std::numbers::sqrt2 * (1 - std::cos(p.phase)), 5 * p.report.s_err + 1e-9);
    const auto again = scratch_dir("sweep_again");
    run_into(c, again);
    EXPECT_EQ(slurp(again / "sweep.csv"), csv);
}

TEST(Scenario, TemperatureSweepMapsToPhase) {
    auto c = parse_config(kSmallIdeal);
    c.physics.drift.temp_coefficient = 0.8;
    c.physics.drift.reference_temperature = 25.0;
    c.sweep.parameter = "drift.temperature";
    c.sweep.values = {25.0, 26.0};
    c.sweep.duration_s = 0.2;
    const auto points = run_phase_sweep(c);
    EXPECT_NEAR(points[0].phase, std::numbers::pi, 1e-12);
    EXPECT_NEAR(points[1].phase, std::numbers::pi + 0.8, 1e-12);
}

TEST(Scenario, WindowSweepRows) {
    auto c = parse_config(kSmallIdeal);
    c.scenario = Scenario::window_sweep;
    c.sweep.values = {32, 64, 800};
    c.sweep.duration_s = 0.5;
    const auto dir = scratch_dir("window");
    run_into(c, dir);
    const auto csv = slurp(dir / "window_sweep.csv");
    EXPECT_EQ(lines(csv), 1u + 3u);
    EXPECT_NE(csv.find("\n800,"), std::string::npos);
}

TEST(Scenario, OutputDirectoryErrorsNamePath) {
    auto c = parse_config(kSmallIdeal);
    const auto dir = scratch_dir("blocked");
    std::ofstream(dir / "file") << "x";
    c.output = (dir / "file" / "sub").string();
    try {
        run_scenario(c);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("file/sub"), std::string::npos);
    }
}

TEST(Calibration, TargetAtCurrentRateKeepsTransmittance) {
    auto c = parse_config(kSmallIdeal);
    c.physics.bob_channel.transmittance = 0.4;
    const double rate = measure_raw_bps(c, 0.4);
    const auto r = calibrate_loss(c, rate, 0.05);
    EXPECT_EQ(r.transmittance, 0.4);
    EXPECT_EQ(r.evaluations, 1);
}

TEST(Calibration, ConvergesOnReachableTarget) {
    auto c = parse_config(kSmallIdeal);
    c.physics.bob_channel.transmittance = 0.9;
    const double full = measure_raw_bps(c, 1.0);
    const auto r = calibrate_loss(c, 0.3 * full, 0.02);
    EXPECT_NEAR(r.raw_bps, 0.3 * full, 0.02 * 0.3 * full);
    EXPECT_NEAR(measure_raw_bps(c, r.transmittance), r.raw_bps, 1e-9);
    EXPECT_GT(r.transmittance, 0.2);
    EXPECT_LT(r.transmittance, 0.4);
    EXPECT_EQ(calibrate_loss(c, 0.3 * full, 0.02).transmittance, r.transmittance);
}

TEST(Calibration, AboveLosslessFails) {
    auto c = parse_config(kSmallIdeal);
    c.physics.bob_channel.transmittance = 0.5;
    const double full = measure_raw_bps(c, 1.0);
    try {
        calibrate_loss(c, 2 * full, 0.05);
        FAIL();
    } catch (const CalibrationFailure& e) {
        EXPECT_EQ(e.high(), 1.0);
        EXPECT_GE(e.low(), 0.5);
    }
    EXPECT_THROW(calibrate_loss(c, -1, 0.05), InvalidArgument);
}
