// e91sim: run scenarios, calibrate channel loss, analyze dumped tag streams.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "e91/harness/config.hpp"
#include "e91/harness/scenarios.hpp"

namespace h = e91::harness;

namespace {

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out,
            const std::optional<std::string>& scenario) {
    auto c = h::load_config(path);
    if (seed) c.seed = *seed;
    if (out) c.output = *out;
    if (scenario && !h::parse_scenario(*scenario, c.scenario))
        throw e91::ConfigError("scenario: unknown scenario '" + *scenario + "'");
    if (auto problems = h::validate(c); !problems.empty()) throw e91::ConfigError(problems);
    const auto result = h::run_scenario(c);
    for (const auto& f : result.files) std::cout << c.output << "/" << f << "\n";
    if (result.report) {
        const auto& a = result.report->aggregate;
        std::cout << "aggregate: S=" << e91::detail::format_fixed(a.s, 4) << " +- "
                  << e91::detail::format_fixed(a.s_err, 4) << " qber=" << e91::detail::format_fixed(a.qber, 4)
                  << " raw=" << e91::detail::format_fixed(a.raw_bps, 1)
                  << " bps secure=" << e91::detail::format_fixed(a.secure_bps, 1) << " bps " << to_string(a.verdict)
                  << "\n";
        if (!result.report->complete) std::cerr << "session failed: " << result.report->failure << "\n";
    }
    return result.exit_code;
}

int cmd_calibrate(const std::string& path, double target, const std::optional<double>& tolerance) {
    auto c = h::load_config(path);
    const double tol = tolerance.value_or(c.calibration.tolerance);
    try {
        const auto r = h::calibrate_loss(c, target, tol);
        std::printf("channel.bob.transmittance = %.6g\n# raw rate %.1f bps after %d evaluations\n", r.transmittance,
                    r.raw_bps, r.evaluations);
    } catch (const e91::CalibrationFailure& e) {
        std::fprintf(stderr, "calibration failed: %s (bracket [%.6g, %.6g])\n", e.what(), e.low(), e.high());
        return h::kRuntimeError;
    }
    return h::kSuccess;
}

int cmd_analyze(const std::string& alice_path, const std::string& bob_path, e91::PsOffset window,
                const e91::DelaySearch& search) {
    auto load = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error(p + ": cannot open tag stream");
        return e91::read_tagstream(in);
    };
    const auto a = load(alice_path);
    const auto b = load(bob_path);
    if (a.party != e91::Party::alice || b.party != e91::Party::bob)
        throw std::runtime_error("expected an alice stream followed by a bob stream");
    const auto r = h::analyze_streams(a, b, window, search);
    std::cout << "# delay_ps " << r.delay << "\n# coincidences " << r.coincidences << "\n";
    e91::write_matrix_csv(std::cout, r.matrix);
    std::cout << "\n";
    if (r.chsh) e91::write_terms_csv(std::cout, *r.chsh);
    else std::cout << "# S not estimable: a CHSH setting pair has no coincidences\n";
    std::cout << "\n# key_pairs " << r.key_pairs << "\n# qber " << e91::detail::format_fixed(r.qber(), 6) << "\n";
    return h::kSuccess;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Modified E91 QKD simulator and analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, scenario;
    auto* run = app.add_subcommand("run", "run the scenario described by a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--seed", seed, "override the seed");
    run->add_option("--out", out, "override the output directory");
    run->add_option("--scenario", scenario, "override the scenario");

    double target = 0.0;
    std::optional<double> tolerance;
    auto* cal = app.add_subcommand("calibrate", "fit Bob's channel transmittance to a raw key rate");
    cal->add_option("config", config_path, "config file")->required();
    cal->add_option("--target-raw", target, "raw key rate in bits/s")->required();
    cal->add_option("--tolerance", tolerance, "relative tolerance (default from config)");

    std::string alice_path, bob_path;
    e91::PsOffset window = 64;
    e91::DelaySearch search;
    auto* ana = app.add_subcommand("analyze", "coincidence analysis of two dumped tag streams");
    ana->add_option("alice", alice_path, "alice tag stream")->required();
    ana->add_option("bob", bob_path, "bob tag stream")->required();
    ana->add_option("--window", window, "coincidence window (ps, full width)")->required();
    ana->add_option("--delay-min", search.min_delay, "delay search lower bound (ps)");
    ana->add_option("--delay-max", search.max_delay, "delay search upper bound (ps)");
    ana->add_option("--bin", search.bin_width, "delay histogram bin (ps)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : h::kConfigError;
    }

    try {
        if (*run) return cmd_run(config_path, seed, out, scenario);
        if (*cal) return cmd_calibrate(config_path, target, tolerance);
        if (*ana) return cmd_analyze(alice_path, bob_path, window, search);
    } catch (const e91::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return h::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return h::kRuntimeError;
    }
    return h::kSuccess;
}
