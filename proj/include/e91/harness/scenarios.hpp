#pragma once

// Scenario orchestration: block-wise simulation feeding the protocol,
// parameter sweeps, loss calibration and offline analysis of dumped streams.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "e91/coincidence.hpp"
#include "e91/error.hpp"
#include "e91/harness/config.hpp"
#include "e91/optics.hpp"
#include "e91/protocol/session.hpp"
#include "e91/rng.hpp"

namespace e91::harness {

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kRuntimeError = 2, kProtocolAbort = 3 };

/// Runs f(0..n-1) on up to `threads` workers; results keep index order.
template <typename F>
auto parallel_map(std::size_t n, F f, unsigned threads = std::thread::hardware_concurrency())
    -> std::vector<decltype(f(std::size_t{}))> {
    using R = decltype(f(std::size_t{}));
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                out[i] = f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline EndpointConfig endpoint_config(const ScenarioConfig& c) {
    EndpointConfig e;
    e.settings = c.physics.settings;
    e.params = c.protocol;
    e.params.seed = c.seed;
    return e;
}

inline std::size_t block_count(double duration_s, double block_s) {
    return static_cast<std::size_t>(std::ceil(duration_s / block_s - 1e-9));
}

/// Simulates block k of a session of duration_s split into block_s pieces.
/// Time is absolute, so drift continues across blocks.
inline SimulatedSession simulate_block(const ScenarioConfig& c, std::size_t k, double duration_s, double block_s,
                                       std::uint64_t seed) {
    SessionConfig physics = c.physics;
    physics.source.start_s = static_cast<double>(k) * block_s;
    physics.source.duration_s = std::min(block_s, duration_s - physics.source.start_s);
    return simulate_session(physics, derive_seed(seed, k));
}

/// Protocol over a simulated session; at most one block is in memory.
/// on_block sees each block's streams (e.g. to dump them).
inline SessionResult simulate_and_run(const ScenarioConfig& c, double duration_s, std::uint64_t seed,
                                      const SessionOptions& options = {},
                                      const std::function<void(std::size_t, const SimulatedSession&)>& on_block = {}) {
    const auto cfg = endpoint_config(c);
    const std::size_t blocks = block_count(duration_s, c.block_s);
    return run_session(
        cfg, cfg, blocks,
        [&](std::size_t k) {
            auto sim = simulate_block(c, k, duration_s, c.block_s, seed);
            if (on_block) on_block(k, sim);
            return BlockStreams{std::move(sim.alice), std::move(sim.bob)};
        },
        options);
}

/// Interferometer phase at time t seen by the source (reference + drift).
inline double total_phase(const ScenarioConfig& c, double t_s) {
    return c.physics.source.reference_phase + phase_at(c.physics.drift, t_s);
}

// ---- offline analysis -------------------------------------------------------

struct AnalysisResult {
    PsOffset delay = 0;
    std::size_t coincidences = 0;
    CoincidenceMatrix matrix;
    std::optional<ChshEstimate> chsh;  ///< empty when a CHSH term has no counts
    std::uint64_t key_pairs = 0;
    std::uint64_t key_errors = 0;
    double qber() const {
        return key_pairs ? static_cast<double>(key_errors) / static_cast<double>(key_pairs) : std::nan("");
    }
};

/// Full-knowledge analysis of two streams: delay search, matching, the
/// coincidence matrix, S, and QBER over every key pair.
inline AnalysisResult analyze_streams(const TagStream& a, const TagStream& b, PsOffset window,
                                      const DelaySearch& search, const SettingSet& settings = SettingSet::standard()) {
    AnalysisResult r;
    r.delay = estimate_delay(a, b, search);
    const auto pairs = match_coincidences(a, b, window, r.delay);
    r.coincidences = pairs.size();
    r.matrix = build_matrix(pairs, window, r.delay, a.duration);
    try {
        r.chsh = chsh_from_counts(r.matrix, settings);
    } catch (const InsufficientStatistics&) {
    }
    const auto s = sift(pairs, settings);
    r.key_pairs = s.alice.size();
    r.key_errors = count_mismatches(s.alice.bits, s.bob.bits);
    return r;
}

// ---- loss calibration -------------------------------------------------------

struct CalibrationResult {
    double transmittance = 0.0;
    double raw_bps = 0.0;
    int evaluations = 0;
};

/// Raw (sifted, pre-sampling) key rate at Bob transmittance t. Every call uses
/// the same seed so successive evaluations share random numbers.
inline double measure_raw_bps(const ScenarioConfig& c, double transmittance) {
    ScenarioConfig trial = c;
    trial.physics.bob_channel.transmittance = transmittance;
    trial.physics.source.start_s = 0.0;
    trial.physics.source.duration_s = c.calibration.duration_s;
    const auto sim = simulate_session(trial.physics, derive_seed(c.seed, 0xCA11B));
    try {
        const auto r = analyze_streams(sim.alice, sim.bob, c.protocol.window, c.protocol.delay, c.physics.settings);
        return static_cast<double>(r.key_pairs) / c.calibration.duration_s;
    } catch (const NoCorrelation&) {
        return 0.0;
    } catch (const InsufficientData&) {
        return 0.0;
    }
}

/// Bracketed search on Bob's channel transmittance until the simulated raw
/// key rate is within tolerance (relative) of the target.
inline CalibrationResult calibrate_loss(const ScenarioConfig& c, double target_raw_bps, double tolerance,
                                        int max_evaluations = 40) {
    if (!(target_raw_bps > 0.0) || !(tolerance > 0.0 && tolerance < 1.0))
        throw InvalidArgument("calibrate_loss: bad target or tolerance");
    CalibrationResult r;
    auto within = [&](double rate) { return std::abs(rate - target_raw_bps) <= tolerance * target_raw_bps; };
    auto eval = [&](double t) {
        ++r.evaluations;
        return measure_raw_bps(c, t);
    };

    // The raw rate is close to proportional to Bob's transmittance, so the
    // proportional step usually lands inside the tolerance at once; the
    // bracket [lo, hi] guarantees progress when it does not. The lossless
    // point is only simulated when the step asks for it.
    double t = c.physics.bob_channel.transmittance;
    double rate = eval(t);
    double lo = 0.0, hi = 1.0;
    bool top_checked = t >= 1.0;
    while (!within(rate)) {
        (rate < target_raw_bps ? lo : hi) = t;
        if (rate < target_raw_bps && t >= 1.0)
            throw CalibrationFailure("target raw rate " + detail::print_double(target_raw_bps) +
                                         " bps is above the lossless rate " + detail::print_double(rate) + " bps",
                                     lo, 1.0);
        if (r.evaluations >= max_evaluations) break;
        double next = rate > 0.0 ? t * target_raw_bps / rate : 0.5 * (lo + hi);
        if (next >= hi && hi >= 1.0 && !top_checked) {
            next = 1.0;
            top_checked = true;
        } else if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        t = next;
        rate = eval(t);
    }
    if (within(rate)) return {t, rate, r.evaluations};
    throw CalibrationFailure("calibration did not converge", lo, hi);
}

// ---- scenario runs ----------------------------------------------------------

struct RunOutcome {
    int exit_code = kSuccess;
    std::vector<std::string> files;
    std::optional<SecurityReport> report;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content, RunOutcome& out) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
    f << content;
    if (!f) throw std::runtime_error(path.string() + ": write failed");
    out.files.push_back(path.filename().string());
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string manifest_json(const ScenarioConfig& c, const std::vector<std::string>& files) {
    nlohmann::ordered_json m;
    m["tool"] = "e91sim";
    m["version"] = kVersion;
    m["scenario"] = to_string(c.scenario);
    m["seed"] = c.seed;
    m["config_hash"] = hex64(config_hash(c));
    nlohmann::ordered_json cfg;
    for (const auto& p : parameters())
        if (p.key != "output") cfg[p.key] = p.get(c);
    m["config"] = cfg;
    m["outputs"] = files;
    return m.dump(2) + "\n";
}

inline std::string fmt(double v, int digits = 6) { return e91::detail::format_fixed(v, digits); }

inline int session_exit(const SecurityReport& r) {
    return r.complete && r.aggregate.verdict == Verdict::accept ? kSuccess : kProtocolAbort;
}

}  // namespace detail

inline RunOutcome run_session_scenario(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunOutcome out;
    auto dump = [&](std::size_t k, const SimulatedSession& sim) {
        if (!c.dump_tags) return;
        char name[64];
        for (const auto* s : {&sim.alice, &sim.bob}) {
            std::snprintf(name, sizeof name, "block_%03zu_%s.tags", k, to_string(s->party).c_str());
            std::ostringstream text;
            write_tagstream(text, *s);
            detail::write_file(dir / name, text.str(), out);
        }
    };
    auto result = simulate_and_run(c, c.duration_s, c.seed, {}, dump);
    detail::write_file(dir / "report.csv", report_csv(result.report), out);

    std::ostringstream matrix;
    write_matrix_csv(matrix, result.alice_total.test_matrix);
    detail::write_file(dir / "matrix.csv", matrix.str(), out);
    try {
        std::ostringstream terms;
        write_terms_csv(terms, chsh_from_counts(result.alice_total.test_matrix, c.physics.settings));
        detail::write_file(dir / "terms.csv", terms.str(), out);
    } catch (const InsufficientStatistics&) {
    }

    if (c.scenario == Scenario::stability) {
        std::string csv = "block,t_start_s,t_end_s,phase_mid_rad,S,S_err,verdict\n";
        for (std::size_t k = 0; k < result.report.blocks.size(); ++k) {
            const double t0 = static_cast<double>(k) * c.block_s;
            const double t1 = std::min(c.duration_s, t0 + c.block_s);
            const auto& b = result.report.blocks[k];
            csv += std::to_string(k) + "," + detail::fmt(t0, 3) + "," + detail::fmt(t1, 3) + "," +
                   detail::fmt(total_phase(c, 0.5 * (t0 + t1))) + "," + detail::fmt(b.s) + "," + detail::fmt(b.s_err) +
                   "," + to_string(b.verdict) + "\n";
        }
        detail::write_file(dir / "stability.csv", csv, out);
    }
    out.exit_code = detail::session_exit(result.report);
    out.report = std::move(result.report);
    return out;
}

struct SweepPoint {
    double value = 0.0;
    double phase = 0.0;
    BlockReport report;
};

/// One protocol run of sweep.duration_s per value of the swept parameter.
inline std::vector<SweepPoint> run_phase_sweep(const ScenarioConfig& c) {
    return parallel_map(c.sweep.values.size(), [&](std::size_t i) {
        ScenarioConfig point = c;
        set_parameter(point, c.sweep.parameter, c.sweep.values[i]);
        point.block_s = c.sweep.duration_s;
        if (auto problems = validate(point); !problems.empty()) throw ConfigError(problems);
        const auto result = simulate_and_run(point, c.sweep.duration_s, derive_seed(c.seed, 0x5357'0000ULL + i));
        SweepPoint p;
        p.value = c.sweep.values[i];
        p.phase = total_phase(point, 0.5 * c.sweep.duration_s);
        p.report = result.report.aggregate;
        return p;
    });
}

inline RunOutcome run_sweep_scenario(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunOutcome out;
    const auto points = run_phase_sweep(c);
    std::string csv = "point," + c.sweep.parameter + ",phase_rad,S,S_err,qber,raw_bps,secure_bps,verdict\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        csv += std::to_string(i) + "," + e91::harness::detail::print_double(p.value) + "," + detail::fmt(p.phase) + "," +
               detail::fmt(p.report.s) + "," + detail::fmt(p.report.s_err) + "," + detail::fmt(p.report.qber) + "," +
               detail::fmt(p.report.raw_bps, 3) + "," + detail::fmt(p.report.secure_bps, 3) + "," +
               to_string(p.report.verdict) + "\n";
    }
    detail::write_file(dir / "sweep.csv", csv, out);
    return out;
}

/// S per coincidence window on one simulated session of sweep.duration_s.
inline std::vector<WindowPoint> run_window_sweep(const ScenarioConfig& c) {
    ScenarioConfig one = c;
    one.block_s = c.sweep.duration_s;
    const auto sim = simulate_block(one, 0, c.sweep.duration_s, c.sweep.duration_s, derive_seed(c.seed, 0x5749));
    const auto delay = estimate_delay(sim.alice, sim.bob, c.protocol.delay);
    std::vector<PsOffset> windows;
    for (double w : c.sweep.values) windows.push_back(static_cast<PsOffset>(w));
    return window_sweep(sim.alice, sim.bob, windows, delay, c.physics.settings);
}

inline RunOutcome run_window_scenario(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunOutcome out;
    std::string csv = "window_ps,S,S_err,coincidences\n";
    for (const auto& p : run_window_sweep(c))
        csv += std::to_string(p.window) + "," + detail::fmt(p.s) + "," + detail::fmt(p.std_error) + "," +
               std::to_string(p.coincidences) + "\n";
    detail::write_file(dir / "window_sweep.csv", csv, out);
    return out;
}

/// Runs the configured scenario, writing CSVs and manifest.json into
/// c.output. Output bytes depend only on the configuration and seed.
inline RunOutcome run_scenario(const ScenarioConfig& c) {
    if (auto problems = validate(c); !problems.empty()) throw ConfigError(problems);
    const std::filesystem::path dir(c.output);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error(dir.string() + ": cannot create output directory: " + ec.message());
    RunOutcome out;
    try {
        switch (c.scenario) {
            case Scenario::ideal:
            case Scenario::paper:
            case Scenario::stability: out = run_session_scenario(c, dir); break;
            case Scenario::phase_sweep: out = run_sweep_scenario(c, dir); break;
            case Scenario::window_sweep: out = run_window_scenario(c, dir); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("scenario ") + to_string(c.scenario) + ": " + e.what());
    }
    detail::write_file(dir / "manifest.json", detail::manifest_json(c, out.files), out);
    return out;
}

}  // namespace e91::harness
