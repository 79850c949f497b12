#pragma once

// Scenario configuration: a flat `key = value` text format with `#`
// comments. Every key is registered below with its parser and printer, so
// unknown keys are rejected, errors name the key path, and the canonical
// dump (all effective values) feeds the configuration hash.

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "e91/error.hpp"
#include "e91/optics.hpp"
#include "e91/protocol/session.hpp"

namespace e91::harness {

inline constexpr const char* kVersion = "1.0.0";

enum class Scenario : std::uint8_t { ideal, paper, phase_sweep, stability, window_sweep };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::ideal: return "ideal";
        case Scenario::paper: return "paper";
        case Scenario::phase_sweep: return "phase-sweep";
        case Scenario::stability: return "stability";
        case Scenario::window_sweep: return "window-sweep";
    }
    return "?";
}

inline bool parse_scenario(std::string_view text, Scenario& out) {
    for (auto s : {Scenario::ideal, Scenario::paper, Scenario::phase_sweep, Scenario::stability,
                   Scenario::window_sweep})
        if (text == to_string(s)) {
            out = s;
            return true;
        }
    return false;
}

struct SweepSpec {
    std::string parameter = "source.reference_phase";
    std::vector<double> values;
    double duration_s = 10.0;  ///< per point
};

struct CalibrationSpec {
    double target_raw_bps = 1500.0;
    double tolerance = 0.05;
    double duration_s = 10.0;
};

struct ScenarioConfig {
    Scenario scenario = Scenario::ideal;
    std::uint64_t seed = 1;
    std::string output = "out";
    double duration_s = 10.0;  ///< whole session
    double block_s = 10.0;
    SessionConfig physics;     ///< source.start_s / duration_s are set per block
    ProtocolParams protocol;
    SweepSpec sweep;
    CalibrationSpec calibration;
    bool dump_tags = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string print_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline bool to_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(text.c_str(), &end);
    return errno == 0 && end == text.c_str() + text.size() && std::isfinite(out);
}

template <typename T>
bool to_integer(const std::string& text, T& out) {
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return !text.empty() && ec == std::errc{} && ptr == last;
}

inline bool to_bool(const std::string& text, bool& out) {
    if (text == "true" || text == "1" || text == "yes") out = true;
    else if (text == "false" || text == "0" || text == "no") out = false;
    else return false;
    return true;
}

inline bool to_list(const std::string& text, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        if (!to_double(trim(item), v)) return false;
        out.push_back(v);
    }
    return !out.empty();
}

}  // namespace detail

/// One configurable key: parse text into the config or print its value.
struct Parameter {
    std::string key;
    std::string type;  ///< for error messages
    bool numeric = false;  ///< can be swept
    std::function<bool(ScenarioConfig&, const std::string&)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

namespace detail {

template <typename Access>
Parameter real(std::string key, Access access) {
    return {std::move(key), "number", true,
            [access](ScenarioConfig& c, const std::string& v) { return to_double(v, access(c)); },
            [access](const ScenarioConfig& c) { return print_double(access(const_cast<ScenarioConfig&>(c))); }};
}

template <typename T, typename Access>
Parameter integer(std::string key, Access access) {
    return {std::move(key), "integer", true,
            [access](ScenarioConfig& c, const std::string& v) {
                T x{};
                double d = 0.0;
                if (to_integer(v, x)) {
                    access(c) = x;
                    return true;
                }
                // allow 1e8-style integers
                if (to_double(v, d) && d == std::floor(d) && d >= static_cast<double>(std::numeric_limits<T>::min()) &&
                    d <= static_cast<double>(std::numeric_limits<T>::max())) {
                    access(c) = static_cast<T>(d);
                    return true;
                }
                return false;
            },
            [access](const ScenarioConfig& c) { return std::to_string(access(const_cast<ScenarioConfig&>(c))); }};
}

}  // namespace detail

inline const std::vector<Parameter>& parameters() {
    using detail::integer;
    using detail::real;
    static const std::vector<Parameter> table = [] {
        std::vector<Parameter> t;
        t.push_back({"scenario", "scenario name", false,
                     [](ScenarioConfig& c, const std::string& v) { return parse_scenario(v, c.scenario); },
                     [](const ScenarioConfig& c) { return std::string(to_string(c.scenario)); }});
        t.push_back(integer<std::uint64_t>("seed", [](ScenarioConfig& c) -> auto& { return c.seed; }));
        t.push_back({"output", "path", false,
                     [](ScenarioConfig& c, const std::string& v) {
                         c.output = v;
                         return !v.empty();
                     },
                     [](const ScenarioConfig& c) { return c.output; }});
        t.push_back(real("session.duration_s", [](ScenarioConfig& c) -> auto& { return c.duration_s; }));
        t.push_back(real("session.block_s", [](ScenarioConfig& c) -> auto& { return c.block_s; }));

        t.push_back(real("source.pair_rate", [](ScenarioConfig& c) -> auto& { return c.physics.source.pair_rate; }));
        t.push_back(real("source.reference_phase",
                         [](ScenarioConfig& c) -> auto& { return c.physics.source.reference_phase; }));

        t.push_back(real("split.alice.a0", [](ScenarioConfig& c) -> auto& { return c.physics.split.a0; }));
        t.push_back(real("split.alice.a1", [](ScenarioConfig& c) -> auto& { return c.physics.split.a1; }));
        t.push_back(real("split.alice.a2", [](ScenarioConfig& c) -> auto& { return c.physics.split.a2; }));
        t.push_back(real("split.bob.b0", [](ScenarioConfig& c) -> auto& { return c.physics.split.b0; }));
        t.push_back(real("split.bob.b1", [](ScenarioConfig& c) -> auto& { return c.physics.split.b1; }));

        for (const char* party : {"alice", "bob"}) {
            const bool a = std::string(party) == "alice";
            auto ch = [a](ScenarioConfig& c) -> ChannelModel& {
                return a ? c.physics.alice_channel : c.physics.bob_channel;
            };
            auto det = [a](ScenarioConfig& c) -> DetectorModel& {
                return a ? c.physics.alice_detector : c.physics.bob_detector;
            };
            const std::string cp = std::string("channel.") + party + ".";
            const std::string dp = std::string("detector.") + party + ".";
            t.push_back(real(cp + "transmittance", [ch](ScenarioConfig& c) -> auto& { return ch(c).transmittance; }));
            t.push_back(integer<Picoseconds>(cp + "delay_ps", [ch](ScenarioConfig& c) -> auto& { return ch(c).delay_ps; }));
            t.push_back(real(dp + "efficiency", [det](ScenarioConfig& c) -> auto& { return det(c).efficiency; }));
            t.push_back(real(dp + "dark_rate", [det](ScenarioConfig& c) -> auto& { return det(c).dark_rate; }));
            t.push_back(real(dp + "jitter_fwhm_ps", [det](ScenarioConfig& c) -> auto& { return det(c).jitter_fwhm_ps; }));
            t.push_back(integer<Picoseconds>(dp + "dead_time_ps",
                                             [det](ScenarioConfig& c) -> auto& { return det(c).dead_time_ps; }));
        }
        t.push_back(integer<Picoseconds>("timebin.delay_ps",
                                         [](ScenarioConfig& c) -> auto& { return c.physics.bin_delay_ps; }));

        t.push_back({"drift.kind", "drift kind", false,
                     [](ScenarioConfig& c, const std::string& v) {
                         for (auto k : {DriftKind::constant, DriftKind::linear, DriftKind::sinusoidal,
                                        DriftKind::random_walk})
                             if (v == to_string(k)) {
                                 c.physics.drift.kind = k;
                                 return true;
                             }
                         return false;
                     },
                     [](const ScenarioConfig& c) { return to_string(c.physics.drift.kind); }});
        t.push_back(real("drift.offset", [](ScenarioConfig& c) -> auto& { return c.physics.drift.offset; }));
        t.push_back(real("drift.slope", [](ScenarioConfig& c) -> auto& { return c.physics.drift.slope; }));
        t.push_back(real("drift.amplitude", [](ScenarioConfig& c) -> auto& { return c.physics.drift.amplitude; }));
        t.push_back(real("drift.period_s", [](ScenarioConfig& c) -> auto& { return c.physics.drift.period_s; }));
        t.push_back(
            real("drift.step_variance", [](ScenarioConfig& c) -> auto& { return c.physics.drift.step_variance; }));
        t.push_back(real("drift.step_s", [](ScenarioConfig& c) -> auto& { return c.physics.drift.step_s; }));
        t.push_back(integer<std::uint64_t>("drift.seed", [](ScenarioConfig& c) -> auto& { return c.physics.drift.seed; }));
        t.push_back(
            real("drift.temp_coefficient", [](ScenarioConfig& c) -> auto& { return c.physics.drift.temp_coefficient; }));
        t.push_back(real("drift.temperature", [](ScenarioConfig& c) -> auto& { return c.physics.drift.temperature; }));
        t.push_back(real("drift.reference_temperature",
                         [](ScenarioConfig& c) -> auto& { return c.physics.drift.reference_temperature; }));

        t.push_back(integer<PsOffset>("analysis.window_ps", [](ScenarioConfig& c) -> auto& { return c.protocol.window; }));
        t.push_back(
            integer<PsOffset>("analysis.bin_ps", [](ScenarioConfig& c) -> auto& { return c.protocol.delay.bin_width; }));
        t.push_back(integer<PsOffset>("analysis.delay_min_ps",
                                      [](ScenarioConfig& c) -> auto& { return c.protocol.delay.min_delay; }));
        t.push_back(integer<PsOffset>("analysis.delay_max_ps",
                                      [](ScenarioConfig& c) -> auto& { return c.protocol.delay.max_delay; }));
        t.push_back(integer<std::size_t>("analysis.delay_tags",
                                         [](ScenarioConfig& c) -> auto& { return c.protocol.delay.max_alice_tags; }));

        t.push_back(
            real("protocol.sample_fraction", [](ScenarioConfig& c) -> auto& { return c.protocol.sample_fraction; }));
        t.push_back({"protocol.qber_mode", "sample|full", false,
                     [](ScenarioConfig& c, const std::string& v) {
                         if (v == "sample") c.protocol.qber_mode = QberMode::sample;
                         else if (v == "full") c.protocol.qber_mode = QberMode::full;
                         else return false;
                         return true;
                     },
                     [](const ScenarioConfig& c) {
                         return std::string(c.protocol.qber_mode == QberMode::sample ? "sample" : "full");
                     }});
        t.push_back(real("protocol.abort_sigma", [](ScenarioConfig& c) -> auto& { return c.protocol.abort_sigma; }));

        t.push_back({"sweep.parameter", "parameter key", false,
                     [](ScenarioConfig& c, const std::string& v) {
                         c.sweep.parameter = v;
                         return true;
                     },
                     [](const ScenarioConfig& c) { return c.sweep.parameter; }});
        t.push_back({"sweep.values", "comma-separated numbers", false,
                     [](ScenarioConfig& c, const std::string& v) { return detail::to_list(v, c.sweep.values); },
                     [](const ScenarioConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.sweep.values.size(); ++i)
                             s += (i ? "," : "") + detail::print_double(c.sweep.values[i]);
                         return s;
                     }});
        t.push_back(real("sweep.duration_s", [](ScenarioConfig& c) -> auto& { return c.sweep.duration_s; }));
        t.push_back(real("calibration.target_raw_bps",
                         [](ScenarioConfig& c) -> auto& { return c.calibration.target_raw_bps; }));
        t.push_back(
            real("calibration.tolerance", [](ScenarioConfig& c) -> auto& { return c.calibration.tolerance; }));
        t.push_back(
            real("calibration.duration_s", [](ScenarioConfig& c) -> auto& { return c.calibration.duration_s; }));
        t.push_back({"output.dump_tags", "boolean", false,
                     [](ScenarioConfig& c, const std::string& v) { return detail::to_bool(v, c.dump_tags); },
                     [](const ScenarioConfig& c) { return std::string(c.dump_tags ? "true" : "false"); }});
        return t;
    }();
    return table;
}

inline const Parameter* find_parameter(std::string_view key) {
    for (const auto& p : parameters())
        if (p.key == key) return &p;
    return nullptr;
}

/// Sets one numeric parameter by key path (used by sweeps).
inline void set_parameter(ScenarioConfig& c, const std::string& key, double value) {
    const auto* p = find_parameter(key);
    if (!p || !p->numeric) throw ConfigError(key + ": not a numeric parameter");
    if (!p->set(c, detail::print_double(value))) throw ConfigError(key + ": cannot take value " +
                                                                   detail::print_double(value));
}

/// Constraint problems, each prefixed with its key path.
inline std::vector<std::string> validate(const ScenarioConfig& c) {
    std::vector<std::string> p;
    SessionConfig physics = c.physics;
    physics.source.duration_s = c.block_s > 0.0 ? c.block_s : 1.0;
    for (auto& problem : e91::validate(physics))
        if (problem.rfind("source.duration_s", 0) != 0) p.push_back(problem);
    if (!(c.physics.source.pair_rate > 0.0)) p.push_back("source.pair_rate: must be > 0");
    if (!(c.duration_s > 0.0)) p.push_back("session.duration_s: must be > 0");
    if (!(c.block_s > 0.0)) p.push_back("session.block_s: must be > 0");
    if (c.protocol.window < 1) p.push_back("analysis.window_ps: must be >= 1");
    if (c.protocol.delay.bin_width < 1) p.push_back("analysis.bin_ps: must be >= 1");
    if (c.protocol.delay.max_delay <= c.protocol.delay.min_delay)
        p.push_back("analysis.delay_max_ps: must exceed analysis.delay_min_ps");
    if (c.protocol.delay.max_alice_tags < 1) p.push_back("analysis.delay_tags: must be >= 1");
    if (!(c.protocol.sample_fraction > 0.0 && c.protocol.sample_fraction <= 0.5))
        p.push_back("protocol.sample_fraction: must lie in (0, 0.5]");
    if (!(c.protocol.abort_sigma >= 0.0)) p.push_back("protocol.abort_sigma: must be >= 0");
    if (c.scenario == Scenario::phase_sweep || c.scenario == Scenario::window_sweep) {
        if (c.sweep.values.size() < 2) p.push_back("sweep.values: need at least 2 points");
        if (!(c.sweep.duration_s > 0.0)) p.push_back("sweep.duration_s: must be > 0");
    }
    if (c.scenario == Scenario::phase_sweep) {
        const auto* param = find_parameter(c.sweep.parameter);
        if (!param || !param->numeric) p.push_back("sweep.parameter: '" + c.sweep.parameter + "' is not a numeric key");
    }
    if (c.scenario == Scenario::window_sweep)
        for (double w : c.sweep.values)
            if (!(w >= 1.0) || w != std::floor(w)) {
                p.push_back("sweep.values: windows must be whole picoseconds >= 1");
                break;
            }
    if (!(c.calibration.target_raw_bps > 0.0)) p.push_back("calibration.target_raw_bps: must be > 0");
    if (!(c.calibration.tolerance > 0.0 && c.calibration.tolerance < 1.0))
        p.push_back("calibration.tolerance: must lie in (0, 1)");
    if (!(c.calibration.duration_s > 0.0)) p.push_back("calibration.duration_s: must be > 0");
    return p;
}

/// Parses and validates; throws ConfigError listing every problem.
inline ScenarioConfig parse_config(std::string_view text) {
    ScenarioConfig c;
    std::vector<std::string> problems;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const auto key = detail::trim(std::string_view(body).substr(0, eq));
        const auto value = detail::trim(std::string_view(body).substr(eq + 1));
        const auto* param = find_parameter(key);
        if (!param) {
            problems.push_back(key + ": unknown key");
            continue;
        }
        if (!seen.insert(key).second) {
            problems.push_back(key + ": given more than once");
            continue;
        }
        if (!param->set(c, value)) problems.push_back(key + ": expected " + param->type + ", got '" + value + "'");
    }
    if (problems.empty()) problems = validate(c);
    if (!problems.empty()) throw ConfigError(problems);
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Every effective parameter as `key = value` lines in registry order.
inline std::string canonical_config(const ScenarioConfig& c) {
    std::string out;
    for (const auto& p : parameters()) out += p.key + " = " + p.get(c) + "\n";
    return out;
}

/// FNV-1a of the canonical dump; output location does not count.
inline std::uint64_t config_hash(const ScenarioConfig& c) {
    ScenarioConfig copy = c;
    copy.output = "";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(copy)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace e91::harness
