#pragma once

// Monte-Carlo physical layer: Poisson pair emission, passive basis choice,
// Born-rule outcomes, interferometer phase drift, channel loss and delay,
// detector efficiency / jitter / dark counts / dead time.
//
// Time-bin model. Bob's time basis resolves the bin: |0> arrives at offset 0,
// |1> one bin delay later. His superposition basis keeps only the central
// interference peak (offset one bin); with probability 1/2 the photon instead
// lands in a satellite peak at offset 0 or two bins, carrying an outcome that
// is uncorrelated with Alice. Alice's photon shares the pair's bin offset, so
// every post-selected pair arrives with the same relative delay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "e91/error.hpp"
#include "e91/quantum.hpp"
#include "e91/rng.hpp"
#include "e91/tagstream.hpp"

namespace e91 {

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

struct SourceModel {
    double pair_rate = 1e5;  ///< pairs / s
    double start_s = 0.0;
    double duration_s = 1.0;
    double reference_phase = std::numbers::pi;  ///< radians
};

struct ChannelModel {
    double transmittance = 1.0;
    Picoseconds delay_ps = 0;
};

struct DetectorModel {
    double efficiency = 1.0;
    double dark_rate = 0.0;  ///< counts / s per detector
    double jitter_fwhm_ps = 0.0;
    Picoseconds dead_time_ps = 0;

    double jitter_sigma_ps() const noexcept { return jitter_fwhm_ps / kFwhmPerSigma; }
};

enum class DriftKind : std::uint8_t { constant, linear, sinusoidal, random_walk };

inline std::string to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::constant: return "constant";
        case DriftKind::linear: return "linear";
        case DriftKind::sinusoidal: return "sinusoidal";
        case DriftKind::random_walk: return "random_walk";
    }
    return "?";
}

/// Interferometer phase relative to the source's reference phase. The
/// temperature term is added for every kind.
struct DriftModel {
    DriftKind kind = DriftKind::constant;
    double offset = 0.0;         ///< rad
    double slope = 0.0;          ///< rad / s
    double amplitude = 0.0;      ///< rad
    double period_s = 1.0;
    double step_variance = 0.0;  ///< rad^2 / s
    double step_s = 1.0;
    std::uint64_t seed = 0;
    double temp_coefficient = 0.0;  ///< rad / degC
    double temperature = 0.0;
    double reference_temperature = 0.0;
};

/// Evaluates a drift model; random-walk increments are generated once up to
/// the horizon. Increments are drawn in order, so every horizon sees the same
/// walk prefix for a given seed.
class PhaseTrack {
public:
    PhaseTrack(const DriftModel& drift, double horizon_s) : drift_(drift) {
        if (drift_.kind == DriftKind::random_walk && drift_.step_variance > 0.0) {
            const auto steps = static_cast<std::size_t>(std::max(0.0, std::floor(horizon_s / drift_.step_s))) + 1;
            Rng rng = make_rng(drift_.seed, 0x7261'6e64'7761'6c6bULL);
            std::normal_distribution<double> step(0.0, std::sqrt(drift_.step_variance * drift_.step_s));
            walk_.reserve(steps + 1);
            walk_.push_back(0.0);
            for (std::size_t k = 0; k < steps; ++k) walk_.push_back(walk_.back() + step(rng));
        }
    }

    double at(double t_s) const {
        if (!(t_s >= 0.0)) throw InvalidArgument("phase_at: time must be non-negative");
        double phase = drift_.offset + drift_.temp_coefficient * (drift_.temperature - drift_.reference_temperature);
        switch (drift_.kind) {
            case DriftKind::constant: break;
            case DriftKind::linear: phase += drift_.slope * t_s; break;
            case DriftKind::sinusoidal:
                phase += drift_.amplitude * std::sin(2.0 * std::numbers::pi * t_s / drift_.period_s);
                break;
            case DriftKind::random_walk:
                if (!walk_.empty()) {
                    const auto k = static_cast<std::size_t>(std::floor(t_s / drift_.step_s));
                    if (k >= walk_.size()) throw InvalidArgument("phase_at: time beyond the precomputed horizon");
                    phase += walk_[k];
                }
                break;
        }
        return phase;
    }

private:
    DriftModel drift_;
    std::vector<double> walk_;
};

inline double phase_at(const DriftModel& drift, double t_s) { return PhaseTrack(drift, t_s).at(t_s); }

/// Passive beam-splitter ratios per party; each party's ratios sum to 1.
struct SplittingRatios {
    double a0 = 0.25;
    double a1 = 0.25;
    double a2 = 0.5;
    double b0 = 0.5;
    double b1 = 0.5;
};

inline void check_ratios(const SplittingRatios& r) {
    for (double v : {r.a0, r.a1, r.a2, r.b0, r.b1})
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("split: ratios must lie in [0, 1]");
    if (std::abs(r.a0 + r.a1 + r.a2 - 1.0) > 1e-9) throw ConfigError("split.alice: ratios must sum to 1");
    if (std::abs(r.b0 + r.b1 - 1.0) > 1e-9) throw ConfigError("split.bob: ratios must sum to 1");
}

/// Setting choice and measurement result for one emitted pair, before loss.
/// Offsets are in units of the time-bin delay.
struct PairOutcome {
    SettingLabel alice_setting = SettingLabel::a2;
    int alice_outcome = +1;
    SettingLabel bob_setting = SettingLabel::b0;
    int bob_outcome = +1;
    bool satellite = false;  ///< b1 photon outside the central peak
    std::uint8_t alice_offset_bins = 0;
    std::uint8_t bob_offset_bins = 0;
};

inline constexpr double kCentralPeakFraction = 0.5;

namespace detail {

inline SettingLabel choose_alice(const SplittingRatios& r, double u) noexcept {
    if (u < r.a2) return SettingLabel::a2;
    if (u < r.a2 + r.a0) return SettingLabel::a0;
    return r.a1 > 0.0 ? SettingLabel::a1 : (r.a0 > 0.0 ? SettingLabel::a0 : SettingLabel::a2);
}

inline SettingLabel choose_bob(const SplittingRatios& r, double u) noexcept {
    if (u < r.b0) return SettingLabel::b0;
    return r.b1 > 0.0 ? SettingLabel::b1 : SettingLabel::b0;
}

/// Outcome probabilities ordered (+,+), (+,-), (-,+), (-,-).
using OutcomeTable = std::array<double, 4>;

inline OutcomeTable outcome_table(const TwoQubitState& state, const MeasurementSetting& a,
                                  const MeasurementSetting& b) {
    return {joint_probability(state, a, b, +1, +1), joint_probability(state, a, b, +1, -1),
            joint_probability(state, a, b, -1, +1), joint_probability(state, a, b, -1, -1)};
}

inline PairOutcome finish_outcome(const OutcomeTable& table, SettingLabel as, SettingLabel bs, Rng& rng) {
    PairOutcome out;
    out.alice_setting = as;
    out.bob_setting = bs;
    const double u = uniform01(rng);
    double acc = 0.0;
    int cell = 3;
    for (int i = 0; i < 3; ++i) {
        acc += table[static_cast<std::size_t>(i)];
        if (u < acc) {
            cell = i;
            break;
        }
    }
    out.alice_outcome = cell < 2 ? +1 : -1;
    out.bob_outcome = (cell % 2 == 0) ? +1 : -1;
    if (bs == SettingLabel::b0) {
        out.bob_offset_bins = out.bob_outcome > 0 ? 0 : 1;
        out.alice_offset_bins = out.bob_offset_bins;
    } else {
        out.alice_offset_bins = 1;
        out.bob_offset_bins = 1;
        if (uniform01(rng) >= kCentralPeakFraction) {
            out.satellite = true;
            out.bob_outcome = uniform01(rng) < 0.5 ? +1 : -1;
            out.bob_offset_bins = uniform01(rng) < 0.5 ? 0 : 2;
        }
    }
    return out;
}

}  // namespace detail

/// Draws the passive setting choice for both parties, then the joint outcome
/// from the Born rule for that setting pair.
inline PairOutcome sample_pair_outcome(const TwoQubitState& state, const SettingSet& settings,
                                       const SplittingRatios& ratios, Rng& rng) {
    check_ratios(ratios);
    const SettingLabel as = detail::choose_alice(ratios, uniform01(rng));
    const SettingLabel bs = detail::choose_bob(ratios, uniform01(rng));
    return detail::finish_outcome(detail::outcome_table(state, settings[as], settings[bs]), as, bs, rng);
}

/// Same draws as sample_pair_outcome, with the Born-rule table cached per
/// phase of the hybrid state.
class OutcomeSampler {
public:
    OutcomeSampler(SettingSet settings, SplittingRatios ratios) : settings_(std::move(settings)), ratios_(ratios) {
        check_ratios(ratios_);
    }

    PairOutcome sample(double phase, Rng& rng) {
        if (!have_phase_ || phase != phase_) rebuild(phase);
        const SettingLabel as = detail::choose_alice(ratios_, uniform01(rng));
        const SettingLabel bs = detail::choose_bob(ratios_, uniform01(rng));
        const auto& table = tables_[static_cast<std::size_t>(as)][static_cast<std::size_t>(bs) - 3];
        return detail::finish_outcome(table, as, bs, rng);
    }

private:
    void rebuild(double phase) {
        const auto state = hybrid_state(phase);
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 2; ++b)
                tables_[a][b] = detail::outcome_table(state, settings_.alice()[a], settings_.bob()[b]);
        phase_ = phase;
        have_phase_ = true;
    }

    SettingSet settings_;
    SplittingRatios ratios_;
    std::array<std::array<detail::OutcomeTable, 2>, 3> tables_{};
    double phase_ = 0.0;
    bool have_phase_ = false;
};

/// Homogeneous Poisson arrivals by exponential gaps, in seconds.
class PoissonClock {
public:
    PoissonClock(double rate, double start_s, Rng rng) : rate_(rate), t_(start_s), rng_(std::move(rng)) { advance(); }

    double next() const noexcept { return t_; }

    void advance() {
        if (rate_ <= 0.0) {
            t_ = std::numeric_limits<double>::infinity();
            return;
        }
        t_ += -std::log1p(-uniform01(rng_)) / rate_;
    }

private:
    double rate_;
    double t_;
    Rng rng_;
};

inline void check_source(const SourceModel& s) {
    std::vector<std::string> problems;
    if (!(s.pair_rate >= 0.0) || !std::isfinite(s.pair_rate)) problems.push_back("source.pair_rate: must be >= 0");
    if (!(s.duration_s >= 0.0) || !std::isfinite(s.duration_s)) problems.push_back("source.duration_s: must be >= 0");
    if (!(s.start_s >= 0.0) || !std::isfinite(s.start_s)) problems.push_back("source.start_s: must be >= 0");
    if (!std::isfinite(s.reference_phase)) problems.push_back("source.reference_phase: must be finite");
    if (!problems.empty()) throw ConfigError(problems);
}

/// Sorted emission times in [start, start + duration), seconds.
inline std::vector<double> generate_pair_times(const SourceModel& source, Rng& rng) {
    check_source(source);
    std::vector<double> times;
    const double end = source.start_s + source.duration_s;
    if (source.duration_s <= 0.0) return times;
    times.reserve(static_cast<std::size_t>(source.pair_rate * source.duration_s * 1.01) + 16);
    PoissonClock clock(source.pair_rate, source.start_s, Rng(rng()));
    for (; clock.next() < end; clock.advance()) times.push_back(clock.next());
    return times;
}

/// Arrival time of a surviving photon: emission + channel delay + bin offset
/// + Gaussian jitter. Empty when the result would precede time zero.
inline std::optional<Picoseconds> arrival_time(double emission_s, double offset_ps, const ChannelModel& channel,
                                               const DetectorModel& detector, Rng& rng) {
    double t = emission_s * kPicosecondsPerSecond + static_cast<double>(channel.delay_ps) + offset_ps;
    if (detector.jitter_fwhm_ps > 0.0)
        t += std::normal_distribution<double>(0.0, detector.jitter_sigma_ps())(rng);
    if (t < 0.0) return std::nullopt;
    return static_cast<Picoseconds>(std::llround(t));
}

/// One photon through channel and detector: survives with probability
/// transmittance x efficiency, then gets its arrival time. Dead time is
/// applied later with DeadTimeFilter once arrivals are time ordered.
inline std::optional<Picoseconds> detect(double emission_s, double offset_ps, const ChannelModel& channel,
                                         const DetectorModel& detector, Rng& rng) {
    if (uniform01(rng) >= channel.transmittance * detector.efficiency) return std::nullopt;
    return arrival_time(emission_s, offset_ps, channel, detector, rng);
}

/// Non-paralyzable dead time per channel: a click is recorded only if it
/// comes at least dead_time (and at least 1 ps) after the previous recorded
/// click on that channel.
class DeadTimeFilter {
public:
    explicit DeadTimeFilter(Picoseconds dead_time) : gap_(std::max<Picoseconds>(dead_time, 1)) {}

    bool accept(DetectorId channel, Picoseconds time) noexcept {
        auto& last = last_[channel];
        if (seen_[channel] && time < last + gap_) return false;
        seen_[channel] = true;
        last = time;
        return true;
    }

private:
    Picoseconds gap_;
    std::array<Picoseconds, 256> last_{};
    std::array<bool, 256> seen_{};
};

/// Dark clicks of one detector: Poisson at dark_rate over [start, start +
/// duration), dead time applied.
inline std::vector<TimeTag> dark_tags(const DetectorModel& detector, DetectorId channel, double start_s,
                                      double duration_s, Rng& rng) {
    std::vector<TimeTag> tags;
    if (duration_s <= 0.0 || detector.dark_rate <= 0.0) return tags;
    PoissonClock clock(detector.dark_rate, start_s, Rng(rng()));
    DeadTimeFilter filter(detector.dead_time_ps);
    const double end = start_s + duration_s;
    for (; clock.next() < end; clock.advance()) {
        const auto t = static_cast<Picoseconds>(std::llround(clock.next() * kPicosecondsPerSecond));
        if (filter.accept(channel, t)) tags.push_back({t, channel});
    }
    return tags;
}

/// Channel ids a party's detectors use under a setting set.
inline std::vector<DetectorId> party_channels(const SettingSet& settings, Party party) {
    std::vector<DetectorId> ids;
    auto add = [&](const auto& list) {
        for (const auto& s : list) {
            ids.push_back(s.plus_port);
            ids.push_back(s.minus_port);
        }
    };
    if (party == Party::alice) add(settings.alice());
    else add(settings.bob());
    std::sort(ids.begin(), ids.end());
    return ids;
}

struct SessionConfig {
    SourceModel source;
    ChannelModel alice_channel;
    ChannelModel bob_channel;
    DetectorModel alice_detector;
    DetectorModel bob_detector;
    DriftModel drift;
    SplittingRatios split;
    Picoseconds bin_delay_ps = 800;
    SettingSet settings = SettingSet::standard();
};

/// Field-path problem list; empty when the configuration is usable.
inline std::vector<std::string> validate(const SessionConfig& c) {
    std::vector<std::string> p;
    auto finite = [](double v) { return std::isfinite(v); };
    if (!(c.source.pair_rate >= 0.0) || !finite(c.source.pair_rate)) p.push_back("source.pair_rate: must be >= 0");
    if (!(c.source.duration_s > 0.0) || !finite(c.source.duration_s))
        p.push_back("source.duration_s: must be > 0");
    if (!(c.source.start_s >= 0.0) || !finite(c.source.start_s)) p.push_back("source.start_s: must be >= 0");
    if (!finite(c.source.reference_phase)) p.push_back("source.reference_phase: must be finite");
    auto channel = [&](const ChannelModel& m, const std::string& path) {
        if (!(m.transmittance > 0.0 && m.transmittance <= 1.0))
            p.push_back(path + ".transmittance: must lie in (0, 1]");
    };
    channel(c.alice_channel, "channel.alice");
    channel(c.bob_channel, "channel.bob");
    auto detector = [&](const DetectorModel& m, const std::string& path) {
        if (!(m.efficiency >= 0.0 && m.efficiency <= 1.0)) p.push_back(path + ".efficiency: must lie in [0, 1]");
        if (!(m.dark_rate >= 0.0) || !finite(m.dark_rate)) p.push_back(path + ".dark_rate: must be >= 0");
        if (!(m.jitter_fwhm_ps >= 0.0) || !finite(m.jitter_fwhm_ps))
            p.push_back(path + ".jitter_fwhm_ps: must be >= 0");
    };
    detector(c.alice_detector, "detector.alice");
    detector(c.bob_detector, "detector.bob");
    const auto& d = c.drift;
    for (auto [value, name] : {std::pair{d.offset, "offset"}, std::pair{d.slope, "slope"},
                               std::pair{d.amplitude, "amplitude"}, std::pair{d.period_s, "period_s"},
                               std::pair{d.step_variance, "step_variance"}, std::pair{d.step_s, "step_s"},
                               std::pair{d.temp_coefficient, "temp_coefficient"},
                               std::pair{d.temperature, "temperature"},
                               std::pair{d.reference_temperature, "reference_temperature"}})
        if (!finite(value)) p.push_back(std::string("drift.") + name + ": must be finite");
    if (d.kind == DriftKind::sinusoidal && !(d.period_s > 0.0)) p.push_back("drift.period_s: must be > 0");
    if (d.kind == DriftKind::random_walk && !(d.step_s > 0.0)) p.push_back("drift.step_s: must be > 0");
    if (!(d.step_variance >= 0.0)) p.push_back("drift.step_variance: must be >= 0");
    const auto& r = c.split;
    for (auto [value, name] : {std::pair{r.a0, "alice.a0"}, std::pair{r.a1, "alice.a1"},
                               std::pair{r.a2, "alice.a2"}, std::pair{r.b0, "bob.b0"}, std::pair{r.b1, "bob.b1"}})
        if (!(value >= 0.0 && value <= 1.0)) p.push_back(std::string("split.") + name + ": must lie in [0, 1]");
    if (std::abs(r.a0 + r.a1 + r.a2 - 1.0) > 1e-9) p.push_back("split.alice: ratios must sum to 1");
    if (std::abs(r.b0 + r.b1 - 1.0) > 1e-9) p.push_back("split.bob: ratios must sum to 1");
    return p;
}

inline constexpr std::uint64_t kDarkEmission = std::numeric_limits<std::uint64_t>::max();

/// What actually happened behind one tag. Only oracle tests look at this.
struct TruthRecord {
    std::uint64_t emission = kDarkEmission;
    SettingLabel setting = SettingLabel::a2;
    std::int8_t outcome = 0;
    bool satellite = false;
};

struct GroundTruth {
    std::vector<TruthRecord> alice;  ///< aligned with SimulatedSession::alice.tags
    std::vector<TruthRecord> bob;
};

struct SimulatedSession {
    TagStream alice;
    TagStream bob;
    GroundTruth truth;  ///< empty unless requested
};

namespace detail {

struct PendingTag {
    Picoseconds time;
    std::uint32_t truth;
    DetectorId channel;
};

inline TagStream finalize_stream(std::vector<PendingTag>& pending, Party party, const SourceModel& source,
                                 const DetectorModel& detector, const std::vector<TruthRecord>* truth_in,
                                 std::vector<TruthRecord>* truth_out) {
    std::sort(pending.begin(), pending.end(), [](const PendingTag& a, const PendingTag& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.channel != b.channel) return a.channel < b.channel;
        return a.truth < b.truth;
    });
    TagStream stream;
    stream.party = party;
    stream.start = seconds_to_ps(source.start_s);
    stream.duration = seconds_to_ps(source.duration_s);
    stream.tags.reserve(pending.size());
    DeadTimeFilter filter(detector.dead_time_ps);
    for (const auto& p : pending) {
        if (!filter.accept(p.channel, p.time)) continue;
        stream.tags.push_back({p.time, p.channel});
        if (truth_out) truth_out->push_back((*truth_in)[p.truth]);
    }
    pending.clear();
    pending.shrink_to_fit();
    return stream;
}

}  // namespace detail

/// Simulates both parties' detectors over the source window. Loss is applied
/// by Poisson thinning: pairs with both photons, only Alice's, or only Bob's
/// photon detected are three independent Poisson processes, so cost scales
/// with detections rather than emissions.
inline SimulatedSession simulate_session(const SessionConfig& config, std::uint64_t seed, bool record_truth = false) {
    if (auto problems = validate(config); !problems.empty()) throw ConfigError(problems);

    const auto& src = config.source;
    const double end_s = src.start_s + src.duration_s;
    const double pa = config.alice_channel.transmittance * config.alice_detector.efficiency;
    const double pb = config.bob_channel.transmittance * config.bob_detector.efficiency;

    PoissonClock both(src.pair_rate * pa * pb, src.start_s, make_rng(seed, 1));
    PoissonClock alice_only(src.pair_rate * pa * (1.0 - pb), src.start_s, make_rng(seed, 2));
    PoissonClock bob_only(src.pair_rate * (1.0 - pa) * pb, src.start_s, make_rng(seed, 3));
    Rng outcome_rng = make_rng(seed, 4);
    Rng jitter_rng = make_rng(seed, 5);

    DriftModel drift = config.drift;
    const PhaseTrack track(drift, end_s);
    OutcomeSampler sampler(config.settings, config.split);
    const double bin = static_cast<double>(config.bin_delay_ps);

    std::vector<detail::PendingTag> alice_pending, bob_pending;
    const double expected_a = src.pair_rate * pa * src.duration_s;
    const double expected_b = src.pair_rate * pb * src.duration_s;
    alice_pending.reserve(static_cast<std::size_t>(expected_a * 1.01 + 6.0 * std::sqrt(expected_a) + 64));
    bob_pending.reserve(static_cast<std::size_t>(expected_b * 1.01 + 6.0 * std::sqrt(expected_b) + 64));
    std::vector<TruthRecord> truth;

    std::uint64_t emission = 0;
    for (;;) {
        const double tb = both.next(), ta = alice_only.next(), tbo = bob_only.next();
        const double t = std::min({tb, ta, tbo});
        if (!(t < end_s)) break;
        bool alice_hit = true, bob_hit = true;
        if (t == tb) {
            both.advance();
        } else if (t == ta) {
            bob_hit = false;
            alice_only.advance();
        } else {
            alice_hit = false;
            bob_only.advance();
        }
        const PairOutcome o = sampler.sample(src.reference_phase + track.at(t), outcome_rng);
        if (alice_hit) {
            if (auto when = arrival_time(t, o.alice_offset_bins * bin, config.alice_channel, config.alice_detector,
                                         jitter_rng)) {
                const auto port = config.settings[o.alice_setting].port_for(o.alice_outcome);
                alice_pending.push_back({*when, static_cast<std::uint32_t>(truth.size()), port});
                if (record_truth)
                    truth.push_back({emission, o.alice_setting, static_cast<std::int8_t>(o.alice_outcome), false});
            }
        }
        if (bob_hit) {
            if (auto when =
                    arrival_time(t, o.bob_offset_bins * bin, config.bob_channel, config.bob_detector, jitter_rng)) {
                const auto port = config.settings[o.bob_setting].port_for(o.bob_outcome);
                bob_pending.push_back({*when, static_cast<std::uint32_t>(truth.size()), port});
                if (record_truth)
                    truth.push_back({emission, o.bob_setting, static_cast<std::int8_t>(o.bob_outcome), o.satellite});
            }
        }
        ++emission;
    }

    auto add_darks = [&](const DetectorModel& det, Party party, std::vector<detail::PendingTag>& pending,
                         std::uint64_t stream_base) {
        for (DetectorId port : party_channels(config.settings, party)) {
            SettingLabel label{};
            int outcome = 0;
            config.settings.lookup(party, port, label, outcome);
            Rng rng = make_rng(seed, stream_base + port);
            for (const auto& tag : dark_tags(det, port, src.start_s, src.duration_s, rng)) {
                pending.push_back({tag.time, static_cast<std::uint32_t>(truth.size()), port});
                if (record_truth)
                    truth.push_back({kDarkEmission, label, static_cast<std::int8_t>(outcome), false});
            }
        }
    };
    add_darks(config.alice_detector, Party::alice, alice_pending, 0x100);
    add_darks(config.bob_detector, Party::bob, bob_pending, 0x200);

    SimulatedSession session;
    session.alice = detail::finalize_stream(alice_pending, Party::alice, src, config.alice_detector,
                                            record_truth ? &truth : nullptr,
                                            record_truth ? &session.truth.alice : nullptr);
    session.bob = detail::finalize_stream(bob_pending, Party::bob, src, config.bob_detector,
                                          record_truth ? &truth : nullptr, record_truth ? &session.truth.bob : nullptr);
    return session;
}

}  // namespace e91
