#pragma once

// Time-tag analysis between the two parties: delay search by cross
// correlation, windowed coincidence matching, count matrices n(i, j), and
// correlation / CHSH estimates with Poisson error propagation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "e91/error.hpp"
#include "e91/quantum.hpp"
#include "e91/tagstream.hpp"

namespace e91 {

/// Signed picosecond offset; delay = t_bob - t_alice for a correlated pair.
using PsOffset = std::int64_t;

struct DelaySearch {
    PsOffset min_delay = 0;
    PsOffset max_delay = 200'000'000;
    PsOffset bin_width = 16;
    /// Only the first max_alice_tags Alice tags are correlated.
    std::size_t max_alice_tags = 300'000;
    /// Global (trials-corrected) one-sided significance the peak must reach.
    double min_sigma = 5.0;
    /// Half width of the refinement histogram around the coarse peak.
    PsOffset refine_half_width = 2048;
};

namespace detail {

/// log P(X >= k) for X ~ Poisson(mu), k > mu.
inline double poisson_log_sf(std::uint64_t k, double mu) {
    if (static_cast<double>(k) <= mu) return 0.0;
    if (mu <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double kd = static_cast<double>(k);
    const double log_pmf = kd * std::log(mu) - mu - std::lgamma(kd + 1.0);
    double term = 1.0, sum = 1.0;
    for (std::uint64_t i = 1; i < 100000; ++i) {
        term *= mu / (kd + static_cast<double>(i));
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return log_pmf + std::log(sum);
}

/// log of the one-sided Gaussian tail probability at z sigma.
inline double log_gaussian_tail(double z) { return std::log(0.5 * std::erfc(z / std::sqrt(2.0))); }

}  // namespace detail

/// Cross-correlation histogram of t_bob - t_alice over [min_delay,
/// max_delay). The highest bin (ties go to the smaller delay) must stand out
/// from the off-peak mean at min_sigma after accounting for the number of
/// bins searched. Returns the center of the bin holding the refined peak.
inline PsOffset estimate_delay(const TagStream& a, const TagStream& b, const DelaySearch& search = {}) {
    if (a.tags.empty() || b.tags.empty()) throw InsufficientData("estimate_delay: empty tag stream");
    if (search.bin_width < 1 || search.max_delay <= search.min_delay)
        throw InvalidArgument("estimate_delay: bad search range or bin width");
    const auto range = search.max_delay - search.min_delay;
    const auto nbins = static_cast<std::size_t>((range + search.bin_width - 1) / search.bin_width);
    std::vector<std::uint32_t> hist(nbins, 0);

    const std::size_t na = std::min(a.tags.size(), search.max_alice_tags);
    std::size_t lo = 0;
    const auto& bt = b.tags;
    for (std::size_t i = 0; i < na; ++i) {
        const auto ta = static_cast<PsOffset>(a.tags[i].time);
        const PsOffset first = ta + search.min_delay;
        while (lo < bt.size() && static_cast<PsOffset>(bt[lo].time) < first) ++lo;
        for (std::size_t j = lo; j < bt.size(); ++j) {
            const PsOffset d = static_cast<PsOffset>(bt[j].time) - ta;
            if (d >= search.max_delay) break;
            ++hist[static_cast<std::size_t>((d - search.min_delay) / search.bin_width)];
        }
    }

    std::size_t peak = 0;
    for (std::size_t k = 1; k < nbins; ++k)
        if (hist[k] > hist[peak]) peak = k;

    double off_sum = 0.0;
    std::size_t off_bins = 0;
    for (std::size_t k = 0; k < nbins; ++k) {
        if (k + 2 >= peak && k <= peak + 2) continue;
        off_sum += hist[k];
        ++off_bins;
    }
    const double mean = off_bins > 0 ? off_sum / static_cast<double>(off_bins) : 0.0;
    const double log_p = detail::poisson_log_sf(hist[peak], mean) + std::log(static_cast<double>(nbins));
    if (hist[peak] == 0 || log_p > detail::log_gaussian_tail(search.min_sigma))
        throw NoCorrelation("estimate_delay: no significant cross-correlation peak");
    const PsOffset coarse = search.min_delay + static_cast<PsOffset>(peak) * search.bin_width;

    // With jitter much wider than a bin the raw maximum wanders by several
    // bins, so the peak is relocated by the background-subtracted centroid of
    // a narrow histogram built from every Alice tag.
    const PsOffset half = std::max<PsOffset>(search.refine_half_width, 4 * search.bin_width);
    const PsOffset lo_edge = coarse + search.bin_width / 2 - half;
    const std::size_t fine_bins = static_cast<std::size_t>(2 * half / search.bin_width);
    std::vector<double> fine(fine_bins, 0.0);
    std::size_t first_b = 0;
    for (const auto& tag : a.tags) {
        const auto ta = static_cast<PsOffset>(tag.time);
        while (first_b < bt.size() && static_cast<PsOffset>(bt[first_b].time) - ta < lo_edge) ++first_b;
        for (std::size_t j = first_b; j < bt.size(); ++j) {
            const PsOffset k = (static_cast<PsOffset>(bt[j].time) - ta - lo_edge) / search.bin_width;
            if (k >= static_cast<PsOffset>(fine_bins)) break;
            fine[static_cast<std::size_t>(k)] += 1.0;
        }
    }
    const std::size_t edge = fine_bins / 8;
    double bg = 0.0;
    for (std::size_t k = 0; k < edge; ++k) bg += fine[k] + fine[fine_bins - 1 - k];
    bg /= static_cast<double>(2 * edge);
    auto centroid = [&](std::size_t from, std::size_t to, double& c) {
        double weight = 0.0, moment = 0.0;
        for (std::size_t k = from; k < to; ++k) {
            const double x = static_cast<double>(lo_edge) + (static_cast<double>(k) + 0.5) * search.bin_width;
            weight += fine[k] - bg;
            moment += (fine[k] - bg) * x;
        }
        if (weight <= 0.0) return false;
        c = moment / weight;
        return true;
    };
    // Side peaks (time-bin satellites, afterpulses) sit inside the wide
    // span, so the centroid is iterated over a span a fifth as wide.
    PsOffset center = coarse;
    double c = 0.0;
    if (centroid(edge, fine_bins - edge, c)) {
        const auto reach = static_cast<double>(std::max<PsOffset>(half / 5, 2 * search.bin_width) / search.bin_width);
        for (int pass = 0; pass < 3; ++pass) {
            const double mid = (c - static_cast<double>(lo_edge)) / search.bin_width - 0.5;
            const auto from = static_cast<std::size_t>(std::clamp(std::round(mid - reach), static_cast<double>(edge),
                                                                  static_cast<double>(fine_bins - edge)));
            const auto to = static_cast<std::size_t>(std::clamp(std::round(mid + reach) + 1, static_cast<double>(from),
                                                                static_cast<double>(fine_bins - edge)));
            if (!centroid(from, to, c)) break;
        }
        if (std::abs(c - static_cast<double>(coarse)) < static_cast<double>(half))
            center = search.min_delay +
                     static_cast<PsOffset>(std::floor((c - static_cast<double>(search.min_delay)) / search.bin_width)) *
                         search.bin_width;
    }
    return center + search.bin_width / 2;
}

struct CoincidencePair {
    TimeTag alice;
    TimeTag bob;
    std::size_t alice_index = 0;  ///< position in the Alice stream
    std::size_t bob_index = 0;

    friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
};

/// Runs larger than this (alice x bob candidates) fall back to greedy
/// nearest-neighbour pairing instead of the exact solve.
inline constexpr std::size_t kExactRunLimit = 1u << 20;

namespace detail {

struct MatchScore {
    std::int64_t pairs = 0;
    std::int64_t cost = 0;      ///< sum |dt|
    std::int64_t time_sum = 0;  ///< sum of matched (shifted) times, prefers earlier tags
    std::int64_t index_sum = 0;

    MatchScore plus(std::int64_t c, std::int64_t t, std::int64_t idx) const noexcept {
        return {pairs + 1, cost + c, time_sum + t, index_sum + idx};
    }
};

inline bool better(const MatchScore& x, const MatchScore& y) noexcept {
    if (x.pairs != y.pairs) return x.pairs > y.pairs;
    if (x.cost != y.cost) return x.cost < y.cost;
    if (x.time_sum != y.time_sum) return x.time_sum < y.time_sum;
    return x.index_sum < y.index_sum;
}

struct RunTag {
    std::int64_t time;  ///< Bob times already shifted by -delay
    std::size_t index;
};

inline bool within(std::int64_t x, std::int64_t y, std::int64_t window) noexcept {
    const std::int64_t d = x > y ? x - y : y - x;
    return 2 * d <= window;
}

/// Optimal order-preserving matching of one run by suffix dynamic
/// programming. An order-preserving optimum always exists: uncrossing two
/// pairs keeps both inside the window and never increases sum |dt|.
inline void solve_run(std::span<const RunTag> as, std::span<const RunTag> bs, std::int64_t window,
                      std::vector<std::pair<std::size_t, std::size_t>>& out) {
    const std::size_t na = as.size(), nb = bs.size();
    std::vector<MatchScore> f((na + 1) * (nb + 1));
    auto at = [&](std::size_t i, std::size_t j) -> MatchScore& { return f[i * (nb + 1) + j]; };
    for (std::size_t i = na + 1; i-- > 0;) {
        for (std::size_t j = nb + 1; j-- > 0;) {
            if (i == na || j == nb) continue;
            MatchScore best = at(i + 1, j);
            if (better(at(i, j + 1), best)) best = at(i, j + 1);
            if (within(as[i].time, bs[j].time, window)) {
                const auto d = std::abs(as[i].time - bs[j].time);
                const auto cand = at(i + 1, j + 1).plus(d, as[i].time + bs[j].time,
                                                        static_cast<std::int64_t>(as[i].index + bs[j].index));
                if (!better(best, cand)) best = cand;
            }
            at(i, j) = best;
        }
    }
    std::size_t i = 0, j = 0;
    while (i < na && j < nb) {
        const MatchScore& here = at(i, j);
        if (within(as[i].time, bs[j].time, window)) {
            const auto d = std::abs(as[i].time - bs[j].time);
            const auto cand = at(i + 1, j + 1).plus(d, as[i].time + bs[j].time,
                                                    static_cast<std::int64_t>(as[i].index + bs[j].index));
            if (!better(here, cand) && !better(cand, here)) {
                out.emplace_back(as[i].index, bs[j].index);
                ++i;
                ++j;
                continue;
            }
        }
        const MatchScore& skip_b = at(i, j + 1);
        if (!better(here, skip_b) && !better(skip_b, here)) ++j;
        else ++i;
    }
}

/// Greedy in time order: each tag takes its nearest unpaired counterpart
/// within the window, ties to the earlier counterpart.
inline void greedy_run(std::span<const RunTag> as, std::span<const RunTag> bs, std::int64_t window,
                       std::vector<std::pair<std::size_t, std::size_t>>& out) {
    std::vector<bool> used_b(bs.size(), false);
    for (const auto& a : as) {
        std::size_t best = bs.size();
        std::int64_t best_d = 0;
        for (std::size_t j = 0; j < bs.size(); ++j) {
            if (used_b[j] || !within(a.time, bs[j].time, window)) continue;
            const auto d = std::abs(a.time - bs[j].time);
            if (best == bs.size() || d < best_d) {
                best = j;
                best_d = d;
            }
        }
        if (best != bs.size()) {
            used_b[best] = true;
            out.emplace_back(a.index, bs[best].index);
        }
    }
}

}  // namespace detail

/// Pairs Alice and Bob tags with |t_a - (t_b - delay)| <= window / 2, each tag
/// used at most once. Tags are grouped into runs (maximal stretches of the
/// merged timeline whose consecutive gaps fit in half a window); each run is
/// matched to maximize the number of pairs, then minimize total |dt|, then
/// prefer earlier tags. An isolated pair is simply accepted. Output is sorted
/// by Alice index.
inline std::vector<CoincidencePair> match_coincidences(const TagStream& a, const TagStream& b, PsOffset window,
                                                       PsOffset delay) {
    if (window < 1) throw InvalidArgument("match_coincidences: window must be >= 1 ps");
    std::vector<std::pair<std::size_t, std::size_t>> matched;
    std::vector<detail::RunTag> run_a, run_b;

    const auto& at = a.tags;
    const auto& bt = b.tags;
    std::size_t i = 0, j = 0;
    std::int64_t last = 0;
    bool open = false;

    auto flush = [&] {
        if (!run_a.empty() && !run_b.empty()) {
            if (run_a.size() == 1 && run_b.size() == 1) matched.emplace_back(run_a[0].index, run_b[0].index);
            else if (run_a.size() * run_b.size() <= kExactRunLimit) detail::solve_run(run_a, run_b, window, matched);
            else detail::greedy_run(run_a, run_b, window, matched);
        }
        run_a.clear();
        run_b.clear();
    };

    while (i < at.size() || j < bt.size()) {
        const bool take_a =
            j >= bt.size() ||
            (i < at.size() && static_cast<std::int64_t>(at[i].time) <= static_cast<std::int64_t>(bt[j].time) - delay);
        const std::int64_t t =
            take_a ? static_cast<std::int64_t>(at[i].time) : static_cast<std::int64_t>(bt[j].time) - delay;
        if (open && 2 * (t - last) > window) flush();
        open = true;
        last = t;
        if (take_a) run_a.push_back({t, i++});
        else run_b.push_back({t, j++});
    }
    flush();

    std::sort(matched.begin(), matched.end());
    std::vector<CoincidencePair> pairs;
    pairs.reserve(matched.size());
    for (const auto& [ia, ib] : matched) pairs.push_back({at[ia], bt[ib], ia, ib});
    return pairs;
}

/// Coincidence counts n(i, j) keyed by (Alice detector, Bob detector).
struct CoincidenceMatrix {
    std::map<std::pair<DetectorId, DetectorId>, std::uint64_t> counts;
    PsOffset window = 0;
    PsOffset delay = 0;
    Picoseconds accumulation = 0;

    std::uint64_t count(DetectorId alice, DetectorId bob) const {
        const auto it = counts.find({alice, bob});
        return it == counts.end() ? 0 : it->second;
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& [key, n] : counts) t += n;
        return t;
    }

    CoincidenceMatrix& operator+=(const CoincidenceMatrix& other) {
        for (const auto& [key, n] : other.counts) counts[key] += n;
        accumulation += other.accumulation;
        return *this;
    }

    friend bool operator==(const CoincidenceMatrix&, const CoincidenceMatrix&) = default;
};

inline CoincidenceMatrix build_matrix(std::span<const CoincidencePair> pairs, PsOffset window, PsOffset delay,
                                      Picoseconds accumulation) {
    CoincidenceMatrix m;
    m.window = window;
    m.delay = delay;
    m.accumulation = accumulation;
    for (const auto& p : pairs) ++m.counts[{p.alice.channel, p.bob.channel}];
    return m;
}

struct EstimatedCorrelation {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t total_counts = 0;
};

using DetectorPair = std::pair<DetectorId, DetectorId>;

/// E = (N+ - N-) / (N+ + N-) with Poisson error sqrt(4 N+ N- / (N+ + N-)^3).
inline EstimatedCorrelation correlation_from_counts(const CoincidenceMatrix& m, std::span<const DetectorPair> plus,
                                                    std::span<const DetectorPair> minus) {
    for (const auto& p : plus)
        for (const auto& q : minus)
            if (p == q) throw InvalidArgument("correlation_from_counts: plus and minus detector pairs overlap");
    double np = 0.0, nm = 0.0;
    for (const auto& p : plus) np += static_cast<double>(m.count(p.first, p.second));
    for (const auto& q : minus) nm += static_cast<double>(m.count(q.first, q.second));
    const double n = np + nm;
    if (n <= 0.0) throw InsufficientStatistics("correlation_from_counts: no coincidences in this setting pair");
    return {(np - nm) / n, std::sqrt(4.0 * np * nm / (n * n * n)), static_cast<std::uint64_t>(n)};
}

/// Detector pairs whose coincidences count as +1 / -1 for setting pair (a, b),
/// honoring both settings' outcome signs.
inline std::pair<std::array<DetectorPair, 2>, std::array<DetectorPair, 2>> correlation_ports(
    const MeasurementSetting& a, const MeasurementSetting& b) {
    const std::array<DetectorPair, 2> same{DetectorPair{a.plus_port, b.plus_port},
                                           DetectorPair{a.minus_port, b.minus_port}};
    const std::array<DetectorPair, 2> opposite{DetectorPair{a.plus_port, b.minus_port},
                                               DetectorPair{a.minus_port, b.plus_port}};
    if (a.outcome_sign * b.outcome_sign > 0) return {same, opposite};
    return {opposite, same};
}

inline EstimatedCorrelation correlation_from_counts(const CoincidenceMatrix& m, const MeasurementSetting& a,
                                                    const MeasurementSetting& b) {
    const auto [plus, minus] = correlation_ports(a, b);
    return correlation_from_counts(m, plus, minus);
}

struct ChshEstimate {
    double s = 0.0;
    double std_error = 0.0;
    /// E(a0,b0), E(a0,b1), E(a1,b0), E(a1,b1)
    std::array<EstimatedCorrelation, 4> terms{};
};

inline ChshEstimate chsh_from_correlations(const std::array<EstimatedCorrelation, 4>& e) {
    ChshEstimate out;
    out.terms = e;
    out.s = e[0].value + e[1].value + e[2].value - e[3].value;
    double var = 0.0;
    for (const auto& t : e) var += t.std_error * t.std_error;
    out.std_error = std::sqrt(var);
    return out;
}

inline ChshEstimate chsh_from_counts(const CoincidenceMatrix& m, const SettingSet& settings) {
    using L = SettingLabel;
    return chsh_from_correlations({correlation_from_counts(m, settings[L::a0], settings[L::b0]),
                                   correlation_from_counts(m, settings[L::a0], settings[L::b1]),
                                   correlation_from_counts(m, settings[L::a1], settings[L::b0]),
                                   correlation_from_counts(m, settings[L::a1], settings[L::b1])});
}

struct WindowPoint {
    PsOffset window = 0;
    double s = 0.0;
    double std_error = 0.0;
    std::uint64_t coincidences = 0;
};

/// S recomputed on the same streams for each coincidence window.
inline std::vector<WindowPoint> window_sweep(const TagStream& a, const TagStream& b, std::span<const PsOffset> windows,
                                             PsOffset delay, const SettingSet& settings = SettingSet::standard()) {
    if (windows.empty()) throw InvalidArgument("window_sweep: no windows given");
    std::vector<WindowPoint> out;
    for (const PsOffset w : windows) {
        const auto pairs = match_coincidences(a, b, w, delay);
        const auto m = build_matrix(pairs, w, delay, a.duration);
        const auto chsh = chsh_from_counts(m, settings);
        out.push_back({w, chsh.s, chsh.std_error, static_cast<std::uint64_t>(pairs.size())});
    }
    return out;
}

/// Expected accidental coincidences per second from uncorrelated singles:
/// rate_a * rate_b * window. Diagnostic only; S is never corrected with it.
inline double accidental_rate(const TagStream& a, const TagStream& b, PsOffset window) {
    const double da = ps_to_seconds(a.duration), db = ps_to_seconds(b.duration);
    if (da <= 0.0 || db <= 0.0) return 0.0;
    return (static_cast<double>(a.tags.size()) / da) * (static_cast<double>(b.tags.size()) / db) *
           (static_cast<double>(window) / kPicosecondsPerSecond);
}

inline void write_matrix_csv(std::ostream& out, const CoincidenceMatrix& m) {
    out << "alice_det,bob_det,count\n";
    for (const auto& [key, n] : m.counts)
        out << static_cast<unsigned>(key.first) << ',' << static_cast<unsigned>(key.second) << ',' << n << '\n';
}

namespace detail {

inline std::string format_fixed(double v, int digits) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

inline void write_terms_csv(std::ostream& out, const ChshEstimate& chsh) {
    static constexpr std::array<const char*, 4> names{"E(a0;b0)", "E(a0;b1)", "E(a1;b0)", "E(a1;b1)"};
    out << "term,value,std_error\n";
    for (std::size_t k = 0; k < 4; ++k)
        out << names[k] << ',' << detail::format_fixed(chsh.terms[k].value, 6) << ','
            << detail::format_fixed(chsh.terms[k].std_error, 6) << '\n';
    out << "S," << detail::format_fixed(chsh.s, 6) << ',' << detail::format_fixed(chsh.std_error, 6) << '\n';
}

}  // namespace e91
