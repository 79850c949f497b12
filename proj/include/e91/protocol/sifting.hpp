#pragma once

// Sifting of matched pairs into key / CHSH test / discard, and QBER
// estimation by public comparison of a random subset of the sifted key.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "e91/coincidence.hpp"
#include "e91/error.hpp"
#include "e91/quantum.hpp"
#include "e91/rng.hpp"

namespace e91 {

enum class PairRole : std::uint8_t { key, test, discard };

/// (a2, b0) makes key; the four CHSH combinations {a0, a1} x {b0, b1} test;
/// anything else is discarded.
constexpr PairRole classify(SettingLabel alice, SettingLabel bob) noexcept {
    if (alice == SettingLabel::a2) return bob == SettingLabel::b0 ? PairRole::key : PairRole::discard;
    if ((alice == SettingLabel::a0 || alice == SettingLabel::a1) &&
        (bob == SettingLabel::b0 || bob == SettingLabel::b1))
        return PairRole::test;
    return PairRole::discard;
}

/// +1 outcome (H, |0>) is bit 0, -1 (V, |1>) is bit 1.
constexpr std::uint8_t key_bit(int outcome) noexcept { return outcome > 0 ? 0 : 1; }

struct SiftedKey {
    std::uint64_t block_id = 0;
    std::vector<std::uint8_t> bits;
    std::vector<std::uint64_t> pair_ids;  ///< identifies the source pair of each bit

    std::size_t size() const noexcept { return bits.size(); }
    friend bool operator==(const SiftedKey&, const SiftedKey&) = default;
};

/// Globally unique id for pair `position` of block `block_id`.
constexpr std::uint64_t pair_id(std::uint64_t block_id, std::uint64_t position) noexcept {
    return (block_id << 40) | position;
}

struct SiftResult {
    SiftedKey alice;
    SiftedKey bob;
    std::vector<std::size_t> test_pairs;  ///< positions into the pair list
    std::size_t discarded = 0;
};

/// Full-knowledge sifting over matched pairs (the endpoints reach the same
/// split through the basis exchange). Channels not belonging to a setting
/// are discarded.
inline SiftResult sift(std::span<const CoincidencePair> pairs, const SettingSet& settings,
                       std::uint64_t block_id = 0) {
    SiftResult r;
    r.alice.block_id = r.bob.block_id = block_id;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        SettingLabel la{}, lb{};
        int oa = 0, ob = 0;
        if (!settings.lookup(Party::alice, pairs[p].alice.channel, la, oa) ||
            !settings.lookup(Party::bob, pairs[p].bob.channel, lb, ob)) {
            ++r.discarded;
            continue;
        }
        switch (classify(la, lb)) {
            case PairRole::key:
                r.alice.bits.push_back(key_bit(oa));
                r.bob.bits.push_back(key_bit(ob));
                r.alice.pair_ids.push_back(pair_id(block_id, p));
                r.bob.pair_ids.push_back(pair_id(block_id, p));
                break;
            case PairRole::test: r.test_pairs.push_back(p); break;
            case PairRole::discard: ++r.discarded; break;
        }
    }
    return r;
}

enum class QberMode : std::uint8_t { sample, full };

/// Sorted positions disclosed for QBER estimation. Sample mode draws
/// round(fraction * n) distinct positions (at least one); full mode discloses
/// every position.
inline std::vector<std::uint64_t> choose_sample(std::size_t n, double fraction, QberMode mode, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw InvalidArgument("sample fraction must lie in (0, 0.5]");
    if (n == 0 || static_cast<double>(n) < std::ceil(1.0 / fraction - 1e-9))
        throw InsufficientKey("sifted key of " + std::to_string(n) + " bits is too short to sample");
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::uint64_t{0});
    if (mode == QberMode::full) return idx;
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
        std::swap(idx[i], idx[std::min(j, n - 1)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::uint64_t count_mismatches(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw InvalidArgument("count_mismatches: length mismatch");
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
    return n;
}

inline std::vector<std::uint8_t> gather_bits(const SiftedKey& key, std::span<const std::uint64_t> positions) {
    std::vector<std::uint8_t> out;
    out.reserve(positions.size());
    for (auto p : positions) {
        if (p >= key.size()) throw InvalidArgument("sample position outside the key");
        out.push_back(key.bits[p]);
    }
    return out;
}

/// Key with the (sorted, unique) disclosed positions removed.
inline SiftedKey remove_positions(const SiftedKey& key, std::span<const std::uint64_t> positions) {
    SiftedKey out;
    out.block_id = key.block_id;
    std::size_t next = 0;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (next < positions.size() && positions[next] == i) {
            ++next;
            continue;
        }
        out.bits.push_back(key.bits[i]);
        out.pair_ids.push_back(key.pair_ids[i]);
    }
    return out;
}

struct QberEstimate {
    double qber = 0.0;
    std::uint64_t sample_size = 0;
    std::uint64_t mismatches = 0;
    std::vector<std::uint64_t> positions;
    SiftedKey alice_remaining;
    SiftedKey bob_remaining;
};

inline QberEstimate estimate_qber(const SiftedKey& alice, const SiftedKey& bob, double sample_fraction, Rng& rng,
                                  QberMode mode = QberMode::sample) {
    if (alice.size() != bob.size()) throw InvalidArgument("estimate_qber: key lengths differ");
    QberEstimate q;
    q.positions = choose_sample(alice.size(), sample_fraction, mode, rng);
    q.sample_size = q.positions.size();
    q.mismatches = count_mismatches(gather_bits(alice, q.positions), gather_bits(bob, q.positions));
    q.qber = static_cast<double>(q.mismatches) / static_cast<double>(q.sample_size);
    q.alice_remaining = remove_positions(alice, q.positions);
    q.bob_remaining = remove_positions(bob, q.positions);
    return q;
}

}  // namespace e91
