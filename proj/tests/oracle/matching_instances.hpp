#pragma once

// Random coincidence-matching instances and adapters to the exhaustive oracle.

#include <algorithm>
#include <random>

#include "e91/coincidence.hpp"
#include "oracle/matching_oracle.hpp"

namespace oracle {

using namespace e91;

struct Instance {
    TagStream a, b;
    PsOffset window = 64;
    PsOffset delay = 0;
};

/// Clusters of 1-4 tags per side spread over +-60 ps, clusters at least
/// 200 ps apart so every oracle component stays small. Bob's copy is
/// shifted by a random delay.
inline Instance make_instance(std::mt19937_64& rng, std::size_t target_tags) {
    Instance in;
    const PsOffset windows[] = {16, 32, 64, 100};
    in.window = windows[rng() % 4];
    in.delay = static_cast<PsOffset>(rng() % 1'000'000);
    std::uniform_int_distribution<int> spread(-60, 60), count(0, 4), chan(1, 6);
    std::exponential_distribution<double> gap(1.0 / 500.0);
    std::int64_t center = 1000;
    std::size_t total = 0;
    while (total < target_tags) {
        center += 200 + static_cast<std::int64_t>(gap(rng));
        const int na = count(rng), nb = std::max(count(rng), na == 0 ? 1 : 0);
        for (int k = 0; k < na; ++k)
            in.a.tags.push_back({static_cast<Picoseconds>(center + spread(rng)), static_cast<DetectorId>(chan(rng))});
        for (int k = 0; k < nb; ++k)
            in.b.tags.push_back({static_cast<Picoseconds>(center + spread(rng) + in.delay),
                                 static_cast<DetectorId>(chan(rng))});
        total += static_cast<std::size_t>(na + nb);
    }
    std::sort(in.a.tags.begin(), in.a.tags.end(), tag_before);
    std::sort(in.b.tags.begin(), in.b.tags.end(), tag_before);
    return in;
}

inline PairList oracle_pairs(const Instance& in) {
    std::vector<std::int64_t> a, b;
    for (const auto& t : in.a.tags) a.push_back(static_cast<std::int64_t>(t.time));
    for (const auto& t : in.b.tags) b.push_back(static_cast<std::int64_t>(t.time) - in.delay);
    return optimal_matching(a, b, in.window);
}

inline PairList library_pairs(const Instance& in) {
    PairList out;
    for (const auto& p : match_coincidences(in.a, in.b, in.window, in.delay)) out.emplace_back(p.alice_index, p.bob_index);
    return out;
}

}  // namespace oracle
