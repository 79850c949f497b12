#pragma once

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "e91/optics.hpp"

namespace testing_support {

/// Unit efficiencies, no darks, no jitter, no drift.
inline e91::SessionConfig ideal_session(double pair_rate, double duration_s,
                                        double phase = std::numbers::pi) {
    e91::SessionConfig c;
    c.source.pair_rate = pair_rate;
    c.source.duration_s = duration_s;
    c.source.reference_phase = phase;
    c.bob_channel.delay_ps = 1'000'000;
    return c;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("e91_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
