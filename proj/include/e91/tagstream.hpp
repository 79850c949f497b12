#pragma once

// Detection records and per-party tag streams, plus the line-oriented text
// dump format:
//
//   #tagstream v1 party=<alice|bob> duration_ps=<N>[ start_ps=<M>]
//   <channel_id>\t<time_ps>
//   ...
//
// start_ps is only written when the stream does not begin at zero.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "e91/error.hpp"
#include "e91/quantum.hpp"

namespace e91 {

using Picoseconds = std::uint64_t;

inline constexpr double kPicosecondsPerSecond = 1e12;

inline Picoseconds seconds_to_ps(double seconds) {
    return static_cast<Picoseconds>(std::llround(seconds * kPicosecondsPerSecond));
}

inline double ps_to_seconds(Picoseconds ps) { return static_cast<double>(ps) / kPicosecondsPerSecond; }

struct TimeTag {
    Picoseconds time = 0;
    DetectorId channel = 0;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// Global order of a stream: by time, then by channel.
constexpr bool tag_before(const TimeTag& a, const TimeTag& b) noexcept {
    return a.time != b.time ? a.time < b.time : a.channel < b.channel;
}

struct TagStream {
    Party party = Party::alice;
    Picoseconds start = 0;
    Picoseconds duration = 0;
    std::vector<TimeTag> tags;

    Picoseconds end() const noexcept { return start + duration; }

    friend bool operator==(const TagStream&, const TagStream&) = default;
};

/// Checks global ordering, strictly increasing times per channel separated by
/// at least min_gap, and (when given) channel membership.
inline void validate_stream(const TagStream& stream, Picoseconds min_gap = 1,
                            const std::vector<DetectorId>& allowed_channels = {}) {
    std::array<bool, 256> allowed{};
    for (DetectorId c : allowed_channels) allowed[c] = true;
    std::array<Picoseconds, 256> last{};
    std::array<bool, 256> seen{};
    const TimeTag* prev = nullptr;
    for (const auto& tag : stream.tags) {
        if (prev && tag_before(tag, *prev)) throw InvalidArgument("tag stream is not sorted by time");
        if (!allowed_channels.empty() && !allowed[tag.channel])
            throw InvalidArgument("tag stream contains undeclared channel " + std::to_string(tag.channel));
        if (seen[tag.channel] && tag.time < last[tag.channel] + std::max<Picoseconds>(min_gap, 1))
            throw InvalidArgument("channel " + std::to_string(tag.channel) + " violates its dead time");
        seen[tag.channel] = true;
        last[tag.channel] = tag.time;
        prev = &tag;
    }
}

inline void write_tagstream(std::ostream& out, const TagStream& stream) {
    out << "#tagstream v1 party=" << to_string(stream.party) << " duration_ps=" << stream.duration;
    if (stream.start != 0) out << " start_ps=" << stream.start;
    out << '\n';
    std::string line;
    for (const auto& tag : stream.tags) {
        line.clear();
        line += std::to_string(static_cast<unsigned>(tag.channel));
        line += '\t';
        line += std::to_string(tag.time);
        line += '\n';
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
    }
}

namespace detail {

template <typename T>
bool parse_unsigned(std::string_view text, T& value) {
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc{} && ptr == last;
}

}  // namespace detail

inline TagStream read_tagstream(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("tag stream: missing header");
    std::istringstream header(line);
    std::string magic, version;
    header >> magic >> version;
    if (magic != "#tagstream" || version != "v1") throw InvalidArgument("tag stream: bad header '" + line + "'");

    TagStream stream;
    bool have_party = false, have_duration = false;
    std::string field;
    while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw InvalidArgument("tag stream: bad header field '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string_view value = std::string_view(field).substr(eq + 1);
        if (key == "party") {
            if (value == "alice") stream.party = Party::alice;
            else if (value == "bob") stream.party = Party::bob;
            else throw InvalidArgument("tag stream: unknown party '" + std::string(value) + "'");
            have_party = true;
        } else if (key == "duration_ps") {
            if (!detail::parse_unsigned(value, stream.duration))
                throw InvalidArgument("tag stream: bad duration_ps");
            have_duration = true;
        } else if (key == "start_ps") {
            if (!detail::parse_unsigned(value, stream.start)) throw InvalidArgument("tag stream: bad start_ps");
        } else {
            throw InvalidArgument("tag stream: unknown header field '" + key + "'");
        }
    }
    if (!have_party || !have_duration) throw InvalidArgument("tag stream: header needs party and duration_ps");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        unsigned channel = 0;
        TimeTag tag;
        if (tab == std::string::npos || !detail::parse_unsigned(std::string_view(line).substr(0, tab), channel) ||
            channel > 255 || !detail::parse_unsigned(std::string_view(line).substr(tab + 1), tag.time))
            throw InvalidArgument("tag stream: malformed line " + std::to_string(line_no));
        tag.channel = static_cast<DetectorId>(channel);
        stream.tags.push_back(tag);
    }
    validate_stream(stream);
    return stream;
}

}  // namespace e91
