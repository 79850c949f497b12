#pragma once

// Classical-channel framing. A frame on the byte stream is
//
//   u32 length | u8 type | u64 sequence | payload
//
// with big-endian integers; length counts everything after itself
// (type + sequence + payload). List-carrying payloads are split into chunks,
// each tagged with a block id, a chunk index and a final flag.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "e91/error.hpp"

namespace e91::wire {

enum class MessageType : std::uint8_t {
    hello = 1,
    tag_announce = 2,
    basis_reveal = 3,
    sample_request = 4,
    sample_reveal = 5,
    report = 6,
    abort = 7,
};

inline const char* to_string(MessageType t) {
    switch (t) {
        case MessageType::hello: return "hello";
        case MessageType::tag_announce: return "tag_announce";
        case MessageType::basis_reveal: return "basis_reveal";
        case MessageType::sample_request: return "sample_request";
        case MessageType::sample_reveal: return "sample_reveal";
        case MessageType::report: return "report";
        case MessageType::abort: return "abort";
    }
    return "unknown";
}

inline constexpr std::uint32_t kHeaderBytes = 1 + 8;
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;  ///< limit on the length field
inline constexpr std::uint32_t kMaxPayloadBytes = kMaxFrameBytes - kHeaderBytes;
inline constexpr std::uint32_t kProtocolVersion = 1;

struct Frame {
    MessageType type = MessageType::hello;
    std::uint64_t sequence = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void boolean(bool v) { u8(v ? 1 : 0); }
    void bytes(std::span<const std::uint8_t> b) {
        u32(static_cast<std::uint32_t>(b.size()));
        out_.insert(out_.end(), b.begin(), b.end());
    }
    void string(const std::string& s) {
        bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }
    void reserve(std::size_t n) { out_.reserve(n); }
    std::size_t size() const noexcept { return out_.size(); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int k = n - 1; k >= 0; --k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
    double f64() { return std::bit_cast<double>(get(8)); }
    bool boolean() {
        const auto v = u8();
        if (v > 1) throw ProtocolViolation("wire: bad boolean");
        return v == 1;
    }
    std::vector<std::uint8_t> bytes() {
        const auto n = u32();
        need(n);
        std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                      data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    std::string string() {
        const auto b = bytes();
        return {b.begin(), b.end()};
    }
    /// Element count for a list of fixed-size items, checked against what is left.
    std::size_t count(std::size_t item_bytes) {
        const auto n = u32();
        if (static_cast<std::uint64_t>(n) * item_bytes > remaining())
            throw ProtocolViolation("wire: list length exceeds payload");
        return n;
    }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    void finish() const {
        if (remaining() != 0) throw ProtocolViolation("wire: trailing bytes in payload");
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw ProtocolViolation("wire: truncated payload");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int k = 0; k < n; ++k) v = (v << 8) | data_[pos_++];
        return v;
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline bool valid_type(std::uint8_t t) noexcept { return t >= 1 && t <= 7; }

inline std::array<std::uint8_t, 4 + kHeaderBytes> encode_header(MessageType type, std::uint64_t seq,
                                                                std::size_t payload_bytes) {
    if (payload_bytes > kMaxPayloadBytes) throw ProtocolViolation("wire: payload exceeds frame limit");
    const auto length = static_cast<std::uint32_t>(kHeaderBytes + payload_bytes);
    std::array<std::uint8_t, 4 + kHeaderBytes> h{};
    for (int k = 0; k < 4; ++k) h[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(length >> (8 * (3 - k)));
    h[4] = static_cast<std::uint8_t>(type);
    for (int k = 0; k < 8; ++k) h[static_cast<std::size_t>(5 + k)] = static_cast<std::uint8_t>(seq >> (8 * (7 - k)));
    return h;
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
    const auto h = encode_header(f.type, f.sequence, f.payload.size());
    std::vector<std::uint8_t> out(h.size() + f.payload.size());
    std::copy(h.begin(), h.end(), out.begin());
    std::copy(f.payload.begin(), f.payload.end(), out.begin() + static_cast<std::ptrdiff_t>(h.size()));
    return out;
}

/// Validates a length prefix before anything is allocated for the body.
inline std::uint32_t check_length(std::span<const std::uint8_t, 4> prefix) {
    std::uint32_t length = 0;
    for (auto b : prefix) length = (length << 8) | b;
    if (length < kHeaderBytes) throw ProtocolViolation("wire: frame shorter than its header");
    if (length > kMaxFrameBytes) throw ProtocolViolation("wire: frame length " + std::to_string(length) +
                                                         " exceeds limit");
    return length;
}

/// Parses exactly one frame occupying the whole buffer.
inline Frame parse_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ProtocolViolation("wire: truncated frame");
    const auto length = check_length(bytes.first<4>());
    if (bytes.size() - 4 < length) throw ProtocolViolation("wire: truncated frame");
    if (bytes.size() - 4 > length) throw ProtocolViolation("wire: trailing bytes after frame");
    if (!valid_type(bytes[4])) throw ProtocolViolation("wire: unknown message type " + std::to_string(bytes[4]));
    Frame f;
    f.type = static_cast<MessageType>(bytes[4]);
    for (std::size_t k = 5; k < 13; ++k) f.sequence = (f.sequence << 8) | bytes[k];
    f.payload.assign(bytes.begin() + 13, bytes.end());
    return f;
}

// ---- payloads -------------------------------------------------------------

struct Hello {
    std::uint32_t version = kProtocolVersion;
    std::uint8_t role = 0;  ///< 0 alice, 1 bob
    std::uint64_t parameter_hash = 0;

    friend bool operator==(const Hello&, const Hello&) = default;
};

struct ChunkHeader {
    std::uint64_t block_id = 0;
    std::uint32_t chunk = 0;
    bool final = true;

    friend bool operator==(const ChunkHeader&, const ChunkHeader&) = default;
};

struct AnnouncedTag {
    std::uint64_t time = 0;
    std::uint8_t basis = 0;  ///< SettingLabel of the detecting port

    friend bool operator==(const AnnouncedTag&, const AnnouncedTag&) = default;
};

struct TagAnnounce {
    ChunkHeader header;
    std::vector<AnnouncedTag> tags;

    friend bool operator==(const TagAnnounce&, const TagAnnounce&) = default;
};

/// Alice to Bob: index = Bob tag index, setting = Alice setting, detector =
/// Alice detector for CHSH test pairs (0 otherwise). Bob to Alice: index =
/// pair position, setting = Bob setting, detector = Bob detector.
struct RevealEntry {
    std::uint64_t index = 0;
    std::uint8_t setting = 0;
    std::uint8_t detector = 0;

    friend bool operator==(const RevealEntry&, const RevealEntry&) = default;
};

struct BasisReveal {
    ChunkHeader header;
    std::vector<RevealEntry> entries;

    friend bool operator==(const BasisReveal&, const BasisReveal&) = default;
};

struct SampleRequest {
    ChunkHeader header;
    std::vector<std::uint64_t> positions;

    friend bool operator==(const SampleRequest&, const SampleRequest&) = default;
};

struct SampleReveal {
    ChunkHeader header;
    std::vector<std::uint8_t> bits;

    friend bool operator==(const SampleReveal&, const SampleReveal&) = default;
};

inline constexpr std::uint64_t kAggregateBlock = ~std::uint64_t{0};

struct ReportMessage {
    std::uint64_t block_id = 0;
    std::string row;  ///< serialized report row; both sides must agree byte for byte

    friend bool operator==(const ReportMessage&, const ReportMessage&) = default;
};

struct Abort {
    std::string reason;

    friend bool operator==(const Abort&, const Abort&) = default;
};

namespace detail {

inline void put(ByteWriter& w, const ChunkHeader& h) {
    w.u64(h.block_id);
    w.u32(h.chunk);
    w.boolean(h.final);
}

inline ChunkHeader get_header(ByteReader& r) {
    ChunkHeader h;
    h.block_id = r.u64();
    h.chunk = r.u32();
    h.final = r.boolean();
    return h;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Hello& m) {
    ByteWriter w;
    w.u32(m.version);
    w.u8(m.role);
    w.u64(m.parameter_hash);
    return w.take();
}

inline std::vector<std::uint8_t> encode(const TagAnnounce& m) {
    ByteWriter w;
    w.reserve(17 + 9 * m.tags.size());
    detail::put(w, m.header);
    w.u32(static_cast<std::uint32_t>(m.tags.size()));
    for (const auto& t : m.tags) {
        w.u64(t.time);
        w.u8(t.basis);
    }
    return w.take();
}

inline std::vector<std::uint8_t> encode(const BasisReveal& m) {
    ByteWriter w;
    w.reserve(17 + 10 * m.entries.size());
    detail::put(w, m.header);
    w.u32(static_cast<std::uint32_t>(m.entries.size()));
    for (const auto& e : m.entries) {
        w.u64(e.index);
        w.u8(e.setting);
        w.u8(e.detector);
    }
    return w.take();
}

inline std::vector<std::uint8_t> encode(const SampleRequest& m) {
    ByteWriter w;
    w.reserve(17 + 8 * m.positions.size());
    detail::put(w, m.header);
    w.u32(static_cast<std::uint32_t>(m.positions.size()));
    for (auto p : m.positions) w.u64(p);
    return w.take();
}

inline std::vector<std::uint8_t> encode(const SampleReveal& m) {
    ByteWriter w;
    w.reserve(17 + m.bits.size());
    detail::put(w, m.header);
    w.u32(static_cast<std::uint32_t>(m.bits.size()));
    for (auto b : m.bits) w.u8(b);
    return w.take();
}

inline std::vector<std::uint8_t> encode(const ReportMessage& m) {
    ByteWriter w;
    w.u64(m.block_id);
    w.string(m.row);
    return w.take();
}

inline std::vector<std::uint8_t> encode(const Abort& m) {
    ByteWriter w;
    w.string(m.reason);
    return w.take();
}

inline Hello decode_hello(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    Hello m;
    m.version = r.u32();
    m.role = r.u8();
    if (m.role > 1) throw ProtocolViolation("wire: bad role in hello");
    m.parameter_hash = r.u64();
    r.finish();
    return m;
}

inline TagAnnounce decode_tag_announce(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    TagAnnounce m;
    m.header = detail::get_header(r);
    const auto n = r.count(9);
    m.tags.resize(n);
    for (auto& t : m.tags) {
        t.time = r.u64();
        t.basis = r.u8();
    }
    r.finish();
    return m;
}

inline BasisReveal decode_basis_reveal(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    BasisReveal m;
    m.header = detail::get_header(r);
    const auto n = r.count(10);
    m.entries.resize(n);
    for (auto& e : m.entries) {
        e.index = r.u64();
        e.setting = r.u8();
        e.detector = r.u8();
    }
    r.finish();
    return m;
}

inline SampleRequest decode_sample_request(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    SampleRequest m;
    m.header = detail::get_header(r);
    const auto n = r.count(8);
    m.positions.resize(n);
    for (auto& x : m.positions) x = r.u64();
    r.finish();
    return m;
}

inline SampleReveal decode_sample_reveal(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    SampleReveal m;
    m.header = detail::get_header(r);
    const auto n = r.count(1);
    m.bits.resize(n);
    for (auto& b : m.bits) {
        b = r.u8();
        if (b > 1) throw ProtocolViolation("wire: sample bit not 0/1");
    }
    r.finish();
    return m;
}

inline ReportMessage decode_report(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    ReportMessage m;
    m.block_id = r.u64();
    m.row = r.string();
    r.finish();
    return m;
}

inline Abort decode_abort(std::span<const std::uint8_t> p) {
    ByteReader r(p);
    Abort m;
    m.reason = r.string();
    r.finish();
    return m;
}

/// Items per chunk so that a chunk of item_bytes-sized entries fits a frame.
inline std::size_t chunk_capacity(std::size_t item_bytes) { return (kMaxPayloadBytes - 64) / item_bytes; }

}  // namespace e91::wire
