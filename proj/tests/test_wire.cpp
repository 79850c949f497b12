#include <gtest/gtest.h>

#include <thread>

#include "e91/protocol/transport.hpp"
#include "e91/protocol/wire.hpp"

using namespace e91;
using namespace e91::wire;

namespace {

std::vector<Frame> corpus() {
    std::vector<Frame> out;
    std::uint64_t seq = 1;
    auto add = [&](MessageType t, std::vector<std::uint8_t> payload) { out.push_back({t, seq++, std::move(payload)}); };
    add(MessageType::hello, encode(Hello{kProtocolVersion, 1, 0xDEADBEEFCAFEF00DULL}));
    add(MessageType::tag_announce, encode(TagAnnounce{{3, 0, true}, {{100, 3}, {1ULL << 50, 4}}}));
    add(MessageType::tag_announce, encode(TagAnnounce{{3, 1, false}, {}}));
    add(MessageType::basis_reveal, encode(BasisReveal{{7, 2, true}, {{5, 0, 3}, {9, 2, 0}}}));
    add(MessageType::sample_request, encode(SampleRequest{{7, 0, true}, {0, 4, 1ULL << 40}}));
    add(MessageType::sample_reveal, encode(SampleReveal{{7, 0, true}, {0, 1, 1, 0}}));
    add(MessageType::report, encode(ReportMessage{kAggregateBlock, "total,2.8,0.01,0,1,1,1,0,1,1,accept"}));
    add(MessageType::abort, encode(Abort{"S below classical bound"}));
    add(MessageType::report, {});
    return out;
}

}  // namespace

TEST(Wire, FrameRoundTripOnCorpus) {
    for (const auto& f : corpus()) {
        const auto bytes = encode_frame(f);
        EXPECT_EQ(bytes.size(), 4 + kHeaderBytes + f.payload.size());
        const auto parsed = parse_frame(bytes);
        EXPECT_EQ(parsed, f);
        EXPECT_EQ(encode_frame(parsed), bytes);
    }
}

TEST(Wire, HeaderLayoutIsBigEndian) {
    const auto bytes = encode_frame(Frame{MessageType::report, 0x0102030405060708ULL, {0xAA, 0xBB}});
    const std::vector<std::uint8_t> expected{0, 0, 0, 11, 6, 1, 2, 3, 4, 5, 6, 7, 8, 0xAA, 0xBB};
    EXPECT_EQ(bytes, expected);
}

TEST(Wire, PayloadRoundTrips) {
    const Hello h{kProtocolVersion, 0, 42};
    EXPECT_EQ(decode_hello(encode(h)), h);
    const TagAnnounce t{{1, 2, false}, {{5, 3}, {6, 4}}};
    EXPECT_EQ(decode_tag_announce(encode(t)), t);
    const BasisReveal b{{1, 0, true}, {{1, 2, 3}}};
    EXPECT_EQ(decode_basis_reveal(encode(b)), b);
    const SampleRequest sr{{9, 0, true}, {1, 2, 3}};
    EXPECT_EQ(decode_sample_request(encode(sr)), sr);
    const SampleReveal sv{{9, 0, true}, {1, 0}};
    EXPECT_EQ(decode_sample_reveal(encode(sv)), sv);
    const ReportMessage r{4, "row"};
    EXPECT_EQ(decode_report(encode(r)), r);
    EXPECT_EQ(decode_abort(encode(Abort{"x"})).reason, "x");
}

TEST(Wire, TruncatedFramesRejected) {
    for (const auto& f : corpus()) {
        const auto bytes = encode_frame(f);
        for (std::size_t cut = 0; cut < bytes.size(); ++cut)
            EXPECT_THROW(parse_frame(std::span(bytes).first(cut)), ProtocolViolation) << cut;
    }
}

TEST(Wire, TrailingBytesAndUnknownTypeRejected) {
    auto bytes = encode_frame(corpus()[0]);
    bytes.push_back(0);
    EXPECT_THROW(parse_frame(bytes), ProtocolViolation);
    auto bad = encode_frame(corpus()[0]);
    bad[4] = 9;
    EXPECT_THROW(parse_frame(bad), ProtocolViolation);
}

TEST(Wire, TruncatedPayloadsRejected) {
    const auto payload = encode(TagAnnounce{{1, 0, true}, {{5, 3}, {6, 4}}});
    for (std::size_t cut = 0; cut < payload.size(); ++cut)
        EXPECT_THROW(decode_tag_announce(std::span(payload).first(cut)), ProtocolViolation);
    auto extra = payload;
    extra.push_back(1);
    EXPECT_THROW(decode_tag_announce(extra), ProtocolViolation);
    EXPECT_THROW(decode_sample_reveal(encode(SampleReveal{{}, {2}})), ProtocolViolation);
}

TEST(Wire, OversizedLengthRejectedBeforeAllocation) {
    const std::array<std::uint8_t, 4> huge{0xFF, 0xFF, 0xFF, 0xF0};
    EXPECT_THROW(check_length(huge), ProtocolViolation);
    const std::array<std::uint8_t, 4> tiny{0, 0, 0, 3};
    EXPECT_THROW(check_length(tiny), ProtocolViolation);
    // an element count that cannot fit in the remaining payload
    ByteWriter w;
    w.u64(1);
    w.u32(0);
    w.boolean(true);
    w.u32(0xFFFFFFFFu);
    EXPECT_THROW(decode_sample_request(w.take()), ProtocolViolation);
}

TEST(Wire, LinkDetectsOversizedFrameOnStream) {
    auto [a, b] = make_pipe();
    const std::array<std::uint8_t, 13> header{0x7F, 0xFF, 0xFF, 0xFF, 6, 0, 0, 0, 0, 0, 0, 0, 1};
    a->write(header);
    MessageLink link(*b);
    EXPECT_THROW(link.receive(), ProtocolViolation);
}

TEST(Wire, LinkEnforcesIncreasingSequence) {
    auto [a, b] = make_pipe();
    a->write(encode_frame(Frame{MessageType::report, 5, encode(ReportMessage{1, "x"})}));
    a->write(encode_frame(Frame{MessageType::report, 5, encode(ReportMessage{1, "y"})}));
    MessageLink link(*b);
    EXPECT_EQ(link.receive().sequence, 5u);
    EXPECT_THROW(link.receive(), ProtocolViolation);
}

TEST(Wire, LinkSurfacesPeerAbortAndTypeMismatch) {
    auto [a, b] = make_pipe();
    MessageLink sender(*a), receiver(*b);
    sender.send(MessageType::hello, encode(Hello{}));
    EXPECT_THROW(receiver.expect(MessageType::report), ProtocolViolation);
    sender.send_abort("testing");
    try {
        receiver.receive();
        FAIL();
    } catch (const ProtocolViolation& e) {
        EXPECT_NE(std::string(e.what()).find("testing"), std::string::npos);
    }
}

TEST(Wire, ClosedPipeIsTransportError) {
    auto [a, b] = make_pipe();
    a->close();
    std::array<std::uint8_t, 4> buf{};
    EXPECT_THROW(b->read_exact(buf), TransportError);
}

TEST(Wire, TcpCarriesFrames) {
    TcpListener listener("127.0.0.1", 0);
    std::vector<Frame> got;
    std::thread server([&] {
        auto ch = listener.accept();
        MessageLink link(*ch);
        for (int k = 0; k < 3; ++k) got.push_back(link.receive());
    });
    auto client = TcpChannel::connect("127.0.0.1", listener.port());
    MessageLink link(*client);
    link.send(MessageType::hello, encode(Hello{kProtocolVersion, 0, 7}));
    std::vector<std::uint8_t> big(3 << 20, 0x5A);
    link.send(MessageType::sample_reveal, encode(SampleReveal{{}, {1, 0, 1}}));
    link.send(MessageType::report, encode(ReportMessage{2, std::string(big.begin(), big.end())}));
    server.join();
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(decode_hello(got[0].payload).parameter_hash, 7u);
    EXPECT_EQ(decode_report(got[2].payload).row.size(), big.size());
    EXPECT_EQ(got[2].sequence, 3u);
}
