#include <gtest/gtest.h>

#include <algorithm>
#include <future>
#include <numbers>
#include <set>

#include "e91/optics.hpp"
#include "e91/protocol/session.hpp"
#include "support.hpp"

using namespace e91;
using testing_support::ideal_session;

namespace {

constexpr Picoseconds kSecond = 1'000'000'000'000ULL;

struct Streams {
    TagStream alice, bob;
};

Streams simulate(double phase, double rate, double seconds, std::uint64_t seed) {
    auto s = simulate_session(ideal_session(rate, seconds, phase), seed);
    return {std::move(s.alice), std::move(s.bob)};
}

EndpointConfig endpoint(std::uint64_t seed = 3) {
    EndpointConfig c;
    c.params.seed = seed;
    return c;
}

}  // namespace

TEST(Session, IdealStreamsAccept) {
    const auto st = simulate(std::numbers::pi, 1e5, 2.0, 1);
    const auto r = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond);
    ASSERT_TRUE(r.report.complete) << r.report.failure;
    ASSERT_EQ(r.report.blocks.size(), 2u);
    const auto& agg = r.report.aggregate;
    EXPECT_EQ(agg.block_id, "aggregate");
    EXPECT_EQ(agg.verdict, Verdict::accept);
    EXPECT_LT(agg.qber, 0.001);
    EXPECT_NEAR(agg.s, 2 * std::numbers::sqrt2, 3 * agg.s_err);
    EXPECT_EQ(report_csv(r.report), report_csv(r.bob_report));
    EXPECT_EQ(r.alice_key, r.bob_key);
    EXPECT_GT(r.alice_key.size(), 40000u);
    EXPECT_NEAR(agg.raw_bps, static_cast<double>(agg.raw_bits) / 2.0, 1e-9);
}

TEST(Session, SampledBitsNeverInFinalKey) {
    const auto st = simulate(std::numbers::pi, 5e4, 2.0, 2);
    const auto r = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond);
    ASSERT_TRUE(r.report.complete);
    const std::set<std::uint64_t> disclosed(r.disclosed.begin(), r.disclosed.end());
    EXPECT_EQ(disclosed.size(), r.disclosed.size());
    for (auto id : r.alice_key.pair_ids) EXPECT_FALSE(disclosed.count(id));
    for (auto id : r.bob_key.pair_ids) EXPECT_FALSE(disclosed.count(id));
    const double raw = static_cast<double>(r.report.aggregate.raw_bits);
    EXPECT_NEAR(static_cast<double>(disclosed.size()), 0.1 * raw, 2.0);
    EXPECT_EQ(r.alice_key.size() + disclosed.size(), r.report.aggregate.raw_bits);
}

TEST(Session, SKillingPhaseAborts) {
    const auto st = simulate(0.0, 5e4, 1.0, 3);
    const auto r = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond);
    ASSERT_TRUE(r.report.complete);
    EXPECT_EQ(r.report.aggregate.verdict, Verdict::abort);
    EXPECT_EQ(r.report.aggregate.secure_bps, 0.0);
    EXPECT_NEAR(r.report.aggregate.s, 0.0, 5 * r.report.aggregate.s_err);
    EXPECT_TRUE(r.alice_key.bits.empty());
    EXPECT_EQ(report_csv(r.report), report_csv(r.bob_report));
}

TEST(Session, TransportEquivalence) {
    const auto st = simulate(std::numbers::pi - 0.4, 5e4, 2.0, 4);
    SessionOptions tcp;
    tcp.transport = TransportKind::tcp;
    const auto a = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond);
    const auto b = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond, tcp);
    ASSERT_TRUE(b.report.complete) << b.report.failure;
    EXPECT_EQ(report_csv(a.report), report_csv(b.report));
    EXPECT_EQ(report_csv(a.bob_report), report_csv(b.bob_report));
    EXPECT_EQ(a.alice_key, b.alice_key);
}

TEST(Session, AgreementAcrossPhasesAndSeeds) {
    for (int k = 0; k < 6; ++k) {
        const auto st = simulate(k * 0.6, 2e4, 1.0, 10 + static_cast<std::uint64_t>(k));
        const auto r = run_session(endpoint(k), endpoint(k), st.alice, st.bob, kSecond);
        ASSERT_TRUE(r.report.complete);
        EXPECT_EQ(report_csv(r.report), report_csv(r.bob_report));
        EXPECT_EQ(r.alice_key, r.bob_key);
    }
}

TEST(Session, FullQberModeDisclosesWholeKey) {
    auto cfg = endpoint();
    cfg.params.qber_mode = QberMode::full;
    const auto st = simulate(std::numbers::pi, 2e4, 1.0, 5);
    const auto r = run_session(cfg, cfg, st.alice, st.bob, kSecond);
    ASSERT_TRUE(r.report.complete);
    EXPECT_EQ(r.disclosed.size(), r.report.aggregate.raw_bits);
    EXPECT_TRUE(r.alice_key.bits.empty());
    EXPECT_EQ(r.report.aggregate.qber, 0.0);
}

TEST(Session, TransportFailureGivesPartialAbort) {
    const auto st = simulate(std::numbers::pi, 2e4, 3.0, 6);
    SessionOptions opt;
    opt.fail_alice_after_bytes = 6'000;  // Alice mostly sends sample requests
    const auto r = run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond, opt);
    EXPECT_FALSE(r.report.complete);
    EXPECT_FALSE(r.report.failure.empty());
    EXPECT_LT(r.report.blocks.size(), 3u);
    EXPECT_EQ(r.report.aggregate.verdict, Verdict::abort);
    EXPECT_EQ(r.report.aggregate.secure_bps, 0.0);
    EXPECT_EQ(r.bob_report.aggregate.verdict, Verdict::abort);
}

TEST(Session, ParameterMismatchRejectedAtHandshake) {
    auto bob = endpoint();
    bob.params.window = 128;
    const auto st = simulate(std::numbers::pi, 1e4, 1.0, 7);
    const auto r = run_session(endpoint(), bob, st.alice, st.bob, kSecond);
    EXPECT_FALSE(r.report.complete);
    EXPECT_NE(r.report.failure.find("parameters"), std::string::npos);
    EXPECT_TRUE(r.report.blocks.empty());
}

TEST(Session, MismatchedStreamsRejected) {
    auto st = simulate(std::numbers::pi, 1e4, 1.0, 8);
    st.bob.duration += 1;
    EXPECT_THROW(run_session(endpoint(), endpoint(), st.alice, st.bob, kSecond), InvalidArgument);
    EXPECT_THROW(run_session(endpoint(), endpoint(), st.alice, st.alice, 0), InvalidArgument);
}

namespace {

/// Bob endpoint on one end of a pipe, a hand-driven peer on the other.
struct RogueAlice {
    std::unique_ptr<ByteChannel> mine, theirs;
    RogueAlice() { std::tie(mine, theirs) = make_pipe(); }

    void send_raw(wire::MessageType t, std::uint64_t seq, std::vector<std::uint8_t> payload) {
        mine->write(wire::encode_frame(wire::Frame{t, seq, std::move(payload)}));
    }

    /// Reads frames until an abort arrives; false if the stream closes first.
    bool saw_abort() {
        try {
            for (;;) {
                std::array<std::uint8_t, 4> prefix{};
                mine->read_exact(prefix);
                const auto len = wire::check_length(std::span<const std::uint8_t, 4>(prefix));
                std::vector<std::uint8_t> rest(len);
                mine->read_exact(rest);
                if (rest[0] == static_cast<std::uint8_t>(wire::MessageType::abort)) return true;
            }
        } catch (const TransportError&) {
            return false;
        }
    }
};

}  // namespace

TEST(Session, ReplayedSequenceNumberAborts) {
    RogueAlice peer;
    const auto st = simulate(std::numbers::pi, 1e4, 0.2, 9);
    auto bob_cfg = endpoint();
    Endpoint bob(Party::bob, bob_cfg, *peer.theirs);
    auto fut = std::async(std::launch::async, [&] {
        bob.handshake();
        bob.run_block(0, st.bob);
    });
    peer.send_raw(wire::MessageType::hello, 1, wire::encode(wire::Hello{wire::kProtocolVersion, 0, parameter_hash(bob_cfg)}));
    peer.send_raw(wire::MessageType::basis_reveal, 1, wire::encode(wire::BasisReveal{{0, 0, true}, {}}));
    EXPECT_THROW(fut.get(), ProtocolViolation);
    EXPECT_TRUE(peer.saw_abort());
}

TEST(Session, MalformedPayloadAborts) {
    RogueAlice peer;
    const auto st = simulate(std::numbers::pi, 1e4, 0.2, 9);
    auto bob_cfg = endpoint();
    Endpoint bob(Party::bob, bob_cfg, *peer.theirs);
    auto fut = std::async(std::launch::async, [&] {
        bob.handshake();
        bob.run_block(0, st.bob);
    });
    peer.send_raw(wire::MessageType::hello, 1, wire::encode(wire::Hello{wire::kProtocolVersion, 0, parameter_hash(bob_cfg)}));
    peer.send_raw(wire::MessageType::basis_reveal, 2, {1, 2, 3});
    EXPECT_THROW(fut.get(), ProtocolViolation);
    EXPECT_TRUE(peer.saw_abort());
}

TEST(Session, OutOfRangeSamplePositionAborts) {
    RogueAlice peer;
    const auto st = simulate(std::numbers::pi, 1e4, 0.2, 9);
    auto bob_cfg = endpoint();
    Endpoint bob(Party::bob, bob_cfg, *peer.theirs);
    auto fut = std::async(std::launch::async, [&] {
        bob.handshake();
        bob.run_block(0, st.bob);
    });
    peer.send_raw(wire::MessageType::hello, 1, wire::encode(wire::Hello{wire::kProtocolVersion, 0, parameter_hash(bob_cfg)}));
    peer.send_raw(wire::MessageType::basis_reveal, 2, wire::encode(wire::BasisReveal{{0, 0, true}, {}}));
    peer.send_raw(wire::MessageType::sample_request, 3, wire::encode(wire::SampleRequest{{0, 0, true}, {5}}));
    EXPECT_THROW(fut.get(), ProtocolViolation);
    EXPECT_TRUE(peer.saw_abort());
}
