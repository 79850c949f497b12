#pragma once

// Alice and Bob endpoints of the modified E91 post-processing, and the
// session driver that runs them concurrently over a transport.
//
// Per block:
//   Bob   -> Alice  tag_announce    (time, basis) of every Bob tag
//   Alice -> Bob    basis_reveal    (Bob tag index, Alice setting, Alice
//                                    detector if the pair is a CHSH test pair)
//   Bob   -> Alice  basis_reveal    (pair position, Bob setting, Bob detector)
//                                   for the test pairs
//   Alice -> Bob    sample_request  key positions disclosed for QBER
//   Bob   -> Alice  sample_reveal   Bob's bits at those positions
//   Alice -> Bob    sample_reveal   Alice's bits at those positions
//   Alice -> Bob    report          Alice's report row
//   Bob   -> Alice  report          Bob's independently computed row, or abort
//                                   when the rows differ
// After the last block the two sides exchange the aggregate row the same way.

#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "e91/coincidence.hpp"
#include "e91/error.hpp"
#include "e91/protocol/report.hpp"
#include "e91/protocol/sifting.hpp"
#include "e91/protocol/transport.hpp"
#include "e91/protocol/wire.hpp"
#include "e91/quantum.hpp"
#include "e91/rng.hpp"
#include "e91/tagstream.hpp"

namespace e91 {

struct ProtocolParams {
    PsOffset window = 64;
    DelaySearch delay;
    double sample_fraction = 0.1;
    QberMode qber_mode = QberMode::sample;
    double abort_sigma = 0.0;
    std::uint64_t seed = 0;  ///< drives Alice's choice of disclosed positions
};

struct EndpointConfig {
    SettingSet settings = SettingSet::standard();
    ProtocolParams params;
};

/// FNV-1a over the parameters both endpoints must agree on.
inline std::uint64_t parameter_hash(const EndpointConfig& c) {
    wire::ByteWriter w;
    const auto& p = c.params;
    w.i64(p.window);
    w.i64(p.delay.min_delay);
    w.i64(p.delay.max_delay);
    w.i64(p.delay.bin_width);
    w.u64(p.delay.max_alice_tags);
    w.f64(p.delay.min_sigma);
    w.i64(p.delay.refine_half_width);
    w.f64(p.sample_fraction);
    w.u8(static_cast<std::uint8_t>(p.qber_mode));
    w.f64(p.abort_sigma);
    for (const auto& list : {std::span<const MeasurementSetting>(c.settings.alice()),
                             std::span<const MeasurementSetting>(c.settings.bob())})
        for (const auto& s : list) {
            w.u8(static_cast<std::uint8_t>(s.label));
            w.f64(s.bloch.x);
            w.f64(s.bloch.y);
            w.f64(s.bloch.z);
            w.u8(s.plus_port);
            w.u8(s.minus_port);
            w.u8(static_cast<std::uint8_t>(s.outcome_sign + 1));
        }
    const auto bytes = w.take();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Statistics one block contributes to its row and to the aggregate.
struct BlockTally {
    CoincidenceMatrix test_matrix;
    std::uint64_t raw_bits = 0;
    std::uint64_t sample_size = 0;
    std::uint64_t mismatches = 0;
    double duration_s = 0.0;

    BlockTally& operator+=(const BlockTally& o) {
        test_matrix += o.test_matrix;
        raw_bits += o.raw_bits;
        sample_size += o.sample_size;
        mismatches += o.mismatches;
        duration_s += o.duration_s;
        return *this;
    }
};

inline BlockReport tally_report(const std::string& block_id, const BlockTally& t, const EndpointConfig& c) {
    ReportInputs in;
    try {
        const auto chsh = chsh_from_counts(t.test_matrix, c.settings);
        in.s = chsh.s;
        in.s_err = chsh.std_error;
    } catch (const InsufficientStatistics&) {
    }
    if (t.sample_size > 0) in.qber = static_cast<double>(t.mismatches) / static_cast<double>(t.sample_size);
    in.raw_bits = t.raw_bits;
    in.duration_s = t.duration_s;
    in.abort_sigma = c.params.abort_sigma;
    return build_report(block_id, in);
}

inline std::string block_label(std::uint64_t block_id) {
    return block_id == wire::kAggregateBlock ? "aggregate" : std::to_string(block_id);
}

struct BlockOutcome {
    BlockReport report;
    BlockTally tally;
    SiftedKey key;                        ///< remaining key; empty when the block aborted
    std::vector<std::uint64_t> disclosed; ///< pair ids of bits made public
    std::size_t coincidences = 0;
};

namespace detail {

template <typename Item, typename Message, typename Fill>
void send_chunked(MessageLink& link, wire::MessageType type, std::uint64_t block_id, std::size_t total,
                  std::size_t item_bytes, Fill fill) {
    const std::size_t cap = wire::chunk_capacity(item_bytes);
    std::uint32_t chunk = 0;
    std::size_t begin = 0;
    do {
        const std::size_t end = std::min(total, begin + cap);
        Message m;
        m.header = {block_id, chunk++, end == total};
        fill(m, begin, end);
        link.send(type, wire::encode(m));
        begin = end;
    } while (begin < total);
}

template <typename Message, typename Decode, typename Take>
void receive_chunked(MessageLink& link, wire::MessageType type, std::uint64_t block_id, Decode decode, Take take) {
    for (std::uint32_t chunk = 0;; ++chunk) {
        const auto frame = link.expect(type);
        Message m = decode(frame.payload);
        if (m.header.block_id != block_id || m.header.chunk != chunk)
            throw ProtocolViolation(std::string("out-of-order ") + wire::to_string(type) + " chunk");
        const bool final = m.header.final;
        take(m);
        if (final) return;
    }
}

inline void check_positions(const std::vector<std::uint64_t>& positions, std::size_t key_size) {
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= key_size) throw ProtocolViolation("sample position outside the sifted key");
        if (i > 0 && positions[i] <= positions[i - 1]) throw ProtocolViolation("sample positions not increasing");
    }
}

}  // namespace detail

class Endpoint {
public:
    Endpoint(Party role, EndpointConfig config, ByteChannel& channel)
        : role_(role), config_(std::move(config)), link_(channel) {
        if (!(config_.params.sample_fraction > 0.0 && config_.params.sample_fraction <= 0.5))
            throw InvalidArgument("sample_fraction must lie in (0, 0.5]");
        if (config_.params.window < 1) throw InvalidArgument("coincidence window must be >= 1 ps");
    }

    Party role() const noexcept { return role_; }
    const EndpointConfig& config() const noexcept { return config_; }

    void handshake() {
        const wire::Hello mine{wire::kProtocolVersion, static_cast<std::uint8_t>(role_), parameter_hash(config_)};
        guarded([&] {
            link_.send(wire::MessageType::hello, wire::encode(mine));
            const auto peer = wire::decode_hello(link_.expect(wire::MessageType::hello).payload);
            if (peer.version != wire::kProtocolVersion) throw ProtocolViolation("peer speaks another protocol version");
            if (peer.role == mine.role) throw ProtocolViolation("both endpoints claim the same role");
            if (peer.parameter_hash != mine.parameter_hash)
                throw ProtocolViolation("endpoints disagree on session parameters");
        });
    }

    BlockOutcome run_block(std::uint64_t block_id, const TagStream& tags) {
        if (tags.party != role_) throw InvalidArgument("tag stream belongs to the other party");
        BlockOutcome out;
        guarded([&] { out = role_ == Party::alice ? alice_block(block_id, tags) : bob_block(block_id, tags); });
        total_ += out.tally;
        return out;
    }

    /// Exchanges and verifies the aggregate row over all completed blocks.
    BlockReport finish() {
        BlockReport row;
        guarded([&] { row = exchange_report(wire::kAggregateBlock, total_); });
        return row;
    }

    const BlockTally& total() const noexcept { return total_; }
    void close() noexcept { link_.close(); }

private:
    template <typename F>
    void guarded(F&& body) {
        try {
            body();
        } catch (const ProtocolViolation& e) {
            link_.send_abort(e.what());
            link_.close();
            throw;
        } catch (...) {
            link_.close();
            throw;
        }
    }

    /// Alice sends first; the receiver checks byte equality and answers with
    /// its own row.
    BlockReport exchange_report(std::uint64_t block_id, const BlockTally& tally) {
        const auto mine = tally_report(block_label(block_id), tally, config_);
        const auto row = format_row(mine);
        auto send = [&] { link_.send(wire::MessageType::report, wire::encode(wire::ReportMessage{block_id, row})); };
        auto receive = [&] {
            const auto peer = wire::decode_report(link_.expect(wire::MessageType::report).payload);
            if (peer.block_id != block_id) throw ProtocolViolation("report for the wrong block");
            if (peer.row != row) throw ProtocolViolation("report mismatch: peer computed '" + peer.row + "'");
        };
        if (role_ == Party::alice) {
            send();
            receive();
        } else {
            receive();
            send();
        }
        return mine;
    }

    std::vector<std::uint64_t> choose_positions(std::uint64_t block_id, std::size_t key_size) const {
        Rng rng = make_rng(config_.params.seed, 0x5350'0000'0000ULL + block_id);
        try {
            return choose_sample(key_size, config_.params.sample_fraction, config_.params.qber_mode, rng);
        } catch (const InsufficientKey&) {
            return {};
        }
    }

    void finish_key(std::uint64_t block_id, BlockOutcome& out, const SiftedKey& key,
                    const std::vector<std::uint64_t>& positions) {
        for (auto p : positions) out.disclosed.push_back(key.pair_ids[p]);
        out.report = exchange_report(block_id, out.tally);
        if (out.report.verdict == Verdict::accept) out.key = remove_positions(key, positions);
        else out.key.block_id = block_id;
    }

    BlockOutcome alice_block(std::uint64_t block_id, const TagStream& tags) {
        using wire::MessageType;
        BlockOutcome out;
        out.tally.duration_s = ps_to_seconds(tags.duration);

        TagStream bob_view{Party::bob, tags.start, tags.duration, {}};
        detail::receive_chunked<wire::TagAnnounce>(
            link_, MessageType::tag_announce, block_id, wire::decode_tag_announce, [&](const wire::TagAnnounce& m) {
                for (const auto& t : m.tags) {
                    if (!bob_view.tags.empty() && t.time < bob_view.tags.back().time)
                        throw ProtocolViolation("announced tags not in time order");
                    bob_view.tags.push_back({t.time, t.basis});
                }
            });

        std::vector<CoincidencePair> pairs;
        try {
            const auto delay = estimate_delay(tags, bob_view, config_.params.delay);
            pairs = match_coincidences(tags, bob_view, config_.params.window, delay);
        } catch (const InsufficientData&) {
        } catch (const NoCorrelation&) {
        }
        bob_view = {};
        out.coincidences = pairs.size();

        std::vector<PairRole> roles(pairs.size(), PairRole::discard);
        std::vector<wire::RevealEntry> reveal(pairs.size());
        SiftedKey key;
        key.block_id = block_id;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            SettingLabel la{};
            int oa = 0;
            const bool known = config_.settings.lookup(Party::alice, pairs[p].alice.channel, la, oa);
            const auto lb = static_cast<SettingLabel>(pairs[p].bob.channel);
            roles[p] = known ? classify(la, lb) : PairRole::discard;
            reveal[p] = {pairs[p].bob_index, known ? static_cast<std::uint8_t>(la) : std::uint8_t{0xFF},
                         roles[p] == PairRole::test ? pairs[p].alice.channel : DetectorId{0}};
            if (roles[p] == PairRole::key) {
                key.bits.push_back(key_bit(oa));
                key.pair_ids.push_back(pair_id(block_id, p));
            }
        }
        detail::send_chunked<wire::RevealEntry, wire::BasisReveal>(
            link_, MessageType::basis_reveal, block_id, reveal.size(), 10,
            [&](wire::BasisReveal& m, std::size_t b, std::size_t e) {
                m.entries.assign(reveal.begin() + static_cast<std::ptrdiff_t>(b),
                                 reveal.begin() + static_cast<std::ptrdiff_t>(e));
            });
        reveal = {};

        auto& matrix = out.tally.test_matrix;
        matrix.window = config_.params.window;
        matrix.accumulation = tags.duration;
        std::size_t next_test = 0;
        detail::receive_chunked<wire::BasisReveal>(
            link_, MessageType::basis_reveal, block_id, wire::decode_basis_reveal, [&](const wire::BasisReveal& m) {
                for (const auto& e : m.entries) {
                    while (next_test < pairs.size() && roles[next_test] != PairRole::test) ++next_test;
                    if (next_test >= pairs.size() || e.index != next_test)
                        throw ProtocolViolation("test-pair reveal does not match the sifted pairs");
                    ++matrix.counts[{pairs[next_test].alice.channel, e.detector}];
                    ++next_test;
                }
            });
        while (next_test < pairs.size() && roles[next_test] != PairRole::test) ++next_test;
        if (next_test != pairs.size()) throw ProtocolViolation("peer revealed too few test pairs");

        out.tally.raw_bits = key.size();
        const auto positions = choose_positions(block_id, key.size());
        detail::send_chunked<std::uint64_t, wire::SampleRequest>(
            link_, MessageType::sample_request, block_id, positions.size(), 8,
            [&](wire::SampleRequest& m, std::size_t b, std::size_t e) {
                m.positions.assign(positions.begin() + static_cast<std::ptrdiff_t>(b),
                                   positions.begin() + static_cast<std::ptrdiff_t>(e));
            });
        if (!positions.empty()) {
            std::vector<std::uint8_t> peer_bits;
            detail::receive_chunked<wire::SampleReveal>(
                link_, MessageType::sample_reveal, block_id, wire::decode_sample_reveal,
                [&](const wire::SampleReveal& m) { peer_bits.insert(peer_bits.end(), m.bits.begin(), m.bits.end()); });
            const auto mine = gather_bits(key, positions);
            if (peer_bits.size() != mine.size()) throw ProtocolViolation("sample reveal has the wrong length");
            send_bits(block_id, mine);
            out.tally.sample_size = mine.size();
            out.tally.mismatches = count_mismatches(mine, peer_bits);
        }
        finish_key(block_id, out, key, positions);
        return out;
    }

    BlockOutcome bob_block(std::uint64_t block_id, const TagStream& tags) {
        using wire::MessageType;
        BlockOutcome out;
        out.tally.duration_s = ps_to_seconds(tags.duration);

        detail::send_chunked<wire::AnnouncedTag, wire::TagAnnounce>(
            link_, MessageType::tag_announce, block_id, tags.tags.size(), 9,
            [&](wire::TagAnnounce& m, std::size_t b, std::size_t e) {
                m.tags.reserve(e - b);
                for (std::size_t i = b; i < e; ++i) {
                    SettingLabel label{};
                    int outcome = 0;
                    const bool known = config_.settings.lookup(Party::bob, tags.tags[i].channel, label, outcome);
                    m.tags.push_back({tags.tags[i].time, known ? static_cast<std::uint8_t>(label) : std::uint8_t{0xFF}});
                }
            });

        SiftedKey key;
        key.block_id = block_id;
        std::vector<wire::RevealEntry> tests;
        auto& matrix = out.tally.test_matrix;
        matrix.window = config_.params.window;
        matrix.accumulation = tags.duration;
        std::uint64_t position = 0;
        detail::receive_chunked<wire::BasisReveal>(
            link_, MessageType::basis_reveal, block_id, wire::decode_basis_reveal, [&](const wire::BasisReveal& m) {
                for (const auto& e : m.entries) {
                    const std::uint64_t p = position++;
                    if (e.index >= tags.tags.size()) throw ProtocolViolation("basis reveal names an unknown tag");
                    const auto channel = tags.tags[e.index].channel;
                    SettingLabel lb{};
                    int ob = 0;
                    if (!config_.settings.lookup(Party::bob, channel, lb, ob) || e.setting > 4) continue;
                    switch (classify(static_cast<SettingLabel>(e.setting), lb)) {
                        case PairRole::key:
                            key.bits.push_back(key_bit(ob));
                            key.pair_ids.push_back(pair_id(block_id, p));
                            break;
                        case PairRole::test:
                            tests.push_back({p, static_cast<std::uint8_t>(lb), channel});
                            ++matrix.counts[{e.detector, channel}];
                            break;
                        case PairRole::discard: break;
                    }
                }
            });
        out.coincidences = position;
        detail::send_chunked<wire::RevealEntry, wire::BasisReveal>(
            link_, MessageType::basis_reveal, block_id, tests.size(), 10,
            [&](wire::BasisReveal& m, std::size_t b, std::size_t e) {
                m.entries.assign(tests.begin() + static_cast<std::ptrdiff_t>(b),
                                 tests.begin() + static_cast<std::ptrdiff_t>(e));
            });

        out.tally.raw_bits = key.size();
        std::vector<std::uint64_t> positions;
        detail::receive_chunked<wire::SampleRequest>(
            link_, MessageType::sample_request, block_id, wire::decode_sample_request,
            [&](const wire::SampleRequest& m) {
                positions.insert(positions.end(), m.positions.begin(), m.positions.end());
            });
        detail::check_positions(positions, key.size());
        if (!positions.empty()) {
            const auto mine = gather_bits(key, positions);
            send_bits(block_id, mine);
            std::vector<std::uint8_t> peer_bits;
            detail::receive_chunked<wire::SampleReveal>(
                link_, MessageType::sample_reveal, block_id, wire::decode_sample_reveal,
                [&](const wire::SampleReveal& m) { peer_bits.insert(peer_bits.end(), m.bits.begin(), m.bits.end()); });
            if (peer_bits.size() != mine.size()) throw ProtocolViolation("sample reveal has the wrong length");
            out.tally.sample_size = mine.size();
            out.tally.mismatches = count_mismatches(mine, peer_bits);
        }
        finish_key(block_id, out, key, positions);
        return out;
    }

    void send_bits(std::uint64_t block_id, const std::vector<std::uint8_t>& bits) {
        detail::send_chunked<std::uint8_t, wire::SampleReveal>(
            link_, wire::MessageType::sample_reveal, block_id, bits.size(), 1,
            [&](wire::SampleReveal& m, std::size_t b, std::size_t e) {
                m.bits.assign(bits.begin() + static_cast<std::ptrdiff_t>(b),
                              bits.begin() + static_cast<std::ptrdiff_t>(e));
            });
    }

    Party role_;
    EndpointConfig config_;
    MessageLink link_;
    BlockTally total_;
};

// ---- session driver ---------------------------------------------------------

enum class TransportKind : std::uint8_t { in_process, tcp };

struct SessionOptions {
    TransportKind transport = TransportKind::in_process;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  ///< 0 picks an ephemeral port
    /// Test hook: Alice's side of the transport fails after this many bytes.
    std::optional<std::size_t> fail_alice_after_bytes;
};

struct SessionResult {
    SecurityReport report;      ///< Alice's view
    SecurityReport bob_report;  ///< Bob's view; identical unless the session failed
    SiftedKey alice_key;        ///< accepted blocks only, disclosed bits removed
    SiftedKey bob_key;
    std::vector<std::uint64_t> disclosed;  ///< pair ids of every publicly compared bit
    std::vector<std::size_t> coincidences; ///< matched pairs per completed block
    BlockTally alice_total;                ///< pooled statistics of the completed blocks
};

struct BlockStreams {
    TagStream alice;
    TagStream bob;
};

/// Produces the tag streams of block k on demand so that only one block is
/// held in memory at a time.
using BlockProvider = std::function<BlockStreams(std::size_t block)>;

namespace detail {

inline std::pair<std::unique_ptr<ByteChannel>, std::unique_ptr<ByteChannel>> open_transport(
    const SessionOptions& options) {
    if (options.transport == TransportKind::in_process) return make_pipe();
    TcpListener listener(options.host, options.port);
    std::unique_ptr<ByteChannel> client;
    std::exception_ptr error;
    std::thread connector([&] {
        try {
            client = TcpChannel::connect(options.host, listener.port());
        } catch (...) {
            error = std::current_exception();
        }
    });
    std::unique_ptr<ByteChannel> server = listener.accept();
    connector.join();
    if (error) std::rethrow_exception(error);
    return {std::move(server), std::move(client)};
}

/// Runs fa and fb on two threads; returns the first failure message, if any.
template <typename FA, typename FB>
std::optional<std::string> run_pair(Endpoint& a, Endpoint& b, FA fa, FB fb) {
    std::mutex m;
    std::optional<std::string> failure;
    auto wrap = [&](Endpoint& self, auto& body) {
        try {
            body();
        } catch (const std::exception& e) {
            self.close();
            std::lock_guard lock(m);
            if (!failure) failure = std::string(to_string(self.role())) + ": " + e.what();
        }
    };
    std::thread tb([&] { wrap(b, fb); });
    wrap(a, fa);
    tb.join();
    return failure;
}

inline void append_key(SiftedKey& into, const SiftedKey& part) {
    into.bits.insert(into.bits.end(), part.bits.begin(), part.bits.end());
    into.pair_ids.insert(into.pair_ids.end(), part.pair_ids.begin(), part.pair_ids.end());
}

}  // namespace detail

/// Runs the protocol over `blocks` blocks with the two endpoints on separate
/// threads. A transport or protocol failure ends the session early with a
/// partial report whose aggregate verdict is abort.
inline SessionResult run_session(const EndpointConfig& alice_config, const EndpointConfig& bob_config,
                                 std::size_t blocks, const BlockProvider& provider,
                                 const SessionOptions& options = {}) {
    auto [alice_channel, bob_channel] = detail::open_transport(options);
    if (options.fail_alice_after_bytes)
        alice_channel = std::make_unique<FailingChannel>(std::move(alice_channel), *options.fail_alice_after_bytes);
    Endpoint alice(Party::alice, alice_config, *alice_channel);
    Endpoint bob(Party::bob, bob_config, *bob_channel);

    SessionResult result;
    BlockTally done_a, done_b;
    auto fail = [&](const std::string& why) {
        for (auto* r : {&result.report, &result.bob_report}) {
            r->complete = false;
            r->failure = why;
        }
    };

    std::optional<std::string> failure = detail::run_pair(alice, bob, [&] { alice.handshake(); },
                                                          [&] { bob.handshake(); });
    for (std::size_t k = 0; k < blocks && !failure; ++k) {
        BlockStreams streams = provider(k);
        BlockOutcome oa, ob;
        failure = detail::run_pair(
            alice, bob, [&] { oa = alice.run_block(k, streams.alice); }, [&] { ob = bob.run_block(k, streams.bob); });
        if (failure) break;
        result.report.blocks.push_back(oa.report);
        result.bob_report.blocks.push_back(ob.report);
        detail::append_key(result.alice_key, oa.key);
        detail::append_key(result.bob_key, ob.key);
        result.disclosed.insert(result.disclosed.end(), oa.disclosed.begin(), oa.disclosed.end());
        result.coincidences.push_back(oa.coincidences);
        done_a += oa.tally;
        done_b += ob.tally;
    }
    if (!failure) {
        BlockReport ra, rb;
        failure = detail::run_pair(alice, bob, [&] { ra = alice.finish(); }, [&] { rb = bob.finish(); });
        if (!failure) {
            result.report.aggregate = ra;
            result.bob_report.aggregate = rb;
        }
    }
    result.alice_total = done_a;
    if (failure) {
        fail(*failure);
        // Partial aggregate over the blocks both sides completed; never accepted.
        auto partial = [](const BlockTally& t, const EndpointConfig& c) {
            auto row = tally_report("aggregate", t, c);
            row.verdict = Verdict::abort;
            row.secure_bps = 0.0;
            return row;
        };
        result.report.aggregate = partial(done_a, alice_config);
        result.bob_report.aggregate = partial(done_b, bob_config);
    }
    alice.close();
    bob.close();
    return result;
}

/// Splits whole-session streams into consecutive blocks of block_ps
/// (the last block may be shorter) and runs the protocol over them.
inline SessionResult run_session(const EndpointConfig& alice_config, const EndpointConfig& bob_config,
                                 const TagStream& alice_tags, const TagStream& bob_tags, Picoseconds block_ps,
                                 const SessionOptions& options = {}) {
    if (block_ps == 0) throw InvalidArgument("block length must be positive");
    if (alice_tags.start != bob_tags.start || alice_tags.duration != bob_tags.duration)
        throw InvalidArgument("tag streams must cover the same session window");
    const Picoseconds total = alice_tags.duration;
    const std::size_t blocks = total == 0 ? 0 : static_cast<std::size_t>((total + block_ps - 1) / block_ps);
    auto slice = [&](const TagStream& s, Picoseconds from, Picoseconds to) {
        TagStream out{s.party, from, to - from, {}};
        auto lo = std::lower_bound(s.tags.begin(), s.tags.end(), from,
                                   [](const TimeTag& t, Picoseconds v) { return t.time < v; });
        auto hi = std::lower_bound(lo, s.tags.end(), to, [](const TimeTag& t, Picoseconds v) { return t.time < v; });
        out.tags.assign(lo, hi);
        return out;
    };
    return run_session(
        alice_config, bob_config, blocks,
        [&](std::size_t k) {
            const Picoseconds from = alice_tags.start + k * block_ps;
            const Picoseconds to = std::min(alice_tags.start + total, from + block_ps);
            return BlockStreams{slice(alice_tags, from, to), slice(bob_tags, from, to)};
        },
        options);
}

}  // namespace e91
