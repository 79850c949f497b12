#pragma once

// Ordered, reliable, bidirectional byte streams for the two endpoints: an
// in-process pipe pair and POSIX TCP sockets. MessageLink sits on top and
// handles framing and per-direction sequence numbers.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>

#include "e91/error.hpp"
#include "e91/protocol/wire.hpp"

namespace e91 {

class ByteChannel {
public:
    virtual ~ByteChannel() = default;
    virtual void write(std::span<const std::uint8_t> data) = 0;
    /// Fills the whole buffer or throws TransportError.
    virtual void read_exact(std::span<std::uint8_t> data) = 0;
    /// Unblocks the peer; later reads on either side fail once drained.
    virtual void close() noexcept = 0;
};

namespace detail {

class PipeBuffer {
public:
    explicit PipeBuffer(std::size_t capacity) : capacity_(capacity) {}

    void write(std::span<const std::uint8_t> data) {
        std::unique_lock lock(mutex_);
        while (!data.empty()) {
            cv_.wait(lock, [&] { return closed_ || buffer_.size() < capacity_; });
            if (closed_) throw TransportError("pipe: write on closed channel");
            const auto n = std::min(data.size(), capacity_ - buffer_.size());
            buffer_.insert(buffer_.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n));
            data = data.subspan(n);
            cv_.notify_all();
        }
    }

    void read_exact(std::span<std::uint8_t> out) {
        std::unique_lock lock(mutex_);
        while (!out.empty()) {
            cv_.wait(lock, [&] { return closed_ || !buffer_.empty(); });
            if (buffer_.empty()) throw TransportError("pipe: channel closed by peer");
            const auto n = std::min(out.size(), buffer_.size());
            std::copy_n(buffer_.begin(), n, out.begin());
            buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
            out = out.subspan(n);
            cv_.notify_all();
        }
    }

    void close() noexcept {
        std::lock_guard lock(mutex_);
        closed_ = true;
        cv_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::uint8_t> buffer_;
    bool closed_ = false;
};

class PipeEnd final : public ByteChannel {
public:
    PipeEnd(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~PipeEnd() override { close(); }

    void write(std::span<const std::uint8_t> data) override { out_->write(data); }
    void read_exact(std::span<std::uint8_t> data) override { in_->read_exact(data); }
    void close() noexcept override {
        in_->close();
        out_->close();
    }

private:
    std::shared_ptr<PipeBuffer> in_, out_;
};

}  // namespace detail

/// Two connected in-process endpoints with bounded buffering.
inline std::pair<std::unique_ptr<ByteChannel>, std::unique_ptr<ByteChannel>> make_pipe(
    std::size_t capacity = 4u << 20) {
    auto ab = std::make_shared<detail::PipeBuffer>(capacity);
    auto ba = std::make_shared<detail::PipeBuffer>(capacity);
    return {std::make_unique<detail::PipeEnd>(ba, ab), std::make_unique<detail::PipeEnd>(ab, ba)};
}

class TcpChannel final : public ByteChannel {
public:
    explicit TcpChannel(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;
    ~TcpChannel() override {
        close();
        if (fd_ >= 0) ::close(fd_);
    }

    static std::unique_ptr<TcpChannel> connect(const std::string& host, std::uint16_t port) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const auto service = std::to_string(port);
        if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
            throw TransportError("tcp: cannot resolve " + host + ": " + ::gai_strerror(rc));
        int fd = -1;
        std::string last_error = "no addresses";
        for (auto* ai = res; ai; ai = ai->ai_next) {
            fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) {
                last_error = std::strerror(errno);
                continue;
            }
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
            last_error = std::strerror(errno);
            ::close(fd);
            fd = -1;
        }
        ::freeaddrinfo(res);
        if (fd < 0) throw TransportError("tcp: connect to " + host + ":" + service + " failed: " + last_error);
        return std::make_unique<TcpChannel>(fd);
    }

    void write(std::span<const std::uint8_t> data) override {
        while (!data.empty()) {
            const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("tcp: send failed: ") + std::strerror(errno));
            }
            data = data.subspan(static_cast<std::size_t>(n));
        }
    }

    void read_exact(std::span<std::uint8_t> data) override {
        while (!data.empty()) {
            const auto n = ::recv(fd_, data.data(), data.size(), 0);
            if (n == 0) throw TransportError("tcp: connection closed by peer");
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("tcp: recv failed: ") + std::strerror(errno));
            }
            data = data.subspan(static_cast<std::size_t>(n));
        }
    }

    void close() noexcept override {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_;
};

class TcpListener {
public:
    /// Binds host:port; port 0 picks an ephemeral port (see port()).
    explicit TcpListener(const std::string& host = "127.0.0.1", std::uint16_t port = 0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw TransportError(std::string("tcp: socket failed: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd_);
            throw TransportError("tcp: bad IPv4 listen address " + host);
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 1) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            throw TransportError("tcp: cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() {
        if (fd_ >= 0) ::close(fd_);
    }

    std::uint16_t port() const noexcept { return port_; }

    std::unique_ptr<TcpChannel> accept() {
        for (;;) {
            const int fd = ::accept(fd_, nullptr, nullptr);
            if (fd >= 0) return std::make_unique<TcpChannel>(fd);
            if (errno != EINTR) throw TransportError(std::string("tcp: accept failed: ") + std::strerror(errno));
        }
    }

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Wraps a channel and fails every operation once byte_budget bytes have
/// been written through it. Used to exercise transport-failure handling.
class FailingChannel final : public ByteChannel {
public:
    FailingChannel(std::unique_ptr<ByteChannel> inner, std::size_t byte_budget)
        : inner_(std::move(inner)), budget_(byte_budget) {}

    void write(std::span<const std::uint8_t> data) override {
        if (data.size() > budget_) {
            inner_->close();
            throw TransportError("injected transport failure");
        }
        budget_ -= data.size();
        inner_->write(data);
    }
    void read_exact(std::span<std::uint8_t> data) override { inner_->read_exact(data); }
    void close() noexcept override { inner_->close(); }

private:
    std::unique_ptr<ByteChannel> inner_;
    std::size_t budget_;
};

/// Framed, sequenced messages over a ByteChannel. Outgoing sequence numbers
/// start at 1; incoming ones must strictly increase.
class MessageLink {
public:
    explicit MessageLink(ByteChannel& channel) : channel_(channel) {}

    void send(wire::MessageType type, std::span<const std::uint8_t> payload) {
        const auto header = wire::encode_header(type, ++sent_, payload.size());
        channel_.write(header);
        channel_.write(payload);
        bytes_sent_ += header.size() + payload.size();
    }

    wire::Frame receive() {
        std::array<std::uint8_t, 4> prefix{};
        channel_.read_exact(prefix);
        const auto length = wire::check_length(std::span<const std::uint8_t, 4>(prefix));
        std::array<std::uint8_t, wire::kHeaderBytes> header{};
        channel_.read_exact(header);
        if (!wire::valid_type(header[0]))
            throw ProtocolViolation("wire: unknown message type " + std::to_string(header[0]));
        wire::Frame f;
        f.type = static_cast<wire::MessageType>(header[0]);
        for (std::size_t k = 1; k < header.size(); ++k) f.sequence = (f.sequence << 8) | header[k];
        if (f.sequence <= received_) throw ProtocolViolation("wire: sequence number did not increase");
        received_ = f.sequence;
        f.payload.resize(length - wire::kHeaderBytes);
        channel_.read_exact(f.payload);
        if (f.type == wire::MessageType::abort)
            throw ProtocolViolation("peer aborted: " + wire::decode_abort(f.payload).reason);
        return f;
    }

    /// Receives the next frame and insists on its type.
    wire::Frame expect(wire::MessageType type) {
        auto f = receive();
        if (f.type != type)
            throw ProtocolViolation(std::string("wire: expected ") + wire::to_string(type) + ", got " +
                                    wire::to_string(f.type));
        return f;
    }

    /// Best effort; the link is being torn down anyway.
    void send_abort(const std::string& reason) noexcept {
        try {
            send(wire::MessageType::abort, wire::encode(wire::Abort{reason}));
        } catch (...) {
        }
    }

    void close() noexcept { channel_.close(); }
    std::uint64_t bytes_sent() const noexcept { return bytes_sent_; }

private:
    ByteChannel& channel_;
    std::uint64_t sent_ = 0;
    std::uint64_t received_ = 0;
    std::uint64_t bytes_sent_ = 0;
};

}  // namespace e91
