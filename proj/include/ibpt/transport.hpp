#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "ibpt/protocol.hpp"

namespace ibpt::net {

enum class Transport : std::uint8_t { Tcp, WebSocket };

struct Endpoint {
    Transport transport = Transport::Tcp;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string to_string() const;
};

/// "tcp://host:port", "ws://host:port" or bare "host:port" (TCP).
std::optional<Endpoint> parse_endpoint(std::string_view text);

struct HeartbeatConfig {
    std::chrono::milliseconds interval{10'000};  // zero disables pings
    int max_missed = 2;
};

/// Event loop shared by connections and listeners.
class Runtime {
public:
    explicit Runtime(int threads = 2);
    ~Runtime();
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    void stop();

    struct Impl;
    Impl& impl() { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

/// A message-oriented duplex stream. Ping/pong is answered internally and never
/// reaches the message handler. Handlers run on the runtime's threads, one at a
/// time per connection, in arrival order.
class Connection : public std::enable_shared_from_this<Connection> {
public:
    using MessageHandler = std::function<void(wire::WireMessage)>;
    using CloseHandler = std::function<void(const std::string& reason)>;

    virtual ~Connection() = default;

    /// Begins reading. The close handler fires exactly once.
    virtual void start(MessageHandler on_message, CloseHandler on_close) = 0;
    /// Thread-safe; frames are never interleaved. Dropped silently once closed.
    virtual void send(wire::WireMessage m) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
    virtual Transport transport() const = 0;
    virtual std::string remote() const = 0;
};

/// Connects synchronously. Throws std::runtime_error on failure.
std::shared_ptr<Connection> connect(Runtime& rt, const Endpoint& ep, HeartbeatConfig hb = {});

class Listener {
public:
    using AcceptHandler = std::function<void(std::shared_ptr<Connection>)>;

    /// Binds immediately; port 0 picks a free port. Throws std::runtime_error on bind failure.
    Listener(Runtime& rt, Endpoint where, AcceptHandler on_accept, HeartbeatConfig hb = {});
    ~Listener();
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    std::uint16_t port() const noexcept;
    Transport transport() const noexcept;
    void close();

    struct Impl;

private:
    std::shared_ptr<Impl> impl_;
};

}  // namespace ibpt::net
