#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "ibpt/protocol.hpp"
#include "ibpt/transport.hpp"

namespace ibpt::net {

inline constexpr std::chrono::milliseconds kDefaultCallTimeout{5000};

struct RpcResult {
    StatusCode status = StatusCode::Good;
    Json payload = Json::object();
};

/// Correlated request/response and topic subscriptions over one connection.
///
/// Incoming hello, subscribe and rpc_request messages are handed to the
/// request handler on a dedicated worker thread, one at a time and in arrival
/// order; its result is sent back as the rpc_response. Publications are
/// dispatched to subscription callbacks on the connection's I/O thread, so
/// callbacks must not block.
class Peer : public std::enable_shared_from_this<Peer> {
public:
    using RequestHandler = std::function<RpcResult(const wire::WireMessage&)>;
    using PublishHandler = std::function<void(std::uint64_t seq, const Json& payload)>;
    using CloseHandler = std::function<void(const std::string& reason)>;

    static std::shared_ptr<Peer> create(std::shared_ptr<Connection> conn, RequestHandler on_request = {},
                                        CloseHandler on_close = {});
    ~Peer();
    Peer(const Peer&) = delete;
    Peer& operator=(const Peer&) = delete;

    /// Blocks until the response or the deadline. BAD_TIMEOUT on deadline,
    /// BAD_SESSION_CLOSED when the connection is or becomes closed; a
    /// response arriving after the deadline is dropped.
    RpcResult call(const std::string& method, Json payload = Json::object(),
                   std::chrono::milliseconds timeout = kDefaultCallTimeout);

    RpcResult hello(const wire::PeerIdentity& identity, std::chrono::milliseconds timeout = kDefaultCallTimeout);

    /// The handler is registered before the request goes out so the retained
    /// value is never missed. Unregistered again unless the result is GOOD.
    StatusCode subscribe(const std::string& topic, PublishHandler handler,
                         std::chrono::milliseconds timeout = kDefaultCallTimeout);

    /// Sends a publish frame (server side).
    void publish(const std::string& topic, std::uint64_t seq, const Json& payload);

    void close();
    bool is_open() const;
    const Connection& connection() const { return *conn_; }

    /// Number of calls still waiting for a response.
    std::size_t in_flight() const;

private:
    Peer(std::shared_ptr<Connection> conn, RequestHandler on_request, CloseHandler on_close);

    void start();
    void on_message(wire::WireMessage m);
    void on_closed(const std::string& reason);
    RpcResult request(wire::WireMessage m, std::chrono::milliseconds timeout);
    struct WorkQueue {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<wire::WireMessage> items;
        bool stop = false;
    };
    static void worker_loop(std::shared_ptr<WorkQueue> queue, std::weak_ptr<Peer> weak);
    void handle_request(const wire::WireMessage& m);

    struct Pending {
        std::condition_variable cv;
        std::optional<RpcResult> result;
    };

    std::shared_ptr<Connection> conn_;
    RequestHandler on_request_;
    CloseHandler on_close_;

    mutable std::mutex mutex_;
    std::uint64_t next_id_ = 1;
    bool closed_ = false;
    std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
    std::map<std::string, PublishHandler> subscriptions_;

    std::shared_ptr<WorkQueue> work_ = std::make_shared<WorkQueue>();
    std::thread worker_;
};

}  // namespace ibpt::net
