#pragma once

// In-process fixtures shared by the integration tests and the acceptance run.

#include <chrono>
#include <future>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ibpt/broker.hpp"
#include "ibpt/cell.hpp"
#include "ibpt/peer.hpp"
#include "ibpt/server.hpp"

namespace support {

using namespace std::chrono_literals;
using ibpt::Json;
using ibpt::StatusCode;
namespace net = ibpt::net;
namespace wire = ibpt::wire;

template <typename Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = 5s) {
    const auto deadline = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(5ms);
    }
    return pred();
}

// Protocol-level server: "echo", "sleep" {ms}, "fail", "close"; topics "T" and "U".
class EchoServer {
public:
    explicit EchoServer(net::HeartbeatConfig hb = {}) {
        topics.declare("T");
        topics.declare("U");
        auto accept = [this](std::shared_ptr<net::Connection> c) { on_accept(std::move(c)); };
        tcp_ = std::make_unique<net::Listener>(rt_, net::Endpoint{net::Transport::Tcp, "127.0.0.1", 0}, accept, hb);
        ws_ = std::make_unique<net::Listener>(rt_, net::Endpoint{net::Transport::WebSocket, "127.0.0.1", 0}, accept,
                                              hb);
    }

    ~EchoServer() {
        tcp_->close();
        ws_->close();
        std::vector<std::shared_ptr<net::Peer>> peers;
        {
            std::lock_guard lock(mutex_);
            peers.swap(peers_);
        }
        for (auto& p : peers) p->close();
        peers.clear();
    }

    net::Endpoint endpoint(net::Transport t) const {
        return {t, "127.0.0.1", t == net::Transport::Tcp ? tcp_->port() : ws_->port()};
    }

    std::size_t connections() const {
        std::lock_guard lock(mutex_);
        return peers_.size();
    }

    net::TopicRegistry topics;

private:
    void on_accept(std::shared_ptr<net::Connection> conn) {
        auto self = std::make_shared<std::promise<std::weak_ptr<net::Peer>>>();
        auto future = self->get_future().share();
        auto peer = net::Peer::create(std::move(conn), [this, future](const wire::WireMessage& m) -> net::RpcResult {
            auto me = future.get().lock();
            switch (m.kind) {
                case wire::Kind::Hello:
                    return {StatusCode::Good, Json::object()};
                case wire::Kind::Subscribe:
                    return {topics.subscribe(m.topic, me), Json::object()};
                default:
                    break;
            }
            if (m.method == "echo") return {StatusCode::Good, m.payload};
            if (m.method == "sleep") {
                std::this_thread::sleep_for(std::chrono::milliseconds(m.payload.value("ms", 0)));
                return {StatusCode::Good, m.payload};
            }
            if (m.method == "fail") throw std::runtime_error("requested failure");
            if (m.method == "close") {
                if (me) me->close();
                return {StatusCode::Good, Json::object()};
            }
            return {StatusCode::BadNotFound, Json::object()};
        });
        self->set_value(peer);
        std::lock_guard lock(mutex_);
        peers_.push_back(std::move(peer));
    }

    net::Runtime rt_{2};
    std::unique_ptr<net::Listener> tcp_;
    std::unique_ptr<net::Listener> ws_;
    mutable std::mutex mutex_;
    std::vector<std::shared_ptr<net::Peer>> peers_;
};

// A protocol client with its own event loop.
class Client {
public:
    Client(const net::Endpoint& ep, net::HeartbeatConfig hb = {}) : peer_(net::Peer::create(net::connect(rt_, ep, hb))) {}
    ~Client() {
        if (peer_) peer_->close();
        peer_.reset();
    }

    net::RpcResult hello(wire::PeerRole role, std::string name = "test") { return peer_->hello({role, std::move(name)}); }
    net::RpcResult call(const std::string& method, Json payload = Json::object(),
                        std::chrono::milliseconds timeout = net::kDefaultCallTimeout) {
        return peer_->call(method, std::move(payload), timeout);
    }
    net::Peer& peer() { return *peer_; }

private:
    net::Runtime rt_{1};
    std::shared_ptr<net::Peer> peer_;
};

// Collects publications of one topic.
struct Recorder {
    mutable std::mutex mutex;
    std::vector<std::pair<std::uint64_t, Json>> items;

    net::Peer::PublishHandler handler() {
        return [this](std::uint64_t seq, const Json& payload) {
            std::lock_guard lock(mutex);
            items.emplace_back(seq, payload);
        };
    }
    std::size_t size() const {
        std::lock_guard lock(mutex);
        return items.size();
    }
    std::vector<std::pair<std::uint64_t, Json>> snapshot() const {
        std::lock_guard lock(mutex);
        return items;
    }
    std::optional<Json> last() const {
        std::lock_guard lock(mutex);
        if (items.empty()) return std::nullopt;
        return items.back().second;
    }
};

inline ibpt::cell::CellConfig fast_cell(std::string name, double pitch = 40.0) {
    auto c = ibpt::cell::make_config(std::move(name), "articulated", {100.0, 0.0, 10.0}, pitch);
    return c;
}

// Game server with in-process simulated cells.
class Rig {
public:
    explicit Rig(ibpt::server::ServerConfig cfg = {}) : server_(prepare(std::move(cfg))) { server_.start(); }

    ~Rig() {
        for (auto& c : cells_) c->stop();
        for (auto& t : threads_) t.join();
        server_.stop();
    }

    ibpt::server::GameServer& server() { return server_; }

    net::Endpoint tcp() const { return {net::Transport::Tcp, "127.0.0.1", server_.tcp_port()}; }
    net::Endpoint ws() const { return {net::Transport::WebSocket, "127.0.0.1", server_.ws_port()}; }

    ibpt::cell::CellClient& add_cell(ibpt::cell::CellConfig cfg, std::uint64_t seed = 1) {
        auto name = cfg.name;
        cells_.push_back(std::make_unique<ibpt::cell::CellClient>(std::move(cfg), tcp(), seed));
        auto& cell = *cells_.back();
        if (!ibpt::is_good(cell.connect())) throw std::runtime_error("cell " + name + " failed to register");
        threads_.emplace_back([&cell] { cell.run(); });
        if (!eventually([&] { return unit_health(name).has_value(); }))
            throw std::runtime_error("cell " + name + " never appeared");
        return cell;
    }

    std::optional<ibpt::server::UnitHealth> unit_health(const std::string& name) {
        for (const auto& u : server_.units())
            if (u.name == name) return u.health;
        return std::nullopt;
    }

private:
    static ibpt::server::ServerConfig prepare(ibpt::server::ServerConfig cfg) {
        if (!cfg.listen_tcp) cfg.listen_tcp = net::Endpoint{net::Transport::Tcp, "127.0.0.1", 0};
        if (!cfg.listen_ws) cfg.listen_ws = net::Endpoint{net::Transport::WebSocket, "127.0.0.1", 0};
        return cfg;
    }

    ibpt::server::GameServer server_;
    std::vector<std::unique_ptr<ibpt::cell::CellClient>> cells_;
    std::vector<std::thread> threads_;
};

}  // namespace support
