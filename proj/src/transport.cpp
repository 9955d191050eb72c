#include "ibpt/transport.hpp"

#include <atomic>
#include <charconv>
#include <deque>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace ibpt::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::string Endpoint::to_string() const {
    return std::string(transport == Transport::Tcp ? "tcp://" : "ws://") + host + ":" + std::to_string(port);
}

std::optional<Endpoint> parse_endpoint(std::string_view text) {
    Endpoint ep;
    if (text.starts_with("tcp://")) {
        text.remove_prefix(6);
    } else if (text.starts_with("ws://")) {
        ep.transport = Transport::WebSocket;
        text.remove_prefix(5);
        if (text.ends_with("/")) text.remove_suffix(1);
    } else if (text.find("://") != std::string_view::npos) {
        return std::nullopt;
    }
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto host = text.substr(0, colon);
    auto port = text.substr(colon + 1);
    if (host.starts_with('[') && host.ends_with(']')) host = host.substr(1, host.size() - 2);
    if (host.empty() || port.empty()) return std::nullopt;
    unsigned value = 0;
    auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc() || end != port.data() + port.size() || value > 65535) return std::nullopt;
    ep.host = std::string(host);
    ep.port = static_cast<std::uint16_t>(value);
    return ep;
}

struct Runtime::Impl {
    asio::io_context io;
    asio::executor_work_guard<asio::io_context::executor_type> guard{io.get_executor()};
    std::vector<std::thread> threads;
    std::atomic<bool> stopped{false};
};

Runtime::Runtime(int threads) : impl_(std::make_unique<Impl>()) {
    for (int i = 0; i < std::max(1, threads); ++i) impl_->threads.emplace_back([this] { impl_->io.run(); });
}

Runtime::~Runtime() { stop(); }

void Runtime::stop() {
    if (impl_->stopped.exchange(true)) return;
    impl_->guard.reset();
    impl_->io.stop();
    for (auto& t : impl_->threads) {
        if (t.get_id() == std::this_thread::get_id()) {
            t.detach();
        } else if (t.joinable()) {
            t.join();
        }
    }
}

namespace {

class ConnectionBase : public Connection {
public:
    ConnectionBase(asio::any_io_executor strand, HeartbeatConfig hb)
        : strand_(std::move(strand)), timer_(strand_), hb_(hb) {}

    void start(MessageHandler on_message, CloseHandler on_close) override {
        asio::post(strand_, [self = base_shared(), on_message = std::move(on_message),
                             on_close = std::move(on_close)]() mutable {
            self->on_message_ = std::move(on_message);
            self->on_close_ = std::move(on_close);
            if (!self->open_) {
                self->notify_close();
                return;
            }
            self->do_read();
            self->schedule_heartbeat();
        });
    }

    void send(wire::WireMessage m) override {
        if (!open_) return;
        auto bytes = encode_out(m);
        asio::post(strand_, [self = base_shared(), bytes = std::move(bytes)]() mutable {
            if (!self->open_) return;
            self->queue_.push_back(std::move(bytes));
            if (!self->writing_) self->write_next();
        });
    }

    void close() override {
        asio::post(strand_, [self = base_shared()] { self->fail("closed locally"); });
    }

    bool is_open() const override { return open_; }

protected:
    std::shared_ptr<ConnectionBase> base_shared() {
        return std::static_pointer_cast<ConnectionBase>(shared_from_this());
    }

    virtual std::string encode_out(const wire::WireMessage& m) = 0;
    virtual void do_read() = 0;
    virtual void do_write(const std::string& bytes) = 0;
    virtual void shutdown_stream() = 0;

    void write_next() {
        if (queue_.empty() || !open_) {
            writing_ = false;
            return;
        }
        writing_ = true;
        do_write(queue_.front());
    }

    void on_written(const beast::error_code& ec) {
        if (ec) {
            fail("write failed: " + ec.message());
            return;
        }
        queue_.pop_front();
        write_next();
    }

    void deliver_body(std::string_view body) {
        wire::WireMessage m;
        try {
            m = wire::from_body(body);
        } catch (const wire::ProtocolError& e) {
            fail(std::string("protocol violation: ") + e.what());
            return;
        }
        if (m.kind == wire::Kind::Ping) {
            wire::WireMessage pong;
            pong.kind = wire::Kind::Pong;
            pong.id = m.id;
            send(std::move(pong));
        } else if (m.kind == wire::Kind::Pong) {
            missed_ = 0;
        } else if (on_message_) {
            on_message_(std::move(m));
        }
    }

    void fail(const std::string& reason) {
        if (!open_.exchange(false)) return;
        close_reason_ = reason;
        timer_.cancel();
        shutdown_stream();
        notify_close();
    }

    void notify_close() {
        if (!on_close_ || close_notified_) return;
        close_notified_ = true;
        auto handler = std::move(on_close_);
        on_message_ = nullptr;
        handler(close_reason_);
    }

    void schedule_heartbeat() {
        if (hb_.interval.count() <= 0) return;
        timer_.expires_after(hb_.interval);
        timer_.async_wait([self = base_shared()](const beast::error_code& ec) {
            if (ec || !self->open_) return;
            if (self->missed_ >= self->hb_.max_missed) {
                self->fail("heartbeat timeout");
                return;
            }
            ++self->missed_;
            wire::WireMessage ping;
            ping.kind = wire::Kind::Ping;
            ping.id = ++self->ping_id_;
            self->send(std::move(ping));
            self->schedule_heartbeat();
        });
    }

    asio::any_io_executor strand_;
    asio::steady_timer timer_;
    HeartbeatConfig hb_;
    std::deque<std::string> queue_;
    bool writing_ = false;
    std::atomic<bool> open_{true};
    bool close_notified_ = false;
    std::string close_reason_ = "closed";
    int missed_ = 0;
    std::uint64_t ping_id_ = 0;
    MessageHandler on_message_;
    CloseHandler on_close_;
};

class TcpConnection final : public ConnectionBase {
public:
    TcpConnection(tcp::socket socket, HeartbeatConfig hb)
        : ConnectionBase(socket.get_executor(), hb), socket_(std::move(socket)) {
        beast::error_code ec;
        socket_.set_option(tcp::no_delay(true), ec);
        auto ep = socket_.remote_endpoint(ec);
        if (!ec) remote_ = ep.address().to_string() + ":" + std::to_string(ep.port());
    }

    Transport transport() const override { return Transport::Tcp; }
    std::string remote() const override { return remote_; }

private:
    std::string encode_out(const wire::WireMessage& m) override {
        auto bytes = wire::frame(m);
        return {bytes.begin(), bytes.end()};
    }

    void do_read() override {
        asio::async_read(socket_, asio::buffer(header_),
                         [self = shared()](const beast::error_code& ec, std::size_t) {
                             if (ec) {
                                 self->fail(ec == asio::error::eof ? "peer closed" : "read failed: " + ec.message());
                                 return;
                             }
                             auto n = wire::read_length_prefix(self->header_);
                             if (n > wire::kMaxFrameBody) {
                                 self->fail("protocol violation: frame too large");
                                 return;
                             }
                             self->body_.resize(n);
                             self->read_body();
                         });
    }

    void read_body() {
        asio::async_read(socket_, asio::buffer(body_), [self = shared()](const beast::error_code& ec, std::size_t) {
            if (ec) {
                self->fail("read failed: " + ec.message());
                return;
            }
            self->deliver_body(self->body_);
            if (self->open_) self->do_read();
        });
    }

    void do_write(const std::string& bytes) override {
        asio::async_write(socket_, asio::buffer(bytes),
                          [self = shared()](const beast::error_code& ec, std::size_t) { self->on_written(ec); });
    }

    void shutdown_stream() override {
        beast::error_code ec;
        socket_.shutdown(tcp::socket::shutdown_both, ec);
        socket_.close(ec);
    }

    std::shared_ptr<TcpConnection> shared() { return std::static_pointer_cast<TcpConnection>(shared_from_this()); }

    tcp::socket socket_;
    std::array<std::uint8_t, 4> header_{};
    std::string body_;
    std::string remote_;
};

class WsConnection final : public ConnectionBase {
public:
    WsConnection(tcp::socket socket, HeartbeatConfig hb)
        : ConnectionBase(socket.get_executor(), hb), ws_(std::move(socket)) {
        beast::error_code ec;
        auto ep = ws_.next_layer().remote_endpoint(ec);
        if (!ec) remote_ = ep.address().to_string() + ":" + std::to_string(ep.port());
        ws_.next_layer().set_option(tcp::no_delay(true), ec);
        ws_.text(true);
        ws_.read_message_max(wire::kMaxFrameBody);
    }

    // Server side: completes the upgrade before handing the connection out.
    void accept(std::function<void(std::shared_ptr<Connection>)> done) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared(), done = std::move(done)](const beast::error_code& ec) {
            if (ec) return;
            done(self);
        });
    }

    // Client side.
    void handshake(const std::string& host) {
        ws_.handshake(host, "/");
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::client));
    }

    Transport transport() const override { return Transport::WebSocket; }
    std::string remote() const override { return remote_; }

private:
    std::string encode_out(const wire::WireMessage& m) override {
        auto body = wire::to_body(m);
        if (body.size() > wire::kMaxFrameBody) throw wire::ProtocolError("frame too large");
        return body;
    }

    void do_read() override {
        ws_.async_read(buffer_, [self = shared()](const beast::error_code& ec, std::size_t) {
            if (ec) {
                if (ec == websocket::error::message_too_big) {
                    self->fail("protocol violation: frame too large");
                } else {
                    self->fail(ec == websocket::error::closed ? "peer closed" : "read failed: " + ec.message());
                }
                return;
            }
            auto body = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->deliver_body(body);
            if (self->open_) self->do_read();
        });
    }

    void do_write(const std::string& bytes) override {
        ws_.async_write(asio::buffer(bytes),
                        [self = shared()](const beast::error_code& ec, std::size_t) { self->on_written(ec); });
    }

    void shutdown_stream() override {
        beast::error_code ec;
        ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_.next_layer().close(ec);
    }

    std::shared_ptr<WsConnection> shared() { return std::static_pointer_cast<WsConnection>(shared_from_this()); }

    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    std::string remote_;
};

tcp::endpoint resolve_one(asio::io_context& io, const Endpoint& ep, bool passive) {
    tcp::resolver resolver(io);
    beast::error_code ec;
    auto flags = passive ? tcp::resolver::passive : tcp::resolver::flags{};
    auto results = resolver.resolve(ep.host, std::to_string(ep.port), flags, ec);
    if (ec || results.empty()) throw std::runtime_error("cannot resolve " + ep.host + ": " + ec.message());
    return results.begin()->endpoint();
}

}  // namespace

std::shared_ptr<Connection> connect(Runtime& rt, const Endpoint& ep, HeartbeatConfig hb) {
    auto& io = rt.impl().io;
    tcp::socket socket(asio::make_strand(io));
    tcp::resolver resolver(io);
    beast::error_code ec;
    auto results = resolver.resolve(ep.host, std::to_string(ep.port), ec);
    if (ec) throw std::runtime_error("cannot resolve " + ep.host + ": " + ec.message());
    asio::connect(socket, results, ec);
    if (ec) throw std::runtime_error("cannot connect to " + ep.to_string() + ": " + ec.message());
    if (ep.transport == Transport::Tcp) return std::make_shared<TcpConnection>(std::move(socket), hb);
    auto conn = std::make_shared<WsConnection>(std::move(socket), hb);
    try {
        conn->handshake(ep.host + ":" + std::to_string(ep.port));
    } catch (const std::exception& e) {
        throw std::runtime_error("websocket handshake with " + ep.to_string() + " failed: " + e.what());
    }
    return conn;
}

struct Listener::Impl : std::enable_shared_from_this<Listener::Impl> {
    Impl(asio::io_context& io, Transport t, AcceptHandler h, HeartbeatConfig hb)
        : io(io), acceptor(asio::make_strand(io)), transport(t), on_accept(std::move(h)), hb(hb) {}

    void do_accept() {
        acceptor.async_accept(asio::make_strand(io), [self = shared_from_this()](const beast::error_code& ec,
                                                                                 tcp::socket socket) {
            if (ec == asio::error::operation_aborted || self->closed) return;
            if (!ec) {
                if (self->transport == Transport::Tcp) {
                    self->on_accept(std::make_shared<TcpConnection>(std::move(socket), self->hb));
                } else {
                    auto conn = std::make_shared<WsConnection>(std::move(socket), self->hb);
                    conn->accept([self](std::shared_ptr<Connection> c) {
                        if (!self->closed) self->on_accept(std::move(c));
                    });
                }
            }
            self->do_accept();
        });
    }

    asio::io_context& io;
    tcp::acceptor acceptor;
    Transport transport;
    AcceptHandler on_accept;
    HeartbeatConfig hb;
    std::uint16_t port = 0;
    std::atomic<bool> closed{false};
};

Listener::Listener(Runtime& rt, Endpoint where, AcceptHandler on_accept, HeartbeatConfig hb)
    : impl_(std::make_shared<Impl>(rt.impl().io, where.transport, std::move(on_accept), hb)) {
    auto endpoint = resolve_one(rt.impl().io, where, true);
    beast::error_code ec;
    auto& a = impl_->acceptor;
    a.open(endpoint.protocol(), ec);
    if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) a.bind(endpoint, ec);
    if (!ec) a.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw std::runtime_error("cannot listen on " + where.to_string() + ": " + ec.message());
    impl_->port = a.local_endpoint().port();
    asio::post(a.get_executor(), [impl = impl_] { impl->do_accept(); });
}

Listener::~Listener() { close(); }

std::uint16_t Listener::port() const noexcept { return impl_->port; }

Transport Listener::transport() const noexcept { return impl_->transport; }

void Listener::close() {
    if (impl_->closed.exchange(true)) return;
    asio::post(impl_->acceptor.get_executor(), [impl = impl_] {
        beast::error_code ec;
        impl->acceptor.close(ec);
    });
}

}  // namespace ibpt::net
