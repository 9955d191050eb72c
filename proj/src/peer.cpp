#include "ibpt/peer.hpp"

namespace ibpt::net {

std::shared_ptr<Peer> Peer::create(std::shared_ptr<Connection> conn, RequestHandler on_request,
                                   CloseHandler on_close) {
    std::shared_ptr<Peer> p(new Peer(std::move(conn), std::move(on_request), std::move(on_close)));
    p->start();
    return p;
}

Peer::Peer(std::shared_ptr<Connection> conn, RequestHandler on_request, CloseHandler on_close)
    : conn_(std::move(conn)), on_request_(std::move(on_request)), on_close_(std::move(on_close)) {}

Peer::~Peer() {
    {
        std::lock_guard lock(work_->mutex);
        work_->stop = true;
    }
    work_->cv.notify_all();
    if (worker_.joinable()) {
        if (worker_.get_id() == std::this_thread::get_id()) {
            worker_.detach();
        } else {
            worker_.join();
        }
    }
    conn_->close();
}

void Peer::start() {
    std::weak_ptr<Peer> weak = weak_from_this();
    if (on_request_) worker_ = std::thread(&Peer::worker_loop, work_, weak);
    conn_->start(
        [weak](wire::WireMessage m) {
            if (auto self = weak.lock()) self->on_message(std::move(m));
        },
        [weak](const std::string& reason) {
            if (auto self = weak.lock()) self->on_closed(reason);
        });
}

void Peer::on_message(wire::WireMessage m) {
    switch (m.kind) {
        case wire::Kind::RpcResponse: {
            std::shared_ptr<Pending> p;
            {
                std::lock_guard lock(mutex_);
                auto it = pending_.find(m.id);
                if (it == pending_.end()) return;  // late or unsolicited
                p = it->second;
                pending_.erase(it);
                p->result = RpcResult{m.status, std::move(m.payload)};
            }
            p->cv.notify_all();
            return;
        }
        case wire::Kind::Publish: {
            PublishHandler handler;
            {
                std::lock_guard lock(mutex_);
                auto it = subscriptions_.find(m.topic);
                if (it == subscriptions_.end()) return;
                handler = it->second;
            }
            handler(m.seq, m.payload);
            return;
        }
        case wire::Kind::Hello:
        case wire::Kind::RpcRequest:
        case wire::Kind::Subscribe: {
            if (!on_request_) {
                wire::WireMessage reply;
                reply.kind = wire::Kind::RpcResponse;
                reply.id = m.id;
                reply.status = StatusCode::BadNotFound;
                conn_->send(std::move(reply));
                return;
            }
            {
                std::lock_guard lock(work_->mutex);
                work_->items.push_back(std::move(m));
            }
            work_->cv.notify_one();
            return;
        }
        case wire::Kind::Ping:
        case wire::Kind::Pong:
            return;
    }
}

// Holds the peer only while a request is being handled, so the last
// reference may be dropped here; the queue outlives the peer.
void Peer::worker_loop(std::shared_ptr<WorkQueue> queue, std::weak_ptr<Peer> weak) {
    for (;;) {
        wire::WireMessage m;
        {
            std::unique_lock lock(queue->mutex);
            queue->cv.wait(lock, [&] { return queue->stop || !queue->items.empty(); });
            if (queue->stop) return;
            m = std::move(queue->items.front());
            queue->items.pop_front();
        }
        auto self = weak.lock();
        if (!self) return;
        self->handle_request(m);
    }
}

void Peer::handle_request(const wire::WireMessage& m) {
    RpcResult r;
    try {
        r = on_request_(m);
    } catch (const std::exception&) {
        r = {StatusCode::BadInternal, Json::object()};
    }
    wire::WireMessage reply;
    reply.kind = wire::Kind::RpcResponse;
    reply.id = m.id;
    reply.status = r.status;
    reply.payload = std::move(r.payload);
    conn_->send(std::move(reply));
}

void Peer::on_closed(const std::string& reason) {
    std::map<std::uint64_t, std::shared_ptr<Pending>> failed;
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
        failed.swap(pending_);
        for (auto& [_, p] : failed) p->result = RpcResult{StatusCode::BadSessionClosed, Json::object()};
    }
    for (auto& [_, p] : failed) p->cv.notify_all();
    if (on_close_) on_close_(reason);
}

RpcResult Peer::request(wire::WireMessage m, std::chrono::milliseconds timeout) {
    auto p = std::make_shared<Pending>();
    std::unique_lock lock(mutex_);
    if (closed_ || !conn_->is_open()) return {StatusCode::BadSessionClosed, Json::object()};
    m.id = next_id_++;
    const auto id = m.id;
    pending_.emplace(id, p);
    lock.unlock();
    try {
        conn_->send(std::move(m));
    } catch (const std::exception&) {
        lock.lock();
        pending_.erase(id);
        return {StatusCode::BadInvalidArgument, Json::object()};
    }
    lock.lock();
    if (!p->cv.wait_for(lock, timeout, [&] { return p->result.has_value(); })) {
        // The response may still be in flight; removing the entry under the
        // lock makes the later arrival a no-op.
        pending_.erase(id);
        return {StatusCode::BadTimeout, Json::object()};
    }
    return std::move(*p->result);
}

RpcResult Peer::call(const std::string& method, Json payload, std::chrono::milliseconds timeout) {
    wire::WireMessage m;
    m.kind = wire::Kind::RpcRequest;
    m.method = method;
    m.payload = std::move(payload);
    return request(std::move(m), timeout);
}

RpcResult Peer::hello(const wire::PeerIdentity& identity, std::chrono::milliseconds timeout) {
    wire::WireMessage m;
    m.kind = wire::Kind::Hello;
    m.payload = wire::encode(identity);
    return request(std::move(m), timeout);
}

StatusCode Peer::subscribe(const std::string& topic, PublishHandler handler, std::chrono::milliseconds timeout) {
    {
        std::lock_guard lock(mutex_);
        subscriptions_[topic] = std::move(handler);
    }
    wire::WireMessage m;
    m.kind = wire::Kind::Subscribe;
    m.topic = topic;
    auto r = request(std::move(m), timeout);
    if (!is_good(r.status)) {
        std::lock_guard lock(mutex_);
        subscriptions_.erase(topic);
    }
    return r.status;
}

void Peer::publish(const std::string& topic, std::uint64_t seq, const Json& payload) {
    wire::WireMessage m;
    m.kind = wire::Kind::Publish;
    m.topic = topic;
    m.seq = seq;
    m.payload = payload;
    conn_->send(std::move(m));
}

void Peer::close() { conn_->close(); }

bool Peer::is_open() const {
    std::lock_guard lock(mutex_);
    return !closed_ && conn_->is_open();
}

std::size_t Peer::in_flight() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
}

}  // namespace ibpt::net
