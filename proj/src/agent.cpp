#include <condition_variable>
#include <mutex>
#include <optional>

#include <spdlog/spdlog.h>

#include "ibpt/ai.hpp"
#include "ibpt/server.hpp"

namespace ibpt::ai {

struct Agent::State {
    net::Runtime runtime{1};
    std::mutex mutex;
    std::condition_variable cv;
    std::shared_ptr<net::Peer> peer;
    std::optional<rules::Session> session;
    server::Lifecycle lifecycle = server::Lifecycle::Idle;
    std::uint64_t version = 0;
    bool stopping = false;
};

Agent::Agent(AgentConfig config, net::Endpoint server, net::HeartbeatConfig hb)
    : config_(std::move(config)), server_(std::move(server)), hb_(hb), state_(std::make_shared<State>()) {
    validate(config_);
}

Agent::~Agent() {
    stop();
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(state_->mutex);
        peer = std::move(state_->peer);
    }
    if (peer) peer->close();
}

void Agent::stop() {
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(state_->mutex);
        state_->stopping = true;
        peer = state_->peer;
    }
    state_->cv.notify_all();
    if (peer) peer->close();
}

AgentExit Agent::run() {
    auto st = state_;
    auto backoff = std::chrono::milliseconds(200);
    std::optional<std::uint64_t> acted_on;  // move_number of the last position we moved in

    for (;;) {
        std::shared_ptr<net::Peer> peer;
        {
            std::lock_guard lock(st->mutex);
            if (st->stopping) return AgentExit::Stopped;
            if (st->peer && st->peer->is_open()) peer = st->peer;
        }

        if (!peer) {
            try {
                auto conn = net::connect(st->runtime, server_, hb_);
                std::weak_ptr<State> weak = st;
                peer = net::Peer::create(std::move(conn), {}, [weak](const std::string&) {
                    if (auto s = weak.lock()) s->cv.notify_all();
                });
                auto hello = peer->hello({*wire::as_peer_role(config_.role), config_.name});
                if (hello.status == StatusCode::BadInvalidState) {
                    spdlog::error("{}: role {} is taken", config_.name, to_string(config_.role));
                    peer->close();
                    return AgentExit::Resigned;
                }
                if (!is_good(hello.status)) throw std::runtime_error(std::string(to_string(hello.status)));
                auto status = peer->subscribe(server::kTopicSessionInfo, [weak](std::uint64_t, const Json& p) {
                    auto s = weak.lock();
                    if (!s) return;
                    try {
                        auto lifecycle = server::parse_lifecycle(p.at("lifecycle").get<std::string>());
                        auto session = decode<rules::Session>(p.at("session"), "session");
                        std::lock_guard lock(s->mutex);
                        if (lifecycle) s->lifecycle = *lifecycle;
                        s->session = std::move(session);
                        ++s->version;
                    } catch (const std::exception& e) {
                        spdlog::warn("unreadable SessionInfo: {}", e.what());
                    }
                    s->cv.notify_all();
                });
                if (!is_good(status)) throw std::runtime_error(std::string(to_string(status)));
                std::lock_guard lock(st->mutex);
                st->peer = peer;
                backoff = std::chrono::milliseconds(200);
                spdlog::info("{}: connected as {}", config_.name, to_string(config_.role));
            } catch (const std::exception& e) {
                if (peer) peer->close();
                spdlog::warn("{}: cannot reach {}: {}", config_.name, server_.to_string(), e.what());
                std::unique_lock lock(st->mutex);
                st->cv.wait_for(lock, backoff, [&] { return st->stopping; });
                backoff = std::min(backoff * 2, std::chrono::milliseconds(5000));
                continue;
            }
        }

        rules::Session session;
        {
            std::unique_lock lock(st->mutex);
            auto my_turn = [&] {
                if (!st->session) return false;
                if (st->session->outcome || st->lifecycle == server::Lifecycle::Finished) return true;
                return st->lifecycle == server::Lifecycle::Running && st->session->state.next == config_.role &&
                       st->session->move_number != acted_on;
            };
            st->cv.wait(lock, [&] { return st->stopping || !peer->is_open() || my_turn(); });
            if (st->stopping) return AgentExit::Stopped;
            if (!peer->is_open()) continue;
            session = *st->session;
        }
        if (session.outcome) {
            spdlog::info("{}: game over ({})", config_.name, rules::to_string(*session.outcome));
            return AgentExit::GameOver;
        }

        if (config_.think_delay.count() > 0) {
            std::unique_lock lock(st->mutex);
            if (st->cv.wait_for(lock, config_.think_delay, [&] { return st->stopping; })) return AgentExit::Stopped;
        }
        const auto move = choose_move(session, config_.search_depth, config_.rng_seed + session.move_number);
        acted_on = session.move_number;
        auto r = peer->call("nextMove", encode(move));
        if (is_good(r.status)) {
            ++moves_sent_;
            continue;
        }
        if (r.status == StatusCode::BadInvalidState) {
            // Lost a race against a lifecycle change; wait for the next publication.
            ++races_;
            acted_on.reset();
            std::unique_lock lock(st->mutex);
            const auto seen = st->version;
            st->cv.wait_for(lock, std::chrono::seconds(1),
                            [&] { return st->stopping || st->version != seen || !peer->is_open(); });
            continue;
        }
        if (r.status == StatusCode::BadSessionClosed || r.status == StatusCode::BadTimeout) {
            acted_on.reset();
            continue;
        }
        spdlog::error("{}: move {} rejected with {}; resigning", config_.name, to_string(move), to_string(r.status));
        peer->close();
        return AgentExit::Resigned;
    }
}

}  // namespace ibpt::ai
