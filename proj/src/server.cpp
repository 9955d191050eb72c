#include "ibpt/server.hpp"

#include <deque>
#include <fstream>
#include <future>
#include <thread>

#include <spdlog/spdlog.h>

#include "ibpt/cell.hpp"

namespace ibpt::server {

namespace {

constexpr std::array<std::string_view, 4> kLifecycleNames = {"Idle", "Initialized", "Running", "Finished"};
constexpr std::array<std::string_view, 4> kHealthNames = {"Ready", "Busy", "Faulted", "Disconnected"};

net::RpcResult reply(StatusCode s, Json payload = Json::object()) { return {s, std::move(payload)}; }

}  // namespace

std::string_view to_string(Lifecycle l) noexcept { return kLifecycleNames[static_cast<std::size_t>(l)]; }
std::string_view to_string(UnitHealth h) noexcept { return kHealthNames[static_cast<std::size_t>(h)]; }

std::optional<Lifecycle> parse_lifecycle(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kLifecycleNames.size(); ++i)
        if (kLifecycleNames[i] == s) return static_cast<Lifecycle>(i);
    return std::nullopt;
}

std::optional<UnitHealth> parse_unit_health(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kHealthNames.size(); ++i)
        if (kHealthNames[i] == s) return static_cast<UnitHealth>(i);
    return std::nullopt;
}

ServerConfig parse_server_config(const Json& j) {
    if (!j.is_object()) throw ConfigError("server config must be a JSON object");
    ServerConfig c;
    auto endpoint = [&](const char* key, net::Transport t) -> std::optional<net::Endpoint> {
        const auto& v = j.at(key);
        if (v.is_null()) return std::nullopt;
        auto ep = v.is_string() ? net::parse_endpoint(v.get<std::string>()) : std::nullopt;
        if (!ep) throw ConfigError(std::string(key) + ": bad address");
        const bool has_scheme = v.get<std::string>().find("://") != std::string::npos;
        if (has_scheme && ep->transport != t) throw ConfigError(std::string(key) + ": wrong scheme");
        ep->transport = t;
        return ep;
    };
    auto integer = [&](const char* key, std::int64_t lo, std::int64_t hi) {
        const auto& v = j.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < lo || v.get<std::int64_t>() > hi)
            throw ConfigError(std::string(key) + ": expected an integer in [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        return v.get<std::int64_t>();
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "listen_tcp") c.listen_tcp = endpoint("listen_tcp", net::Transport::Tcp);
        else if (key == "listen_ws") c.listen_ws = endpoint("listen_ws", net::Transport::WebSocket);
        else if (key == "vita_log") {
            if (!value.is_string()) throw ConfigError("vita_log: expected a path");
            c.vita_log_path = value.get<std::string>();
        } else if (key == "fsync") {
            if (value == "never") c.fsync = vita::FsyncPolicy::Never;
            else if (value == "every_record") c.fsync = vita::FsyncPolicy::EveryRecord;
            else throw ConfigError("fsync: expected \"never\" or \"every_record\"");
        } else if (key == "draw_threshold") c.draw_threshold = static_cast<int>(integer("draw_threshold", 1, 100000));
        else if (key == "max_retries") c.max_retries = static_cast<int>(integer("max_retries", 0, 100));
        else if (key == "execute_deadline_ms") c.execute_deadline = std::chrono::milliseconds(integer(key.c_str(), 1, 3600000));
        else if (key == "reset_deadline_ms") c.reset_deadline = std::chrono::milliseconds(integer(key.c_str(), 1, 3600000));
        else if (key == "heartbeat_interval_ms") c.heartbeat.interval = std::chrono::milliseconds(integer(key.c_str(), 0, 3600000));
        else if (key == "io_threads") c.io_threads = static_cast<int>(integer("io_threads", 1, 64));
        else throw ConfigError("unknown key " + key);
    }
    return c;
}

ServerConfig load_server_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return parse_server_config(Json::parse(in));
    } catch (const Json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

struct GameServer::Client {
    std::mutex mutex;
    std::shared_ptr<net::Peer> peer;
    std::optional<wire::PeerIdentity> identity;
};

struct GameServer::Job {
    enum class Type { Execute, Reset } type = Type::Execute;
    std::uint64_t order_id = 0;
    GameMove move;
    bool resync = false;  // replayed after a reconnect; not an order of its own
    std::shared_ptr<std::promise<StatusCode>> done;
};

struct GameServer::Unit {
    std::string name;
    std::mutex mutex;
    std::condition_variable cv;
    std::shared_ptr<net::Peer> peer;
    UnitHealth health = UnitHealth::Ready;
    GameBoard last_board;
    std::uint64_t last_order_id = 0;
    std::deque<Job> jobs;
    bool stop = false;
    std::thread worker;
};

GameServer::GameServer(ServerConfig config)
    : config_(std::move(config)), runtime_(config_.io_threads), session_(rules::new_session(config_.draw_threshold)) {
    for (auto t : {kTopicGameState, kTopicGameMove, kTopicSessionInfo, kTopicUnitHealth}) topics_.declare(t);
    if (!config_.vita_log_path.empty() && !vita_log_.open(config_.vita_log_path, config_.fsync))
        throw std::runtime_error("cannot open vita log " + config_.vita_log_path);
    std::lock_guard lock(session_mutex_);
    publish_state_locked();
}

GameServer::~GameServer() { stop(); }

void GameServer::start() {
    auto on_accept = [this](std::shared_ptr<net::Connection> c) { accept(std::move(c)); };
    if (config_.listen_tcp) {
        auto ep = *config_.listen_tcp;
        ep.transport = net::Transport::Tcp;
        tcp_listener_ = std::make_unique<net::Listener>(runtime_, ep, on_accept, config_.heartbeat);
        spdlog::info("listening on tcp://{}:{}", ep.host, tcp_listener_->port());
    }
    if (config_.listen_ws) {
        auto ep = *config_.listen_ws;
        ep.transport = net::Transport::WebSocket;
        ws_listener_ = std::make_unique<net::Listener>(runtime_, ep, on_accept, config_.heartbeat);
        spdlog::info("listening on ws://{}:{}", ep.host, ws_listener_->port());
    }
    publish_unit_health();
}

void GameServer::stop() {
    {
        std::lock_guard lock(session_mutex_);
        if (stopped_) return;
        stopped_ = true;
    }
    if (tcp_listener_) tcp_listener_->close();
    if (ws_listener_) ws_listener_->close();

    std::set<std::shared_ptr<Client>> clients;
    std::map<std::string, std::shared_ptr<Unit>> units;
    {
        std::lock_guard lock(clients_mutex_);
        clients = clients_;
        units = units_;
    }
    for (const auto& c : clients) {
        std::shared_ptr<net::Peer> peer;
        {
            std::lock_guard lock(c->mutex);
            peer = c->peer;
        }
        if (peer) peer->close();
    }
    for (const auto& [_, u] : units) {
        std::shared_ptr<net::Peer> peer;
        {
            std::lock_guard lock(u->mutex);
            u->stop = true;
            peer = u->peer;
        }
        if (peer) peer->close();
        u->cv.notify_all();
        if (u->worker.joinable()) u->worker.join();
    }
    {
        std::lock_guard lock(clients_mutex_);
        clients_.clear();
        players_.clear();
        units_.clear();
    }
    clients.clear();
    units.clear();
    tcp_listener_.reset();
    ws_listener_.reset();
    vita_log_.close();
    runtime_.stop();
}

std::uint16_t GameServer::tcp_port() const { return tcp_listener_ ? tcp_listener_->port() : 0; }
std::uint16_t GameServer::ws_port() const { return ws_listener_ ? ws_listener_->port() : 0; }

// ---------------------------------------------------------------------------
// Connections

void GameServer::accept(std::shared_ptr<net::Connection> conn) {
    auto client = std::make_shared<Client>();
    std::weak_ptr<Client> weak = client;
    {
        std::lock_guard lock(client->mutex);
        client->peer = net::Peer::create(
            std::move(conn),
            [this, weak](const wire::WireMessage& m) {
                auto c = weak.lock();
                if (!c) return reply(StatusCode::BadSessionClosed);
                return handle(c, m);
            },
            [this, weak](const std::string& reason) {
                if (auto c = weak.lock()) {
                    spdlog::debug("connection closed: {}", reason);
                    on_disconnect(c);
                }
            });
    }
    std::lock_guard lock(clients_mutex_);
    if (stopped_) {
        client->peer->close();
        return;
    }
    clients_.insert(client);
}

void GameServer::on_disconnect(const std::shared_ptr<Client>& client) {
    std::optional<wire::PeerIdentity> id;
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(client->mutex);
        id = client->identity;
        peer = client->peer;
    }
    bool unit_changed = false;
    {
        std::lock_guard lock(clients_mutex_);
        clients_.erase(client);
        if (id && id->role == wire::PeerRole::ProductionUnit) {
            if (auto it = units_.find(id->name); it != units_.end()) {
                std::lock_guard ulock(it->second->mutex);
                if (it->second->peer == peer) {
                    it->second->peer.reset();
                    it->second->health = UnitHealth::Disconnected;
                    unit_changed = true;
                }
            }
        }
    }
    if (id) spdlog::info("{} '{}' disconnected", wire::to_string(id->role), id->name);
    if (unit_changed) publish_unit_health();
}

net::RpcResult GameServer::handle(const std::shared_ptr<Client>& client, const wire::WireMessage& m) {
    switch (m.kind) {
        case wire::Kind::Hello:
            return handle_hello(client, m);
        case wire::Kind::Subscribe: {
            std::shared_ptr<net::Peer> peer;
            {
                std::lock_guard lock(client->mutex);
                if (!client->identity) return reply(StatusCode::BadInvalidState);
                peer = client->peer;
            }
            return reply(topics_.subscribe(m.topic, peer));
        }
        case wire::Kind::RpcRequest:
            return handle_rpc(client, m);
        default:
            return reply(StatusCode::BadInvalidArgument);
    }
}

net::RpcResult GameServer::handle_hello(const std::shared_ptr<Client>& client, const wire::WireMessage& m) {
    {
        std::lock_guard lock(client->mutex);
        if (client->identity) return reply(StatusCode::BadInvalidState, Json{{"error", "hello already received"}});
    }
    wire::PeerIdentity id;
    try {
        id = wire::decode_identity(m.payload);
    } catch (const DecodeError& e) {
        return reply(StatusCode::BadInvalidArgument, Json{{"error", e.what()}});
    }
    if (id.protocol_version != wire::kProtocolVersion)
        return reply(StatusCode::BadInvalidArgument, Json{{"error", "unsupported protocol version"}});

    switch (id.role) {
        case wire::PeerRole::PlayerOne:
        case wire::PeerRole::PlayerTwo: {
            auto role = *wire::as_player_role(id.role);
            std::lock_guard lock(clients_mutex_);
            if (auto holder = players_[role].lock(); holder && holder != client) {
                std::lock_guard hlock(holder->mutex);
                if (holder->peer && holder->peer->is_open())
                    return reply(StatusCode::BadInvalidState, Json{{"error", "role already taken"}});
            }
            players_[role] = client;
            break;
        }
        case wire::PeerRole::Observer:
            break;
        case wire::PeerRole::ProductionUnit: {
            if (id.name.empty()) return reply(StatusCode::BadInvalidArgument, Json{{"error", "unit name required"}});
            {
                std::lock_guard lock(client->mutex);
                client->identity = id;
            }
            auto status = register_unit(client, id.name);
            if (!is_good(status)) {
                std::lock_guard lock(client->mutex);
                client->identity.reset();
                return reply(status, Json{{"error", "unit name already registered"}});
            }
            publish_unit_health();
            break;
        }
    }
    {
        std::lock_guard lock(client->mutex);
        client->identity = id;
    }
    spdlog::info("{} '{}' registered", wire::to_string(id.role), id.name);
    return reply(StatusCode::Good, Json{{"role", std::string(wire::to_string(id.role))},
                                        {"protocol_version", wire::kProtocolVersion}});
}

net::RpcResult GameServer::handle_rpc(const std::shared_ptr<Client>& client, const wire::WireMessage& m) {
    std::optional<wire::PeerIdentity> id;
    {
        std::lock_guard lock(client->mutex);
        id = client->identity;
    }
    if (!id) return reply(StatusCode::BadInvalidState, Json{{"error", "hello required"}});

    if (m.method == "initGame") {
        std::optional<int> threshold;
        if (!m.payload.is_object()) return reply(StatusCode::BadInvalidArgument);
        for (const auto& [key, value] : m.payload.items()) {
            if (key != "draw_threshold" || !value.is_number_integer() || value.get<std::int64_t>() < 1 ||
                value.get<std::int64_t>() > 100000)
                return reply(StatusCode::BadInvalidArgument, Json{{"error", "bad initGame parameter " + key}});
            threshold = value.get<int>();
        }
        return reply(init_game(threshold));
    }
    if (m.method == "startGame") return reply(start_game());
    if (m.method == "resetGame") return reply(reset_game());
    if (m.method == "nextMove") {
        GameMove move;
        try {
            move = decode<GameMove>(m.payload, "payload");
        } catch (const DecodeError& e) {
            return reply(StatusCode::BadInvalidArgument, Json{{"error", e.what()}});
        }
        auto role = wire::as_player_role(id->role);
        if (!role) return reply(StatusCode::BadInvalidState, Json{{"error", "production units cannot play"}});
        std::uint64_t order_id = 0;
        auto status = next_move(move, *role, &order_id);
        if (!is_good(status)) return reply(status);
        return reply(status, Json{{"order_id", order_id}});
    }
    return reply(StatusCode::BadNotFound, Json{{"error", "unknown method " + m.method}});
}

// ---------------------------------------------------------------------------
// Game administration

StatusCode GameServer::init_game(std::optional<int> draw_threshold) {
    std::lock_guard lock(session_mutex_);
    if (stopped_ || lifecycle_ == Lifecycle::Running) return StatusCode::BadInvalidState;
    if (draw_threshold && *draw_threshold < 1) return StatusCode::BadInvalidArgument;
    if (!is_good(reset_units_locked())) {
        lifecycle_ = Lifecycle::Idle;
        publish_state_locked();
        return StatusCode::BadDeviceFailure;
    }
    session_ = rules::new_session(draw_threshold.value_or(config_.draw_threshold));
    history_.clear();
    lifecycle_ = Lifecycle::Initialized;
    publish_state_locked();
    spdlog::info("game initialized (draw threshold {})", session_.draw_threshold);
    return StatusCode::Good;
}

StatusCode GameServer::start_game() {
    std::lock_guard lock(session_mutex_);
    if (stopped_ || lifecycle_ != Lifecycle::Initialized) return StatusCode::BadInvalidState;
    if (!player_connected(PlayerRole::PlayerOne) || !player_connected(PlayerRole::PlayerTwo))
        return StatusCode::BadInvalidState;
    lifecycle_ = Lifecycle::Running;
    publish_state_locked();
    spdlog::info("game started");
    return StatusCode::Good;
}

StatusCode GameServer::reset_game() {
    std::lock_guard lock(session_mutex_);
    if (stopped_) return StatusCode::BadInvalidState;
    cancel_jobs_locked();
    session_ = rules::new_session(config_.draw_threshold);
    history_.clear();
    lifecycle_ = Lifecycle::Idle;
    auto status = reset_units_locked();
    publish_state_locked();
    spdlog::info("game reset");
    return is_good(status) ? StatusCode::Good : StatusCode::BadDeviceFailure;
}

StatusCode GameServer::next_move(const GameMove& m, PlayerRole caller, std::uint64_t* order_id) {
    std::lock_guard lock(session_mutex_);
    if (stopped_ || lifecycle_ != Lifecycle::Running) return StatusCode::BadInvalidState;
    auto status = rules::validate(session_, m, caller);
    if (!is_good(status)) return status;

    session_ = rules::apply_move(session_, m);
    history_.push_back(m);
    const auto id = next_order_id_++;
    if (session_.outcome) lifecycle_ = Lifecycle::Finished;

    std::vector<std::shared_ptr<Unit>> participants;
    {
        std::lock_guard clock(clients_mutex_);
        for (const auto& [_, u] : units_) {
            std::lock_guard ulock(u->mutex);
            if (u->peer && (u->health == UnitHealth::Ready || u->health == UnitHealth::Busy))
                participants.push_back(u);
        }
    }
    {
        std::lock_guard olock(orders_mutex_);
        auto& entry = orders_[id];
        entry.result.order_id = id;
        entry.result.move = m;
        entry.result.expected_board = session_.state.board;
        for (const auto& u : participants) entry.waiting.insert(u->name);
    }
    {
        auto hold = topics_.hold();
        topics_.publish(kTopicGameMove, encode(m));
        topics_.publish(kTopicGameState, encode(session_.state));
        topics_.publish(kTopicSessionInfo, session_info_locked());
    }
    if (participants.empty()) {
        complete_order(id, {}, StatusCode::Good, std::nullopt, 0, {});
    }
    for (const auto& u : participants) {
        {
            std::lock_guard ulock(u->mutex);
            Job job;
            job.type = Job::Type::Execute;
            job.order_id = id;
            job.move = m;
            u->jobs.push_back(std::move(job));
        }
        u->cv.notify_one();
    }
    if (order_id) *order_id = id;
    spdlog::info("order {}: {} by {}{}", id, to_string(m), to_string(caller),
                 session_.outcome ? std::string(" -> ") + std::string(rules::to_string(*session_.outcome)) : "");
    return StatusCode::Good;
}

// ---------------------------------------------------------------------------
// Production units

StatusCode GameServer::register_unit(const std::shared_ptr<Client>& client, const std::string& name) {
    std::lock_guard slock(session_mutex_);
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(client->mutex);
        peer = client->peer;
    }
    std::shared_ptr<Unit> unit;
    std::shared_ptr<net::Peer> replaced;
    {
        std::lock_guard lock(clients_mutex_);
        if (stopped_) return StatusCode::BadInvalidState;
        auto it = units_.find(name);
        if (it != units_.end()) {
            unit = it->second;
            std::lock_guard ulock(unit->mutex);
            const bool live = unit->peer && unit->peer->is_open();
            if (live && unit->health != UnitHealth::Faulted) return StatusCode::BadInvalidState;
            replaced = std::exchange(unit->peer, peer);
            unit->health = UnitHealth::Ready;
        } else {
            unit = std::make_shared<Unit>();
            unit->name = name;
            unit->peer = peer;
            units_[name] = unit;
            unit->worker = std::thread([this, unit] { unit_loop(unit); });
        }
    }
    if (replaced) replaced->close();

    // A unit joining an initialized or running game is brought to the twin's
    // state by a reset followed by a replay of every accepted move.
    if (lifecycle_ != Lifecycle::Idle) {
        std::lock_guard ulock(unit->mutex);
        Job reset;
        reset.type = Job::Type::Reset;
        reset.resync = true;
        unit->jobs.push_back(std::move(reset));
        for (const auto& m : history_) {
            Job replay;
            replay.type = Job::Type::Execute;
            replay.move = m;
            replay.resync = true;
            unit->jobs.push_back(std::move(replay));
        }
    }
    unit->cv.notify_one();
    return StatusCode::Good;
}

StatusCode GameServer::reset_units_locked() {
    std::vector<std::shared_ptr<Unit>> targets;
    {
        std::lock_guard lock(clients_mutex_);
        for (const auto& [_, u] : units_) {
            std::lock_guard ulock(u->mutex);
            if (u->peer && u->health != UnitHealth::Disconnected) targets.push_back(u);
        }
    }
    std::vector<std::future<StatusCode>> results;
    for (const auto& u : targets) {
        Job job;
        job.type = Job::Type::Reset;
        job.done = std::make_shared<std::promise<StatusCode>>();
        results.push_back(job.done->get_future());
        {
            std::lock_guard ulock(u->mutex);
            u->jobs.push_back(std::move(job));
        }
        u->cv.notify_one();
    }
    bool all_good = true;
    for (std::size_t i = 0; i < results.size(); ++i) {
        auto status = results[i].get();
        if (!is_good(status)) {
            spdlog::warn("unit '{}' failed to reset: {}", targets[i]->name, to_string(status));
            all_good = false;
        }
    }
    return all_good ? StatusCode::Good : StatusCode::BadDeviceFailure;
}

void GameServer::cancel_jobs_locked() {
    std::vector<std::pair<std::uint64_t, std::string>> cancelled;
    {
        std::lock_guard lock(clients_mutex_);
        for (const auto& [name, u] : units_) {
            std::lock_guard ulock(u->mutex);
            std::erase_if(u->jobs, [&](const Job& j) {
                if (j.type != Job::Type::Execute) return false;
                if (!j.resync) cancelled.emplace_back(j.order_id, name);
                return true;
            });
        }
    }
    for (const auto& [id, name] : cancelled) complete_order(id, name, StatusCode::BadInvalidState, std::nullopt, 0, {});
}

void GameServer::unit_loop(const std::shared_ptr<Unit>& unit) {
    for (;;) {
        Job job;
        {
            std::unique_lock lock(unit->mutex);
            unit->cv.wait(lock, [&] { return unit->stop || !unit->jobs.empty(); });
            if (unit->stop) break;
            job = std::move(unit->jobs.front());
            unit->jobs.pop_front();
        }
        if (job.type == Job::Type::Reset) {
            auto status = run_reset(unit);
            if (job.done) job.done->set_value(status);
        } else {
            run_execute(unit, job);
        }
    }
    // Shutting down: nobody may be left waiting on this unit.
    std::deque<Job> rest;
    {
        std::lock_guard lock(unit->mutex);
        rest.swap(unit->jobs);
    }
    for (auto& job : rest) {
        if (job.done) job.done->set_value(StatusCode::BadSessionClosed);
        if (job.type == Job::Type::Execute && !job.resync)
            complete_order(job.order_id, unit->name, StatusCode::BadSessionClosed, std::nullopt, 0, {});
    }
}

void GameServer::set_health(const std::shared_ptr<Unit>& unit, UnitHealth h) {
    {
        std::lock_guard lock(unit->mutex);
        if (unit->health == h) return;
        unit->health = h;
    }
    if (h == UnitHealth::Faulted) spdlog::warn("unit '{}' faulted", unit->name);
    publish_unit_health();
}

StatusCode GameServer::run_reset(const std::shared_ptr<Unit>& unit) {
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(unit->mutex);
        peer = unit->peer;
    }
    if (!peer) return StatusCode::BadSessionClosed;
    auto r = peer->call("reset", Json::object(), config_.reset_deadline);
    if (is_good(r.status)) {
        {
            std::lock_guard lock(unit->mutex);
            unit->last_board = GameBoard{};
            unit->last_order_id = 0;
        }
        set_health(unit, UnitHealth::Ready);
    } else {
        set_health(unit, peer->is_open() ? UnitHealth::Faulted : UnitHealth::Disconnected);
    }
    return r.status;
}

void GameServer::run_execute(const std::shared_ptr<Unit>& unit, Job& job) {
    std::shared_ptr<net::Peer> peer;
    UnitHealth health;
    {
        std::lock_guard lock(unit->mutex);
        peer = unit->peer;
        health = unit->health;
    }
    if (!peer || health == UnitHealth::Faulted || health == UnitHealth::Disconnected) {
        if (!job.resync) complete_order(job.order_id, unit->name, StatusCode::BadDeviceFailure, std::nullopt, 0, {});
        return;
    }

    std::vector<vita::VitaRecord> records;
    std::optional<GameBoard> board;
    StatusCode final_status = StatusCode::Good;
    int attempts = 0;
    for (;;) {
        ++attempts;
        set_health(unit, UnitHealth::Busy);
        const auto started = vita::now_ms();
        auto r = peer->call("executeMove", encode(job.move), config_.execute_deadline);
        const auto ended = vita::now_ms();

        std::optional<cell::ExecuteReport> report;
        if (r.status != StatusCode::BadTimeout && r.status != StatusCode::BadSessionClosed) {
            try {
                report = cell::decode_report(r.payload);
            } catch (const DecodeError& e) {
                spdlog::warn("unit '{}': unreadable executeMove report: {}", unit->name, e.what());
            }
        }
        if (is_good(r.status) && !report) r.status = StatusCode::BadInternal;

        if (report && !report->phases.empty()) {
            for (const auto& p : report->phases)
                records.push_back({job.order_id, unit->name, job.move, p.sub_phase, p.started_at, p.ended_at,
                                   p.status, p.deviation_mm});
        } else {
            records.push_back({job.order_id, unit->name, job.move, vita::SubPhase::PickUp, started, ended, r.status,
                               std::nullopt});
        }

        final_status = r.status;
        if (is_good(r.status)) {
            board = report->board;
            break;
        }
        spdlog::warn("unit '{}': order {} attempt {} -> {}", unit->name, job.order_id, attempts,
                     to_string(r.status));
        const bool retryable = r.status == StatusCode::BadTimeout || r.status == StatusCode::BadDeviceFailure;
        if (!retryable || attempts > config_.max_retries || !peer->is_open()) break;
    }

    if (board) {
        {
            std::lock_guard lock(unit->mutex);
            unit->last_board = *board;
            if (!job.resync) unit->last_order_id = job.order_id;
        }
        set_health(unit, UnitHealth::Ready);
    } else {
        set_health(unit, peer->is_open() ? UnitHealth::Faulted : UnitHealth::Disconnected);
    }
    if (!job.resync) complete_order(job.order_id, unit->name, final_status, board, attempts, std::move(records));
}

void GameServer::complete_order(std::uint64_t order_id, const std::string& unit, StatusCode status,
                                std::optional<GameBoard> board, int attempts, std::vector<vita::VitaRecord> records) {
    bool settled_now = false;
    {
        std::lock_guard lock(orders_mutex_);
        auto it = orders_.find(order_id);
        if (it == orders_.end()) return;
        auto& e = it->second;
        if (!unit.empty()) {
            e.result.units[unit] = status;
            e.result.attempts[unit] = attempts;
            if (board) e.result.reported_boards[unit] = *board;
            e.waiting.erase(unit);
        }
        e.records.insert(e.records.end(), std::make_move_iterator(records.begin()),
                         std::make_move_iterator(records.end()));
        if (e.waiting.empty() && !e.result.settled) {
            e.result.settled = true;
            e.result.status = StatusCode::Good;
            for (const auto& [_, s] : e.result.units)
                if (!is_good(s)) e.result.status = StatusCode::BadDeviceFailure;
            last_settled_ = e.result;
            settled_now = true;
            if (!is_good(e.result.status))
                spdlog::warn("order {} settled with {}", order_id, to_string(e.result.status));
        }
        // Records reach the file in order_id order, whatever order units finish in.
        for (auto f = orders_.find(next_flush_); f != orders_.end() && f->second.result.settled;
             f = orders_.find(next_flush_)) {
            if (vita_log_.is_open() && !f->second.records.empty()) vita_log_.append(f->second.records);
            flushed_.insert(flushed_.end(), f->second.records.begin(), f->second.records.end());
            f->second.records.clear();
            ++next_flush_;
        }
    }
    orders_cv_.notify_all();
    if (settled_now) publish_unit_health();
}

// ---------------------------------------------------------------------------
// Publication

Json GameServer::session_info_locked() const {
    return Json{{"lifecycle", std::string(to_string(lifecycle_))}, {"session", rules::encode(session_)}};
}

void GameServer::publish_state_locked() {
    auto hold = topics_.hold();
    topics_.publish(kTopicGameState, encode(session_.state));
    topics_.publish(kTopicSessionInfo, session_info_locked());
}

void GameServer::publish_unit_health() {
    // The snapshot is taken under the topic lock so that the retained value
    // is never older than a previous publication.
    auto hold = topics_.hold();
    Json units = Json::array();
    {
        std::lock_guard lock(clients_mutex_);
        for (const auto& [name, u] : units_) {
            std::lock_guard ulock(u->mutex);
            units.push_back(
                {{"name", name}, {"health", std::string(to_string(u->health))}, {"last_order_id", u->last_order_id}});
        }
    }
    Json last = nullptr;
    {
        std::lock_guard lock(orders_mutex_);
        if (last_settled_) {
            Json per_unit = Json::object();
            for (const auto& [name, s] : last_settled_->units) per_unit[name] = encode(s);
            last = {{"order_id", last_settled_->order_id},
                    {"status", encode(last_settled_->status)},
                    {"units", per_unit}};
        }
    }
    topics_.publish(kTopicUnitHealth, Json{{"units", units}, {"last_order", last}});
}

// ---------------------------------------------------------------------------
// Observation

Lifecycle GameServer::lifecycle() const {
    std::lock_guard lock(session_mutex_);
    return lifecycle_;
}

rules::Session GameServer::session() const {
    std::lock_guard lock(session_mutex_);
    return session_;
}

std::vector<UnitSnapshot> GameServer::units() const {
    std::vector<UnitSnapshot> out;
    std::lock_guard lock(clients_mutex_);
    for (const auto& [name, u] : units_) {
        std::lock_guard ulock(u->mutex);
        out.push_back({name, u->health, u->last_board, u->last_order_id});
    }
    return out;
}

std::optional<OrderResult> GameServer::order(std::uint64_t order_id) const {
    std::lock_guard lock(orders_mutex_);
    auto it = orders_.find(order_id);
    if (it == orders_.end()) return std::nullopt;
    return it->second.result;
}

std::optional<OrderResult> GameServer::wait_settled(std::uint64_t order_id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(orders_mutex_);
    bool ok = orders_cv_.wait_for(lock, timeout, [&] {
        auto it = orders_.find(order_id);
        return it != orders_.end() && it->second.result.settled;
    });
    if (!ok) return std::nullopt;
    return orders_.at(order_id).result;
}

bool GameServer::wait_all_settled(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(orders_mutex_);
    return orders_cv_.wait_for(lock, timeout, [&] {
        return std::all_of(orders_.begin(), orders_.end(), [](const auto& kv) { return kv.second.result.settled; });
    });
}

std::vector<vita::VitaRecord> GameServer::vita_records() const {
    std::lock_guard lock(orders_mutex_);
    return flushed_;
}

bool GameServer::player_connected(PlayerRole r) const {
    std::lock_guard lock(clients_mutex_);
    auto it = players_.find(r);
    if (it == players_.end()) return false;
    auto c = it->second.lock();
    if (!c) return false;
    std::lock_guard clock(c->mutex);
    return c->peer && c->peer->is_open();
}

}  // namespace ibpt::server
