#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibpt/broker.hpp"
#include "ibpt/peer.hpp"
#include "ibpt/rules.hpp"
#include "ibpt/transport.hpp"
#include "ibpt/vita.hpp"

namespace ibpt::server {

inline constexpr const char* kTopicGameState = "GameState";
inline constexpr const char* kTopicGameMove = "GameMove";
inline constexpr const char* kTopicSessionInfo = "SessionInfo";
inline constexpr const char* kTopicUnitHealth = "UnitHealth";

enum class Lifecycle : std::uint8_t { Idle, Initialized, Running, Finished };
enum class UnitHealth : std::uint8_t { Ready, Busy, Faulted, Disconnected };

std::string_view to_string(Lifecycle l) noexcept;
std::string_view to_string(UnitHealth h) noexcept;
std::optional<Lifecycle> parse_lifecycle(std::string_view s) noexcept;
std::optional<UnitHealth> parse_unit_health(std::string_view s) noexcept;

struct ServerConfig {
    std::optional<net::Endpoint> listen_tcp;
    std::optional<net::Endpoint> listen_ws;
    std::string vita_log_path;  // empty: telemetry is kept in memory only
    vita::FsyncPolicy fsync = vita::FsyncPolicy::Never;
    int draw_threshold = rules::kDefaultDrawThreshold;
    int max_retries = 2;
    std::chrono::milliseconds execute_deadline{30'000};
    std::chrono::milliseconds reset_deadline{30'000};
    net::HeartbeatConfig heartbeat;
    int io_threads = 2;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON server configuration; absent keys keep their defaults, a null
/// listen address disables that transport. Throws ConfigError.
ServerConfig parse_server_config(const Json& j);
ServerConfig load_server_config(const std::string& path);

struct UnitSnapshot {
    std::string name;
    UnitHealth health = UnitHealth::Ready;
    GameBoard last_reported_board;
    std::uint64_t last_order_id = 0;
};

/// Orchestration outcome of one accepted move across the units that were
/// healthy when it was dispatched.
struct OrderResult {
    std::uint64_t order_id = 0;
    GameMove move;
    GameBoard expected_board;
    bool settled = false;
    StatusCode status = StatusCode::Good;  // BAD_DEVICE_FAILURE if any unit failed
    std::map<std::string, StatusCode> units;
    std::map<std::string, GameBoard> reported_boards;
    std::map<std::string, int> attempts;
};

/// The game server: the authoritative twin of the game, mirrored onto every
/// registered production unit.
///
/// Session mutations are serialized by one lock. nextMove answers once the
/// move is validated and published; execution on the units proceeds in the
/// background, strictly in order per unit.
class GameServer {
public:
    explicit GameServer(ServerConfig config);
    ~GameServer();
    GameServer(const GameServer&) = delete;
    GameServer& operator=(const GameServer&) = delete;

    /// Binds the configured listeners. Throws std::runtime_error on bind failure.
    void start();
    /// Closes every connection and listener and flushes telemetry; queued jobs are dropped.
    void stop();

    std::uint16_t tcp_port() const;
    std::uint16_t ws_port() const;

    StatusCode init_game(std::optional<int> draw_threshold = std::nullopt);
    StatusCode start_game();
    StatusCode reset_game();
    StatusCode next_move(const GameMove& m, PlayerRole caller, std::uint64_t* order_id = nullptr);

    Lifecycle lifecycle() const;
    rules::Session session() const;
    std::vector<UnitSnapshot> units() const;
    std::optional<OrderResult> order(std::uint64_t order_id) const;
    std::optional<OrderResult> wait_settled(std::uint64_t order_id, std::chrono::milliseconds timeout) const;
    bool wait_all_settled(std::chrono::milliseconds timeout) const;
    /// Every Vita record produced so far, in file order.
    std::vector<vita::VitaRecord> vita_records() const;
    bool player_connected(PlayerRole r) const;

    net::TopicRegistry& topics() { return topics_; }

private:
    struct Client;
    struct Unit;
    struct Job;

    void accept(std::shared_ptr<net::Connection> conn);
    net::RpcResult handle(const std::shared_ptr<Client>& client, const wire::WireMessage& m);
    net::RpcResult handle_hello(const std::shared_ptr<Client>& client, const wire::WireMessage& m);
    net::RpcResult handle_rpc(const std::shared_ptr<Client>& client, const wire::WireMessage& m);
    void on_disconnect(const std::shared_ptr<Client>& client);

    StatusCode register_unit(const std::shared_ptr<Client>& client, const std::string& name);
    StatusCode reset_units_locked();
    void cancel_jobs_locked();
    void unit_loop(const std::shared_ptr<Unit>& unit);
    void run_execute(const std::shared_ptr<Unit>& unit, Job& job);
    StatusCode run_reset(const std::shared_ptr<Unit>& unit);
    void set_health(const std::shared_ptr<Unit>& unit, UnitHealth h);
    void complete_order(std::uint64_t order_id, const std::string& unit, StatusCode status,
                        std::optional<GameBoard> board, int attempts, std::vector<vita::VitaRecord> records);

    void publish_state_locked();
    void publish_unit_health();
    Json session_info_locked() const;

    ServerConfig config_;
    net::Runtime runtime_;
    std::unique_ptr<net::Listener> tcp_listener_;
    std::unique_ptr<net::Listener> ws_listener_;
    net::TopicRegistry topics_;
    vita::VitaLog vita_log_;

    // Session state; guarded by session_mutex_.
    mutable std::mutex session_mutex_;
    Lifecycle lifecycle_ = Lifecycle::Idle;
    rules::Session session_;
    std::vector<GameMove> history_;
    std::uint64_t next_order_id_ = 1;

    // Connections and units; guarded by clients_mutex_.
    mutable std::mutex clients_mutex_;
    std::set<std::shared_ptr<Client>> clients_;
    std::map<PlayerRole, std::weak_ptr<Client>> players_;
    std::map<std::string, std::shared_ptr<Unit>> units_;

    // Order settlement and telemetry; guarded by orders_mutex_.
    mutable std::mutex orders_mutex_;
    mutable std::condition_variable orders_cv_;
    struct OrderEntry {
        OrderResult result;
        std::set<std::string> waiting;
        std::vector<vita::VitaRecord> records;
    };
    std::map<std::uint64_t, OrderEntry> orders_;
    std::uint64_t next_flush_ = 1;
    std::vector<vita::VitaRecord> flushed_;
    std::optional<OrderResult> last_settled_;

    std::atomic<bool> stopped_{false};
};

}  // namespace ibpt::server
