#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibpt/codec.hpp"
#include "ibpt/peer.hpp"
#include "ibpt/vita.hpp"

namespace ibpt::cell {

inline constexpr std::size_t kTraySlots = 9;

struct Point {
    double x = 0, y = 0, z = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

enum class FaultOp : std::uint8_t { ExecuteMove, Reset };
enum class FaultKind : std::uint8_t { DeviceFailure, Timeout };

/// Fires on the `at`-th call (1-based) of `op`; persistent entries keep
/// firing on every later call as well.
struct FaultEntry {
    FaultOp op = FaultOp::ExecuteMove;
    std::uint64_t at = 1;
    FaultKind kind = FaultKind::DeviceFailure;
    bool persistent = false;
};

struct CellConfig {
    std::string name;
    std::string kinematics_label = "articulated";
    std::map<GameField, Point> field_coordinates;
    std::array<std::array<Point, kTraySlots>, 2> tray_slots{};
    std::array<int, 3> sub_phase_duration_ms{0, 0, 0};  // PickUp, MoveToken, PlaceToken
    int latency_jitter_ms = 0;
    std::vector<FaultEntry> fault_plan;
    std::optional<double> deviation_sigma_mm;
    int stall_ms = 35000;  // how long a Timeout fault stalls before answering
    std::string server;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ConfigError when the 24 fields or 9+9 tray slots are not all
/// mapped, or any duration is negative.
void validate(const CellConfig& c);

/// Square board of `pitch_mm` grid spacing centred at `origin`, trays on both sides.
CellConfig make_config(std::string name, std::string kinematics, Point origin, double pitch_mm);

Json encode(const CellConfig& c);
CellConfig load_config(const std::string& path);

class CellError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nine slots; picks come from the highest occupied slot, places go to the
/// lowest free one.
class TrayState {
public:
    TrayState() { slots_.fill(true); }

    int count() const noexcept;
    std::optional<std::size_t> pick_slot() const noexcept;
    std::optional<std::size_t> place_slot() const noexcept;
    void set(std::size_t slot, bool occupied) { slots_.at(slot) = occupied; }
    bool occupied(std::size_t slot) const { return slots_.at(slot); }
    void fill() { slots_.fill(true); }

    friend bool operator==(const TrayState&, const TrayState&) = default;

private:
    std::array<bool, kTraySlots> slots_{};
};

struct PhaseTelemetry {
    vita::SubPhase sub_phase = vita::SubPhase::PickUp;
    vita::Timestamp started_at{};
    vita::Timestamp ended_at{};
    StatusCode status = StatusCode::Good;
    std::optional<double> deviation_mm;

    friend bool operator==(const PhaseTelemetry&, const PhaseTelemetry&) = default;
};

struct ExecuteReport {
    StatusCode status = StatusCode::Good;
    std::vector<PhaseTelemetry> phases;
    GameBoard board;

    friend bool operator==(const ExecuteReport&, const ExecuteReport&) = default;
};

Json encode(const ExecuteReport& r);
ExecuteReport decode_report(const Json& j);

struct Placement {
    Point pick;
    Point place;
};

/// One simulated production unit. Not thread-safe; the cell client drives it
/// from a single worker.
class RobotCell {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit RobotCell(CellConfig config, std::uint64_t seed = 0, Sleeper sleep = {});

    ExecuteReport execute_move(const GameMove& m);
    StatusCode reset();

    /// Throws CellError when a tray source is empty or a tray destination full.
    Placement resolve_coordinates(const GameMove& m) const;

    const GameBoard& board() const noexcept { return board_; }
    const TrayState& tray(PlayerRole p) const { return trays_[player_index(p)]; }
    int tray_tokens() const noexcept;
    const CellConfig& config() const noexcept { return config_; }
    std::uint64_t execute_calls() const noexcept { return execute_calls_; }

private:
    std::optional<FaultKind> fault_for(FaultOp op, std::uint64_t ordinal) const;
    StatusCode check_shadow(const GameMove& m) const;
    Point field_point(GameField f) const;

    CellConfig config_;
    std::mt19937_64 rng_;
    Sleeper sleep_;
    GameBoard board_;
    std::array<TrayState, 2> trays_{};
    std::uint64_t execute_calls_ = 0;
    std::uint64_t reset_calls_ = 0;
};

/// Connects a RobotCell to the server as a production unit and serves
/// executeMove/reset until stopped, reconnecting with bounded backoff.
class CellClient {
public:
    CellClient(CellConfig config, net::Endpoint server, std::uint64_t seed = 0,
               net::HeartbeatConfig hb = {});
    ~CellClient();

    /// Connects and registers; returns the hello status (GOOD on success).
    StatusCode connect();
    /// Keeps the connection up until stop() is called.
    void run();
    void stop();
    bool connected() const;

    /// Snapshot under the cell lock.
    GameBoard board() const;
    int tray_tokens() const;

private:
    net::RpcResult handle(const wire::WireMessage& m);

    net::Runtime runtime_{1};
    net::Endpoint server_;
    net::HeartbeatConfig hb_;
    mutable std::mutex mutex_;
    RobotCell cell_;
    std::shared_ptr<net::Peer> peer_;
    std::atomic<bool> stopping_{false};
    mutable std::mutex wait_mutex_;
    std::condition_variable wait_cv_;
};

}  // namespace ibpt::cell
