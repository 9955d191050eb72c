#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "ibpt/peer.hpp"
#include "ibpt/rules.hpp"

namespace ibpt::ai {

inline constexpr int kWinScore = 1'000'000;

/// 10 x (own tokens - opponent tokens, unplaced tokens included)
/// + (own mobility - opponent mobility), from `me`'s point of view.
int evaluate(const rules::Session& s, PlayerRole me);

struct SearchResult {
    int value = 0;
    std::vector<GameMove> best_moves;  // every root move achieving `value`, in legal_moves order
    std::uint64_t nodes = 0;
};

/// Depth counts plies; a capture is its own ply. Terminal positions score
/// +/-(kWinScore + remaining depth), draws 0.
SearchResult search_minimax(const rules::Session& s, int depth, PlayerRole me);
SearchResult search_alphabeta(const rules::Session& s, int depth, PlayerRole me);

/// Alpha-beta from the side to move; ties among best moves are broken by a
/// uniform draw seeded with `seed`. Throws std::logic_error without legal moves.
GameMove choose_move(const rules::Session& s, int depth, std::uint64_t seed);

struct AgentConfig {
    PlayerRole role = PlayerRole::PlayerOne;
    int search_depth = 4;
    std::uint64_t rng_seed = 0;
    std::chrono::milliseconds think_delay{0};
    std::string name = "ai";
};

/// Throws std::invalid_argument for an Observer role or a non-positive depth.
void validate(const AgentConfig& c);

enum class AgentExit : std::uint8_t { GameOver, Resigned, Stopped };

/// Protocol client playing one role until the game ends. Turn races
/// (BAD_INVALID_STATE) are retried on the next SessionInfo publication; any
/// other rejection makes the agent resign.
class Agent {
public:
    Agent(AgentConfig config, net::Endpoint server, net::HeartbeatConfig hb = {});
    ~Agent();

    /// Blocks until the game reaches an outcome, the agent resigns, or stop().
    /// Reconnects with bounded backoff while the server is unreachable.
    AgentExit run();
    void stop();

    std::uint64_t moves_sent() const noexcept { return moves_sent_; }
    std::uint64_t turn_races() const noexcept { return races_; }

private:
    struct State;

    AgentConfig config_;
    net::Endpoint server_;
    net::HeartbeatConfig hb_;
    std::shared_ptr<State> state_;
    std::atomic<std::uint64_t> moves_sent_{0};
    std::atomic<std::uint64_t> races_{0};
};

}  // namespace ibpt::ai
