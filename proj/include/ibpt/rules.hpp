#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ibpt/codec.hpp"
#include "ibpt/model.hpp"

namespace ibpt::rules {

enum class Phase : std::uint8_t { Placement, Movement, Flying };

enum class Outcome : std::uint8_t { WinPlayerOne, WinPlayerTwo, Draw };

inline constexpr int kDefaultDrawThreshold = 50;

// Full bookkeeping behind a published GameState. Per-player arrays are
// indexed by player_index().
struct Session {
    GameState state;
    std::optional<PlayerRole> pending_capture;  // the player who owes a capture
    std::array<int, 2> tray_unplaced{kTokensPerPlayer, kTokensPerPlayer};
    std::array<int, 2> captured{0, 0};
    std::uint64_t move_number = 0;
    int quiet_moves = 0;
    int draw_threshold = kDefaultDrawThreshold;
    std::optional<Outcome> outcome;

    int on_board(PlayerRole p) const { return state.board.count(occupation_of(p)); }
    int unplaced(PlayerRole p) const { return tray_unplaced[player_index(p)]; }
    int captured_of(PlayerRole p) const { return captured[player_index(p)]; }

    friend bool operator==(const Session&, const Session&) = default;
};

Session new_session(int draw_threshold = kDefaultDrawThreshold);

Phase phase(const Session& s, PlayerRole p);

/// Fields of the opponent of `capturer` that may be taken: tokens outside
/// mills, or every token when all of them sit in mills.
std::vector<GameField> capturable(const Session& s, PlayerRole capturer);

/// Whether the token at `f` belongs to a completed mill of its owner.
bool in_mill(const GameBoard& b, GameField f);

/// Ordered by (from, to). Empty once an outcome is set.
std::vector<GameMove> legal_moves(const Session& s);

StatusCode validate(const Session& s, const GameMove& m, PlayerRole caller);

/// Successor session. Throws std::invalid_argument when validate(s, m, s.state.next) is not GOOD.
Session apply_move(const Session& s, const GameMove& m);

inline std::optional<Outcome> winner(const Session& s) { return s.outcome; }

/// Movement/flying move count `p` would have on `s`'s board if it were their turn, ignoring captures.
int mobility(const Session& s, PlayerRole p);

/// GameBoard token-count and tray conservation checks; false on any violation.
bool conserves_tokens(const Session& s);

std::string_view to_string(Phase p) noexcept;
std::string_view to_string(Outcome o) noexcept;

Json encode(const Session& s);

}  // namespace ibpt::rules

namespace ibpt {
template <> rules::Session decode<rules::Session>(const Json& j, const std::string& path);
}
