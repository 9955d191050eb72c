#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ibpt/rules.hpp"

namespace ibpt::console {

/// Char for an occupation: '.', 'X' (PlayerOne) or 'O' (PlayerTwo).
char marker(Occupation o) noexcept;

/// Board drawing with file/rank labels; one marker per field.
std::string render_board(const GameBoard& b);

/// Board followed by per-player status and the side to move.
std::string render_session(const rules::Session& s);

/// Parses "a1 d1", "tray a1" (place from the mover's tray) or
/// "g7 tray" (capture into the opponent's tray). On failure returns
/// nullopt and sets `error`.
std::optional<GameMove> parse_move(std::string_view text, PlayerRole mover, std::string* error = nullptr);

}  // namespace ibpt::console
