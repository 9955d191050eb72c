#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ibpt {

// The 24 board intersections in canonical order (file a..g, then rank 1..7),
// followed by the two trays. The numeric value of a board field is its index
// into GameBoard.
enum class GameField : std::uint8_t {
    A1, A4, A7, B2, B4, B6, C3, C4, C5, D1, D2, D3,
    D5, D6, D7, E3, E4, E5, F2, F4, F6, G1, G4, G7,
    Tray1, Tray2,
};

inline constexpr std::size_t kBoardFieldCount = 24;
inline constexpr std::size_t kFieldCount = 26;
inline constexpr int kTokensPerPlayer = 9;

enum class Occupation : std::uint8_t { Empty, PlayerOne, PlayerTwo };

enum class PlayerRole : std::uint8_t { PlayerOne, PlayerTwo, Observer };

// Numeric wire values live in status_value().
enum class StatusCode : std::uint8_t {
    Good,
    BadInvalidArgument,
    BadInvalidState,
    BadNotFound,
    BadTimeout,
    BadSessionClosed,
    BadDeviceFailure,
    BadInternal,
};

constexpr bool is_tray(GameField f) noexcept {
    return f == GameField::Tray1 || f == GameField::Tray2;
}

constexpr std::size_t field_index(GameField f) noexcept {
    return static_cast<std::size_t>(f);
}

constexpr bool is_good(StatusCode s) noexcept { return s == StatusCode::Good; }

constexpr bool is_player(PlayerRole r) noexcept { return r != PlayerRole::Observer; }

constexpr PlayerRole opponent(PlayerRole r) noexcept {
    return r == PlayerRole::PlayerOne ? PlayerRole::PlayerTwo : PlayerRole::PlayerOne;
}

constexpr Occupation occupation_of(PlayerRole r) noexcept {
    return r == PlayerRole::PlayerOne ? Occupation::PlayerOne : Occupation::PlayerTwo;
}

// Tray1 stores PlayerOne's tokens, Tray2 PlayerTwo's.
constexpr GameField tray_of(PlayerRole r) noexcept {
    return r == PlayerRole::PlayerOne ? GameField::Tray1 : GameField::Tray2;
}

constexpr int player_index(PlayerRole r) noexcept { return r == PlayerRole::PlayerOne ? 0 : 1; }

struct GameMove {
    GameField from{};
    GameField to{};

    friend bool operator==(const GameMove&, const GameMove&) = default;
    friend auto operator<=>(const GameMove&, const GameMove&) = default;
};

struct GameFieldState {
    GameField field{};
    Occupation occupation = Occupation::Empty;

    friend bool operator==(const GameFieldState&, const GameFieldState&) = default;
};

// Fixed 24-entry board; entry i always describes canonical_field_order()[i].
class GameBoard {
public:
    GameBoard();

    Occupation at(GameField f) const;
    void set(GameField f, Occupation o);
    int count(Occupation o) const noexcept;
    std::span<const GameFieldState, kBoardFieldCount> fields() const noexcept { return fields_; }

    friend bool operator==(const GameBoard&, const GameBoard&) = default;

private:
    std::array<GameFieldState, kBoardFieldCount> fields_;
};

struct GameState {
    GameBoard board;
    PlayerRole next = PlayerRole::PlayerOne;

    friend bool operator==(const GameState&, const GameState&) = default;
};

using MillLine = std::array<GameField, 3>;

/// The 24 board fields, lexicographic by file then rank: a1, a4, a7, b2, ...
std::span<const GameField, kBoardFieldCount> canonical_field_order() noexcept;

/// Every value of GameField, board fields first.
std::span<const GameField, kFieldCount> all_fields() noexcept;

/// Neighbours along the board lines. Throws std::invalid_argument for trays.
std::span<const GameField> adjacent(GameField f);

/// The one or two mill lines through f. Throws std::invalid_argument for trays.
std::span<const MillLine> mills_containing(GameField f);

/// All 16 mill lines.
std::span<const MillLine> all_mills() noexcept;

std::string_view to_string(GameField f) noexcept;
std::string_view to_string(Occupation o) noexcept;
std::string_view to_string(PlayerRole r) noexcept;
std::string_view to_string(StatusCode s) noexcept;
std::string to_string(const GameMove& m);

/// Case-insensitive parse ("A1", "a1", "Tray1", "tray1").
std::optional<GameField> parse_field(std::string_view text) noexcept;
std::optional<Occupation> parse_occupation(std::string_view text) noexcept;
std::optional<PlayerRole> parse_role(std::string_view text) noexcept;
std::optional<StatusCode> parse_status(std::string_view text) noexcept;

/// Numeric form: GOOD is 0, every BAD_* code has the top bit set.
std::uint32_t status_value(StatusCode s) noexcept;
std::optional<StatusCode> status_from_value(std::uint32_t v) noexcept;

}  // namespace ibpt
