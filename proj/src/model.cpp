#include "ibpt/model.hpp"

#include <algorithm>
#include <cctype>

namespace ibpt {

namespace {

using F = GameField;

constexpr std::array<GameField, kBoardFieldCount> kOrder = {
    F::A1, F::A4, F::A7, F::B2, F::B4, F::B6, F::C3, F::C4, F::C5, F::D1, F::D2, F::D3,
    F::D5, F::D6, F::D7, F::E3, F::E4, F::E5, F::F2, F::F4, F::F6, F::G1, F::G4, F::G7,
};

constexpr std::array<GameField, kFieldCount> kAll = {
    F::A1, F::A4, F::A7, F::B2, F::B4, F::B6, F::C3, F::C4, F::C5, F::D1, F::D2, F::D3, F::D5,
    F::D6, F::D7, F::E3, F::E4, F::E5, F::F2, F::F4, F::F6, F::G1, F::G4, F::G7, F::Tray1, F::Tray2,
};

constexpr std::array<std::string_view, kFieldCount> kNames = {
    "a1", "a4", "a7", "b2", "b4", "b6", "c3", "c4", "c5", "d1", "d2", "d3", "d5",
    "d6", "d7", "e3", "e4", "e5", "f2", "f4", "f6", "g1", "g4", "g7", "tray1", "tray2",
};

// Rows first (ranks 1..7, the middle rank split in two), then columns.
constexpr std::array<MillLine, 16> kMills = {{
    {F::A1, F::D1, F::G1},
    {F::B2, F::D2, F::F2},
    {F::C3, F::D3, F::E3},
    {F::A4, F::B4, F::C4},
    {F::E4, F::F4, F::G4},
    {F::C5, F::D5, F::E5},
    {F::B6, F::D6, F::F6},
    {F::A7, F::D7, F::G7},
    {F::A1, F::A4, F::A7},
    {F::B2, F::B4, F::B6},
    {F::C3, F::C4, F::C5},
    {F::D1, F::D2, F::D3},
    {F::D5, F::D6, F::D7},
    {F::E3, F::E4, F::E5},
    {F::F2, F::F4, F::F6},
    {F::G1, F::G4, F::G7},
}};

struct Neighbours {
    std::array<GameField, 4> items{};
    std::size_t size = 0;
};

struct Topology {
    std::array<Neighbours, kBoardFieldCount> adjacency{};
    std::array<std::array<MillLine, 2>, kBoardFieldCount> mills{};
    std::array<std::size_t, kBoardFieldCount> mill_count{};
};

// Neighbours are consecutive fields along a mill line.
Topology build_topology() {
    Topology t;
    auto link = [&](GameField a, GameField b) {
        auto& n = t.adjacency[field_index(a)];
        n.items[n.size++] = b;
    };
    for (const auto& line : kMills) {
        link(line[0], line[1]);
        link(line[1], line[0]);
        link(line[1], line[2]);
        link(line[2], line[1]);
        for (auto f : line) {
            auto i = field_index(f);
            t.mills[i][t.mill_count[i]++] = line;
        }
    }
    for (auto& n : t.adjacency) std::sort(n.items.begin(), n.items.begin() + n.size);
    return t;
}

const Topology& topology() {
    static const Topology t = build_topology();
    return t;
}

void require_board_field(GameField f) {
    if (is_tray(f)) throw std::invalid_argument("tray is not a board field");
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct StatusEntry {
    StatusCode code;
    std::string_view name;
    std::uint32_t value;
};

// Values follow the IEC 62541 Bad* constants of the same meaning.
constexpr std::array<StatusEntry, 8> kStatus = {{
    {StatusCode::Good, "GOOD", 0x00000000u},
    {StatusCode::BadInvalidArgument, "BAD_INVALID_ARGUMENT", 0x80AB0000u},
    {StatusCode::BadInvalidState, "BAD_INVALID_STATE", 0x80AF0000u},
    {StatusCode::BadNotFound, "BAD_NOT_FOUND", 0x803E0000u},
    {StatusCode::BadTimeout, "BAD_TIMEOUT", 0x800A0000u},
    {StatusCode::BadSessionClosed, "BAD_SESSION_CLOSED", 0x80260000u},
    {StatusCode::BadDeviceFailure, "BAD_DEVICE_FAILURE", 0x808B0000u},
    {StatusCode::BadInternal, "BAD_INTERNAL", 0x80020000u},
}};

}  // namespace

GameBoard::GameBoard() {
    for (std::size_t i = 0; i < kBoardFieldCount; ++i) fields_[i] = {kOrder[i], Occupation::Empty};
}

Occupation GameBoard::at(GameField f) const {
    require_board_field(f);
    return fields_[field_index(f)].occupation;
}

void GameBoard::set(GameField f, Occupation o) {
    require_board_field(f);
    fields_[field_index(f)].occupation = o;
}

int GameBoard::count(Occupation o) const noexcept {
    return static_cast<int>(std::count_if(fields_.begin(), fields_.end(),
                                          [o](const GameFieldState& s) { return s.occupation == o; }));
}

std::span<const GameField, kBoardFieldCount> canonical_field_order() noexcept { return kOrder; }

std::span<const GameField, kFieldCount> all_fields() noexcept { return kAll; }

std::span<const GameField> adjacent(GameField f) {
    require_board_field(f);
    const auto& n = topology().adjacency[field_index(f)];
    return {n.items.data(), n.size};
}

std::span<const MillLine> mills_containing(GameField f) {
    require_board_field(f);
    auto i = field_index(f);
    return {topology().mills[i].data(), topology().mill_count[i]};
}

std::span<const MillLine> all_mills() noexcept { return kMills; }

std::string_view to_string(GameField f) noexcept { return kNames[field_index(f)]; }

std::string_view to_string(Occupation o) noexcept {
    switch (o) {
        case Occupation::Empty: return "Empty";
        case Occupation::PlayerOne: return "PlayerOne";
        case Occupation::PlayerTwo: return "PlayerTwo";
    }
    return "Empty";
}

std::string_view to_string(PlayerRole r) noexcept {
    switch (r) {
        case PlayerRole::PlayerOne: return "PlayerOne";
        case PlayerRole::PlayerTwo: return "PlayerTwo";
        case PlayerRole::Observer: return "Observer";
    }
    return "Observer";
}

std::string_view to_string(StatusCode s) noexcept {
    for (const auto& e : kStatus)
        if (e.code == s) return e.name;
    return "BAD_INTERNAL";
}

std::string to_string(const GameMove& m) {
    return std::string(to_string(m.from)) + "->" + std::string(to_string(m.to));
}

std::optional<GameField> parse_field(std::string_view text) noexcept {
    auto l = lower(text);
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (kNames[i] == l) return kAll[i];
    return std::nullopt;
}

std::optional<Occupation> parse_occupation(std::string_view text) noexcept {
    for (auto o : {Occupation::Empty, Occupation::PlayerOne, Occupation::PlayerTwo})
        if (to_string(o) == text) return o;
    return std::nullopt;
}

std::optional<PlayerRole> parse_role(std::string_view text) noexcept {
    for (auto r : {PlayerRole::PlayerOne, PlayerRole::PlayerTwo, PlayerRole::Observer})
        if (to_string(r) == text) return r;
    return std::nullopt;
}

std::optional<StatusCode> parse_status(std::string_view text) noexcept {
    for (const auto& e : kStatus)
        if (e.name == text) return e.code;
    return std::nullopt;
}

std::uint32_t status_value(StatusCode s) noexcept {
    for (const auto& e : kStatus)
        if (e.code == s) return e.value;
    return 0x80020000u;
}

std::optional<StatusCode> status_from_value(std::uint32_t v) noexcept {
    for (const auto& e : kStatus)
        if (e.value == v) return e.code;
    return std::nullopt;
}

}  // namespace ibpt
