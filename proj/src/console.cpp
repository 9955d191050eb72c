#include "ibpt/console.hpp"

#include <array>
#include <sstream>
#include <vector>

namespace ibpt::console {

namespace {

constexpr int kRows = 13;
constexpr int kCols = 25;

std::pair<int, int> cell_of(GameField f) {
    const auto name = to_string(f);
    return {(7 - (name[1] - '0')) * 2, (name[0] - 'a') * 4};
}

std::vector<std::string> split(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

}  // namespace

char marker(Occupation o) noexcept {
    switch (o) {
        case Occupation::PlayerOne: return 'X';
        case Occupation::PlayerTwo: return 'O';
        case Occupation::Empty: break;
    }
    return '.';
}

std::string render_board(const GameBoard& b) {
    std::array<std::string, kRows> grid;
    grid.fill(std::string(kCols, ' '));
    for (const auto& mill : all_mills()) {
        for (std::size_t i = 0; i + 1 < mill.size(); ++i) {
            auto [r0, c0] = cell_of(mill[i]);
            auto [r1, c1] = cell_of(mill[i + 1]);
            if (r0 == r1)
                for (int c = std::min(c0, c1); c <= std::max(c0, c1); ++c) grid[r0][c] = '-';
            else
                for (int r = std::min(r0, r1); r <= std::max(r0, r1); ++r) grid[r][c0] = '|';
        }
    }
    for (const auto& fs : b.fields()) {
        auto [r, c] = cell_of(fs.field);
        grid[r][c] = marker(fs.occupation);
    }
    std::string out;
    for (int r = 0; r < kRows; ++r) {
        out += r % 2 == 0 ? std::string(1, char('7' - r / 2)) + " " : "  ";
        out += grid[r];
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
    }
    out += "  a   b   c   d   e   f   g\n";
    return out;
}

std::string render_session(const rules::Session& s) {
    std::ostringstream out;
    out << render_board(s.state.board);
    for (auto p : {PlayerRole::PlayerOne, PlayerRole::PlayerTwo}) {
        out << to_string(p) << " (" << marker(occupation_of(p)) << "): " << rules::to_string(rules::phase(s, p))
            << ", tray " << s.unplaced(p) << ", captured " << s.captured_of(p) << '\n';
    }
    if (s.outcome) {
        out << "outcome: " << rules::to_string(*s.outcome) << '\n';
    } else {
        out << "move " << s.move_number + 1 << ", " << to_string(s.state.next) << " to "
            << (s.pending_capture ? "capture" : "move") << '\n';
    }
    return out.str();
}

std::optional<GameMove> parse_move(std::string_view text, PlayerRole mover, std::string* error) {
    auto fail = [&](std::string why) -> std::optional<GameMove> {
        if (error) *error = std::move(why);
        return std::nullopt;
    };
    const auto words = split(text);
    if (words.size() != 2) return fail("expected two fields, e.g. \"a1 d1\", \"tray a1\" or \"g7 tray\"");
    auto resolve = [&](const std::string& w, GameField tray) -> std::optional<GameField> {
        if (w == "tray" || w == "TRAY") return tray;
        return parse_field(w);
    };
    auto from = resolve(words[0], tray_of(mover));
    if (!from) return fail("unknown field \"" + words[0] + "\"");
    auto to = resolve(words[1], tray_of(opponent(mover)));
    if (!to) return fail("unknown field \"" + words[1] + "\"");
    if (*from == *to) return fail("source and destination are the same field");
    return GameMove{*from, *to};
}

}  // namespace ibpt::console
