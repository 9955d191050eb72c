#include "ibpt/rules.hpp"

#include <algorithm>
#include <stdexcept>

namespace ibpt::rules {

namespace {

bool forms_mill(const GameBoard& b, GameField at, Occupation who) {
    for (const auto& line : mills_containing(at)) {
        if (std::all_of(line.begin(), line.end(), [&](GameField f) { return b.at(f) == who; })) return true;
    }
    return false;
}

void add_board_moves(const Session& s, PlayerRole p, std::vector<GameMove>& out) {
    const auto& board = s.state.board;
    const auto own = occupation_of(p);
    const auto ph = phase(s, p);
    for (auto from : canonical_field_order()) {
        if (board.at(from) != own) continue;
        if (ph == Phase::Flying) {
            for (auto to : canonical_field_order())
                if (board.at(to) == Occupation::Empty) out.push_back({from, to});
        } else {
            for (auto to : adjacent(from))
                if (board.at(to) == Occupation::Empty) out.push_back({from, to});
        }
    }
}

// Turn passes to `next`; decides termination for the player about to move.
void pass_turn(Session& s, PlayerRole next) {
    s.state.next = next;
    const auto mover = opponent(next);
    const auto mover_wins = mover == PlayerRole::PlayerOne ? Outcome::WinPlayerOne : Outcome::WinPlayerTwo;
    if (s.unplaced(next) == 0 && s.on_board(next) < 3) {
        s.outcome = mover_wins;
    } else if (legal_moves(s).empty()) {
        s.outcome = mover_wins;
    } else if (s.quiet_moves >= s.draw_threshold) {
        s.outcome = Outcome::Draw;
    }
}

}  // namespace

Session new_session(int draw_threshold) {
    Session s;
    s.draw_threshold = draw_threshold;
    return s;
}

Phase phase(const Session& s, PlayerRole p) {
    if (s.unplaced(p) > 0) return Phase::Placement;
    if (s.on_board(p) == 3) return Phase::Flying;
    return Phase::Movement;
}

bool in_mill(const GameBoard& b, GameField f) {
    auto who = b.at(f);
    return who != Occupation::Empty && forms_mill(b, f, who);
}

std::vector<GameField> capturable(const Session& s, PlayerRole capturer) {
    const auto& board = s.state.board;
    const auto victim = occupation_of(opponent(capturer));
    std::vector<GameField> all, free;
    for (auto f : canonical_field_order()) {
        if (board.at(f) != victim) continue;
        all.push_back(f);
        if (!in_mill(board, f)) free.push_back(f);
    }
    return free.empty() ? all : free;
}

std::vector<GameMove> legal_moves(const Session& s) {
    std::vector<GameMove> out;
    if (s.outcome) return out;
    const auto p = s.state.next;
    if (!is_player(p)) return out;
    if (s.pending_capture) {
        const auto tray = tray_of(opponent(*s.pending_capture));
        for (auto f : capturable(s, *s.pending_capture)) out.push_back({f, tray});
        return out;
    }
    if (phase(s, p) == Phase::Placement) {
        for (auto to : canonical_field_order())
            if (s.state.board.at(to) == Occupation::Empty) out.push_back({tray_of(p), to});
        return out;
    }
    add_board_moves(s, p, out);
    std::sort(out.begin(), out.end());
    return out;
}

StatusCode validate(const Session& s, const GameMove& m, PlayerRole caller) {
    if (s.outcome) return StatusCode::BadInvalidState;
    if (!is_player(caller) || caller != s.state.next) return StatusCode::BadInvalidState;
    if (m.from == m.to) return StatusCode::BadInvalidArgument;
    auto moves = legal_moves(s);
    if (!std::binary_search(moves.begin(), moves.end(), m)) return StatusCode::BadInvalidArgument;
    return StatusCode::Good;
}

Session apply_move(const Session& s, const GameMove& m) {
    if (validate(s, m, s.state.next) != StatusCode::Good)
        throw std::invalid_argument("illegal move " + to_string(m));

    Session n = s;
    const auto mover = s.state.next;
    const auto foe = opponent(mover);
    ++n.move_number;

    if (s.pending_capture) {
        n.state.board.set(m.from, Occupation::Empty);
        ++n.captured[player_index(foe)];
        n.pending_capture.reset();
        n.quiet_moves = 0;
        pass_turn(n, foe);
        return n;
    }

    const auto own = occupation_of(mover);
    if (is_tray(m.from)) {
        --n.tray_unplaced[player_index(mover)];
    } else {
        n.state.board.set(m.from, Occupation::Empty);
    }
    n.state.board.set(m.to, own);

    if (forms_mill(n.state.board, m.to, own)) {
        n.quiet_moves = 0;
        if (n.on_board(foe) > 0) {
            n.pending_capture = mover;
            return n;
        }
    } else if (!is_tray(m.from)) {
        ++n.quiet_moves;
    }
    pass_turn(n, foe);
    return n;
}

int mobility(const Session& s, PlayerRole p) {
    if (phase(s, p) == Phase::Placement) {
        return s.state.board.count(Occupation::Empty);
    }
    std::vector<GameMove> moves;
    add_board_moves(s, p, moves);
    return static_cast<int>(moves.size());
}

bool conserves_tokens(const Session& s) {
    for (auto p : {PlayerRole::PlayerOne, PlayerRole::PlayerTwo}) {
        const int i = player_index(p);
        if (s.tray_unplaced[i] < 0 || s.tray_unplaced[i] > kTokensPerPlayer) return false;
        if (s.captured[i] < 0 || s.captured[i] > kTokensPerPlayer) return false;
        if (s.tray_unplaced[i] + s.captured[i] + s.on_board(p) != kTokensPerPlayer) return false;
    }
    return true;
}

std::string_view to_string(Phase p) noexcept {
    switch (p) {
        case Phase::Placement: return "Placement";
        case Phase::Movement: return "Movement";
        case Phase::Flying: return "Flying";
    }
    return "Placement";
}

std::string_view to_string(Outcome o) noexcept {
    switch (o) {
        case Outcome::WinPlayerOne: return "WinPlayerOne";
        case Outcome::WinPlayerTwo: return "WinPlayerTwo";
        case Outcome::Draw: return "Draw";
    }
    return "Draw";
}

Json encode(const Session& s) {
    auto per_player = [](const std::array<int, 2>& v) {
        return Json{{"PlayerOne", v[0]}, {"PlayerTwo", v[1]}};
    };
    Json j = Json::object();
    j["state"] = ibpt::encode(s.state);
    j["phase"] = Json{{"PlayerOne", std::string(to_string(phase(s, PlayerRole::PlayerOne)))},
                      {"PlayerTwo", std::string(to_string(phase(s, PlayerRole::PlayerTwo)))}};
    j["pending_capture"] = s.pending_capture ? ibpt::encode(*s.pending_capture) : Json(nullptr);
    j["tray_unplaced"] = per_player(s.tray_unplaced);
    j["captured"] = per_player(s.captured);
    j["move_number"] = s.move_number;
    j["quiet_moves"] = s.quiet_moves;
    j["draw_threshold"] = s.draw_threshold;
    j["outcome"] = s.outcome ? Json(std::string(to_string(*s.outcome))) : Json(nullptr);
    return j;
}

}  // namespace ibpt::rules

namespace ibpt {

using namespace codec;

namespace {

std::array<int, 2> decode_counts(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"PlayerOne", "PlayerTwo"}, path);
    std::array<int, 2> out{};
    const char* names[] = {"PlayerOne", "PlayerTwo"};
    for (int i = 0; i < 2; ++i) {
        auto p = join(path, names[i]);
        auto v = as_i64(member(j, names[i], path), p);
        if (v < 0 || v > kTokensPerPlayer) throw DecodeError(p, "count out of range 0..9");
        out[i] = static_cast<int>(v);
    }
    return out;
}

}  // namespace

template <>
rules::Session decode<rules::Session>(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"state", "phase", "pending_capture", "tray_unplaced", "captured", "move_number",
                       "quiet_moves", "draw_threshold", "outcome"},
                   path);
    rules::Session s;
    s.state = decode<GameState>(member(j, "state", path), join(path, "state"));
    const auto& pc = member(j, "pending_capture", path);
    if (!pc.is_null()) s.pending_capture = decode<PlayerRole>(pc, join(path, "pending_capture"));
    s.tray_unplaced = decode_counts(member(j, "tray_unplaced", path), join(path, "tray_unplaced"));
    s.captured = decode_counts(member(j, "captured", path), join(path, "captured"));
    s.move_number = as_u64(member(j, "move_number", path), join(path, "move_number"));
    auto quiet = as_i64(member(j, "quiet_moves", path), join(path, "quiet_moves"));
    auto threshold = as_i64(member(j, "draw_threshold", path), join(path, "draw_threshold"));
    if (quiet < 0) throw DecodeError(join(path, "quiet_moves"), "negative");
    if (threshold < 1) throw DecodeError(join(path, "draw_threshold"), "must be positive");
    s.quiet_moves = static_cast<int>(quiet);
    s.draw_threshold = static_cast<int>(threshold);
    const auto& oc = member(j, "outcome", path);
    if (!oc.is_null()) {
        auto text = as_string(oc, join(path, "outcome"));
        bool found = false;
        for (auto o : {rules::Outcome::WinPlayerOne, rules::Outcome::WinPlayerTwo, rules::Outcome::Draw}) {
            if (rules::to_string(o) == text) {
                s.outcome = o;
                found = true;
            }
        }
        if (!found) throw DecodeError(join(path, "outcome"), "unknown outcome '" + text + "'");
    }
    if (!rules::conserves_tokens(s)) throw DecodeError(path, "token counts do not add up to 9 per player");
    const auto& ph = member(j, "phase", path);
    require_object(ph, join(path, "phase"));
    reject_unknown(ph, {"PlayerOne", "PlayerTwo"}, join(path, "phase"));
    for (auto p : {PlayerRole::PlayerOne, PlayerRole::PlayerTwo}) {
        auto name = std::string(to_string(p));
        auto pp = join(join(path, "phase"), name.c_str());
        if (as_string(member(ph, name.c_str(), join(path, "phase")), pp) != rules::to_string(rules::phase(s, p)))
            throw DecodeError(pp, "phase inconsistent with token counts");
    }
    return s;
}

}  // namespace ibpt
