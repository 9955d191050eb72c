#include "ibpt/codec.hpp"

#include <algorithm>
#include <cmath>

namespace ibpt {

namespace codec {

std::string join(const std::string& path, const char* name) {
    return path.empty() ? std::string(name) : path + "." + name;
}

std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

const Json& require_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw DecodeError(path, "expected object");
    return j;
}

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    for (const auto& [key, _] : j.items()) {
        bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw DecodeError(join(path, key.c_str()), "unknown field");
    }
}

const Json& member(const Json& j, const char* name, const std::string& path) {
    auto it = j.find(name);
    if (it == j.end()) throw DecodeError(join(path, name), "missing field");
    return *it;
}

std::uint64_t as_u64(const Json& j, const std::string& path) {
    if (!j.is_number_unsigned()) {
        if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
        throw DecodeError(path, "expected non-negative integer");
    }
    return j.get<std::uint64_t>();
}

std::int64_t as_i64(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw DecodeError(path, "expected integer");
    return j.get<std::int64_t>();
}

double as_double(const Json& j, const std::string& path) {
    if (!j.is_number()) throw DecodeError(path, "expected number");
    double v = j.get<double>();
    if (!std::isfinite(v)) throw DecodeError(path, "expected finite number");
    return v;
}

std::string as_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw DecodeError(path, "expected string");
    return j.get<std::string>();
}

}  // namespace codec

using namespace codec;

Json encode(GameField f) { return std::string(to_string(f)); }
Json encode(Occupation o) { return std::string(to_string(o)); }
Json encode(PlayerRole r) { return std::string(to_string(r)); }
Json encode(StatusCode s) { return std::string(to_string(s)); }

Json encode(const GameMove& m) {
    Json j = Json::object();
    j["from"] = encode(m.from);
    j["to"] = encode(m.to);
    return j;
}

Json encode(const GameFieldState& s) {
    Json j = Json::object();
    j["field"] = encode(s.field);
    j["occupation"] = encode(s.occupation);
    return j;
}

Json encode(const GameBoard& b) {
    Json j = Json::array();
    for (const auto& s : b.fields()) j.push_back(encode(s));
    return j;
}

Json encode(const GameState& s) {
    Json j = Json::object();
    j["board"] = encode(s.board);
    j["next"] = encode(s.next);
    return j;
}

template <>
GameField decode<GameField>(const Json& j, const std::string& path) {
    auto f = parse_field(as_string(j, path));
    if (!f) throw DecodeError(path, "unknown game field '" + j.get<std::string>() + "'");
    return *f;
}

template <>
Occupation decode<Occupation>(const Json& j, const std::string& path) {
    auto o = parse_occupation(as_string(j, path));
    if (!o) throw DecodeError(path, "unknown occupation '" + j.get<std::string>() + "'");
    return *o;
}

template <>
PlayerRole decode<PlayerRole>(const Json& j, const std::string& path) {
    auto r = parse_role(as_string(j, path));
    if (!r) throw DecodeError(path, "unknown player role '" + j.get<std::string>() + "'");
    return *r;
}

template <>
StatusCode decode<StatusCode>(const Json& j, const std::string& path) {
    auto s = parse_status(as_string(j, path));
    if (!s) throw DecodeError(path, "unknown status code '" + j.get<std::string>() + "'");
    return *s;
}

template <>
GameMove decode<GameMove>(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"from", "to"}, path);
    GameMove m{decode<GameField>(member(j, "from", path), join(path, "from")),
               decode<GameField>(member(j, "to", path), join(path, "to"))};
    if (m.from == m.to) throw DecodeError(path, "move source equals destination");
    return m;
}

template <>
GameFieldState decode<GameFieldState>(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"field", "occupation"}, path);
    GameFieldState s{decode<GameField>(member(j, "field", path), join(path, "field")),
                     decode<Occupation>(member(j, "occupation", path), join(path, "occupation"))};
    if (is_tray(s.field)) throw DecodeError(join(path, "field"), "tray is not a board field");
    return s;
}

template <>
GameBoard decode<GameBoard>(const Json& j, const std::string& path) {
    if (!j.is_array()) throw DecodeError(path, "expected array");
    if (j.size() != kBoardFieldCount)
        throw DecodeError(path, "expected 24 entries, got " + std::to_string(j.size()));
    GameBoard b;
    std::array<bool, kBoardFieldCount> seen{};
    for (std::size_t i = 0; i < j.size(); ++i) {
        auto p = index(path, i);
        auto s = decode<GameFieldState>(j[i], p);
        if (seen[field_index(s.field)]) throw DecodeError(join(p, "field"), "duplicate field");
        seen[field_index(s.field)] = true;
        b.set(s.field, s.occupation);
    }
    if (b.count(Occupation::PlayerOne) > kTokensPerPlayer || b.count(Occupation::PlayerTwo) > kTokensPerPlayer)
        throw DecodeError(path, "more than 9 tokens of one player");
    return b;
}

template <>
GameState decode<GameState>(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"board", "next"}, path);
    return {decode<GameBoard>(member(j, "board", path), join(path, "board")),
            decode<PlayerRole>(member(j, "next", path), join(path, "next"))};
}

}  // namespace ibpt
