#pragma once

// Canonical JSON form of the information model. Decoding is strict: unknown
// members, missing members and out-of-range values raise DecodeError with a
// path such as "board[3].occupation".

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ibpt/model.hpp"

namespace ibpt {

using Json = nlohmann::json;

class DecodeError : public std::runtime_error {
public:
    DecodeError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

Json encode(GameField f);
Json encode(Occupation o);
Json encode(PlayerRole r);
Json encode(StatusCode s);
Json encode(const GameMove& m);
Json encode(const GameFieldState& s);
Json encode(const GameBoard& b);
Json encode(const GameState& s);

template <typename T>
T decode(const Json& j, const std::string& path = {});

template <> GameField decode<GameField>(const Json& j, const std::string& path);
template <> Occupation decode<Occupation>(const Json& j, const std::string& path);
template <> PlayerRole decode<PlayerRole>(const Json& j, const std::string& path);
template <> StatusCode decode<StatusCode>(const Json& j, const std::string& path);
template <> GameMove decode<GameMove>(const Json& j, const std::string& path);
template <> GameFieldState decode<GameFieldState>(const Json& j, const std::string& path);
template <> GameBoard decode<GameBoard>(const Json& j, const std::string& path);
template <> GameState decode<GameState>(const Json& j, const std::string& path);

/// Compact single-line JSON text.
template <typename T>
std::string encode_text(const T& v) {
    return encode(v).dump();
}

/// Parses text and decodes; malformed JSON is reported as DecodeError at the root.
template <typename T>
T decode_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw DecodeError("", std::string("malformed JSON: ") + e.what());
    }
    return decode<T>(j, "");
}

namespace codec {

// Helpers shared by the other modules' codecs.
const Json& require_object(const Json& j, const std::string& path);
void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& path);
const Json& member(const Json& j, const char* name, const std::string& path);
std::string join(const std::string& path, const char* name);
std::string index(const std::string& path, std::size_t i);
std::uint64_t as_u64(const Json& j, const std::string& path);
std::int64_t as_i64(const Json& j, const std::string& path);
double as_double(const Json& j, const std::string& path);
std::string as_string(const Json& j, const std::string& path);

}  // namespace codec

}  // namespace ibpt
