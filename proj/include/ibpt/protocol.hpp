#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibpt/codec.hpp"

namespace ibpt::wire {

inline constexpr const char* kProtocolVersion = "ibpt/1";
inline constexpr std::size_t kMaxFrameBody = 1024 * 1024;

enum class Kind : std::uint8_t { Hello, RpcRequest, RpcResponse, Subscribe, Publish, Ping, Pong };

enum class PeerRole : std::uint8_t { PlayerOne, PlayerTwo, Observer, ProductionUnit };

struct PeerIdentity {
    PeerRole role = PeerRole::Observer;
    std::string name;
    std::string protocol_version = kProtocolVersion;

    friend bool operator==(const PeerIdentity&, const PeerIdentity&) = default;
};

// One envelope for every interaction. Which members are meaningful depends on
// kind; the codec only emits and accepts those:
//   hello        id, payload (PeerIdentity)
//   rpc_request  id, method, payload
//   rpc_response id, status, payload
//   subscribe    id, topic
//   publish      topic, seq, payload
//   ping / pong  id
// hello and subscribe are answered with an rpc_response carrying the same id.
struct WireMessage {
    Kind kind = Kind::Ping;
    std::uint64_t id = 0;
    std::string topic;
    std::uint64_t seq = 0;
    std::string method;
    StatusCode status = StatusCode::Good;
    Json payload = Json::object();

    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string_view to_string(Kind k) noexcept;
std::string_view to_string(PeerRole r) noexcept;
std::optional<PeerRole> parse_peer_role(std::string_view s) noexcept;
std::optional<PlayerRole> as_player_role(PeerRole r) noexcept;
std::optional<PeerRole> as_peer_role(PlayerRole r) noexcept;

Json encode(const PeerIdentity& id);
PeerIdentity decode_identity(const Json& j);

Json to_json(const WireMessage& m);
/// Throws ProtocolError on unknown kind or schema violation.
WireMessage from_json(const Json& j);

/// JSON text body (used as-is for WebSocket text frames).
std::string to_body(const WireMessage& m);
/// Throws ProtocolError on malformed JSON, unknown kind, or a body over 1 MiB.
WireMessage from_body(std::string_view body);

/// 4-byte big-endian length prefix followed by the JSON body.
std::vector<std::uint8_t> frame(const WireMessage& m);

/// Decodes exactly one frame; throws ProtocolError on truncation, trailing
/// bytes, oversize, malformed JSON or unknown kind.
WireMessage deframe(std::span<const std::uint8_t> bytes);

/// Incremental decoder for a byte stream that may split or merge frames.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);
    /// Next complete message, if any. Throws ProtocolError on a bad frame.
    std::optional<WireMessage> next();
    std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

private:
    std::vector<std::uint8_t> buffer_;
    std::size_t offset_ = 0;
};

std::uint32_t read_length_prefix(std::span<const std::uint8_t, 4> prefix) noexcept;

}  // namespace ibpt::wire
