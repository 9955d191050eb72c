#include "ibpt/protocol.hpp"

#include <array>

namespace ibpt::wire {

using namespace codec;

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {
    "hello", "rpc_request", "rpc_response", "subscribe", "publish", "ping", "pong",
};

constexpr std::array<std::string_view, 4> kPeerRoleNames = {
    "PlayerOne", "PlayerTwo", "Observer", "ProductionUnit",
};

std::optional<Kind> parse_kind(std::string_view s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == s) return static_cast<Kind>(i);
    return std::nullopt;
}

const Json& payload_of(const Json& j) {
    static const Json empty = Json::object();
    auto it = j.find("payload");
    return it == j.end() ? empty : *it;
}

}  // namespace

std::string_view to_string(Kind k) noexcept { return kKindNames[static_cast<std::size_t>(k)]; }

std::string_view to_string(PeerRole r) noexcept { return kPeerRoleNames[static_cast<std::size_t>(r)]; }

std::optional<PeerRole> parse_peer_role(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kPeerRoleNames.size(); ++i)
        if (kPeerRoleNames[i] == s) return static_cast<PeerRole>(i);
    return std::nullopt;
}

std::optional<PlayerRole> as_player_role(PeerRole r) noexcept {
    switch (r) {
        case PeerRole::PlayerOne: return PlayerRole::PlayerOne;
        case PeerRole::PlayerTwo: return PlayerRole::PlayerTwo;
        case PeerRole::Observer: return PlayerRole::Observer;
        case PeerRole::ProductionUnit: return std::nullopt;
    }
    return std::nullopt;
}

std::optional<PeerRole> as_peer_role(PlayerRole r) noexcept {
    switch (r) {
        case PlayerRole::PlayerOne: return PeerRole::PlayerOne;
        case PlayerRole::PlayerTwo: return PeerRole::PlayerTwo;
        case PlayerRole::Observer: return PeerRole::Observer;
    }
    return std::nullopt;
}

Json encode(const PeerIdentity& id) {
    return Json{{"role", std::string(to_string(id.role))},
                {"name", id.name},
                {"protocol_version", id.protocol_version}};
}

PeerIdentity decode_identity(const Json& j) {
    const std::string path = "payload";
    require_object(j, path);
    reject_unknown(j, {"role", "name", "protocol_version"}, path);
    PeerIdentity id;
    auto role = as_string(member(j, "role", path), join(path, "role"));
    auto r = parse_peer_role(role);
    if (!r) throw DecodeError(join(path, "role"), "unknown peer role '" + role + "'");
    id.role = *r;
    id.name = as_string(member(j, "name", path), join(path, "name"));
    id.protocol_version = as_string(member(j, "protocol_version", path), join(path, "protocol_version"));
    return id;
}

Json to_json(const WireMessage& m) {
    Json j = Json::object();
    j["kind"] = std::string(to_string(m.kind));
    switch (m.kind) {
        case Kind::Hello:
            j["id"] = m.id;
            j["payload"] = m.payload;
            break;
        case Kind::RpcRequest:
            j["id"] = m.id;
            j["method"] = m.method;
            j["payload"] = m.payload;
            break;
        case Kind::RpcResponse:
            j["id"] = m.id;
            j["status"] = ibpt::encode(m.status);
            j["payload"] = m.payload;
            break;
        case Kind::Subscribe:
            j["id"] = m.id;
            j["topic"] = m.topic;
            break;
        case Kind::Publish:
            j["topic"] = m.topic;
            j["seq"] = m.seq;
            j["payload"] = m.payload;
            break;
        case Kind::Ping:
        case Kind::Pong:
            j["id"] = m.id;
            break;
    }
    return j;
}

WireMessage from_json(const Json& j) {
    try {
        require_object(j, "");
        auto kind_text = as_string(member(j, "kind", ""), "kind");
        auto kind = parse_kind(kind_text);
        if (!kind) throw ProtocolError("unknown kind '" + kind_text + "'");
        WireMessage m;
        m.kind = *kind;
        switch (m.kind) {
            case Kind::Hello:
                reject_unknown(j, {"kind", "id", "payload"}, "");
                m.id = as_u64(member(j, "id", ""), "id");
                m.payload = payload_of(j);
                break;
            case Kind::RpcRequest:
                reject_unknown(j, {"kind", "id", "method", "payload"}, "");
                m.id = as_u64(member(j, "id", ""), "id");
                m.method = as_string(member(j, "method", ""), "method");
                m.payload = payload_of(j);
                break;
            case Kind::RpcResponse:
                reject_unknown(j, {"kind", "id", "status", "payload"}, "");
                m.id = as_u64(member(j, "id", ""), "id");
                m.status = decode<StatusCode>(member(j, "status", ""), "status");
                m.payload = payload_of(j);
                break;
            case Kind::Subscribe:
                reject_unknown(j, {"kind", "id", "topic"}, "");
                m.id = as_u64(member(j, "id", ""), "id");
                m.topic = as_string(member(j, "topic", ""), "topic");
                break;
            case Kind::Publish:
                reject_unknown(j, {"kind", "topic", "seq", "payload"}, "");
                m.topic = as_string(member(j, "topic", ""), "topic");
                m.seq = as_u64(member(j, "seq", ""), "seq");
                m.payload = payload_of(j);
                break;
            case Kind::Ping:
            case Kind::Pong:
                reject_unknown(j, {"kind", "id"}, "");
                m.id = as_u64(member(j, "id", ""), "id");
                break;
        }
        return m;
    } catch (const DecodeError& e) {
        throw ProtocolError(std::string("schema violation: ") + e.what());
    }
}

std::string to_body(const WireMessage& m) { return to_json(m).dump(); }

WireMessage from_body(std::string_view body) {
    if (body.size() > kMaxFrameBody) throw ProtocolError("frame too large");
    Json j = Json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded()) throw ProtocolError("malformed JSON");
    return from_json(j);
}

std::uint32_t read_length_prefix(std::span<const std::uint8_t, 4> p) noexcept {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::vector<std::uint8_t> frame(const WireMessage& m) {
    auto body = to_body(m);
    if (body.size() > kMaxFrameBody) throw ProtocolError("frame too large");
    const auto n = static_cast<std::uint32_t>(body.size());
    std::vector<std::uint8_t> out;
    out.reserve(4 + body.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

WireMessage deframe(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ProtocolError("truncated length prefix");
    auto n = read_length_prefix(bytes.first<4>());
    if (n > kMaxFrameBody) throw ProtocolError("frame too large");
    if (bytes.size() - 4 < n) throw ProtocolError("truncated frame body");
    if (bytes.size() - 4 > n) throw ProtocolError("trailing bytes after frame");
    auto body = bytes.subspan(4, n);
    return from_body(std::string_view(reinterpret_cast<const char*>(body.data()), body.size()));
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
    if (offset_ > 0 && offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    }
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<WireMessage> FrameDecoder::next() {
    if (buffered() < 4) return std::nullopt;
    auto prefix = std::span<const std::uint8_t>(buffer_).subspan(offset_, 4);
    auto n = read_length_prefix(prefix.first<4>());
    if (n > kMaxFrameBody) throw ProtocolError("frame too large");
    if (buffered() < 4 + std::size_t{n}) return std::nullopt;
    auto body = std::string_view(reinterpret_cast<const char*>(buffer_.data() + offset_ + 4), n);
    offset_ += 4 + n;
    auto m = from_body(body);
    if (offset_ > 64 * 1024 && offset_ * 2 > buffer_.size()) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
        offset_ = 0;
    }
    return m;
}

}  // namespace ibpt::wire
