#include "ibpt/cell.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace ibpt::cell {

using namespace codec;

namespace {

constexpr const char* kTrayKeys[2] = {"tray1", "tray2"};

Json encode_point(const Point& p) { return Json::array({p.x, p.y, p.z}); }

Point decode_point(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) throw DecodeError(path, "expected [x, y, z]");
    return {as_double(j[0], index(path, 0)), as_double(j[1], index(path, 1)), as_double(j[2], index(path, 2))};
}

std::string_view to_string(FaultOp op) { return op == FaultOp::ExecuteMove ? "executeMove" : "reset"; }
std::string_view to_string(FaultKind k) { return k == FaultKind::DeviceFailure ? "device_failure" : "timeout"; }

Json encode_phase(const PhaseTelemetry& p) {
    Json j{{"sub_phase", std::string(vita::to_string(p.sub_phase))},
           {"started_at", vita::format_timestamp(p.started_at)},
           {"ended_at", vita::format_timestamp(p.ended_at)},
           {"status", ibpt::encode(p.status)}};
    if (p.deviation_mm) j["deviation_mm"] = *p.deviation_mm;
    return j;
}

PhaseTelemetry decode_phase(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"sub_phase", "started_at", "ended_at", "status", "deviation_mm"}, path);
    PhaseTelemetry p;
    auto name = as_string(member(j, "sub_phase", path), join(path, "sub_phase"));
    auto phase = vita::parse_sub_phase(name);
    if (!phase) throw DecodeError(join(path, "sub_phase"), "unknown sub-phase '" + name + "'");
    p.sub_phase = *phase;
    for (auto [key, slot] : {std::pair{"started_at", &p.started_at}, std::pair{"ended_at", &p.ended_at}}) {
        auto t = vita::parse_timestamp(as_string(member(j, key, path), join(path, key)));
        if (!t) throw DecodeError(join(path, key), "bad timestamp");
        *slot = *t;
    }
    p.status = decode<StatusCode>(member(j, "status", path), join(path, "status"));
    if (auto it = j.find("deviation_mm"); it != j.end()) p.deviation_mm = as_double(*it, join(path, "deviation_mm"));
    return p;
}

}  // namespace

void validate(const CellConfig& c) {
    if (c.name.empty()) throw ConfigError("cell name must not be empty");
    for (auto f : canonical_field_order())
        if (!c.field_coordinates.contains(f))
            throw ConfigError("field " + std::string(ibpt::to_string(f)) + " has no coordinate");
    for (const auto& [f, _] : c.field_coordinates)
        if (is_tray(f)) throw ConfigError("trays are configured through tray_slots");
    for (int d : c.sub_phase_duration_ms)
        if (d < 0) throw ConfigError("sub-phase durations must be >= 0");
    if (c.latency_jitter_ms < 0) throw ConfigError("latency_jitter_ms must be >= 0");
    if (c.stall_ms < 0) throw ConfigError("stall_ms must be >= 0");
    if (c.deviation_sigma_mm && *c.deviation_sigma_mm < 0) throw ConfigError("deviation_sigma_mm must be >= 0");
    for (const auto& f : c.fault_plan)
        if (f.at == 0) throw ConfigError("fault_plan ordinals start at 1");
}

CellConfig make_config(std::string name, std::string kinematics, Point origin, double pitch_mm) {
    CellConfig c;
    c.name = std::move(name);
    c.kinematics_label = std::move(kinematics);
    for (auto f : canonical_field_order()) {
        auto label = ibpt::to_string(f);
        double file = label[0] - 'a';
        double rank = label[1] - '1';
        c.field_coordinates[f] = {origin.x + (file - 3) * pitch_mm, origin.y + (rank - 3) * pitch_mm, origin.z};
    }
    for (std::size_t t = 0; t < 2; ++t) {
        double side = t == 0 ? -5.0 : 5.0;
        for (std::size_t s = 0; s < kTraySlots; ++s)
            c.tray_slots[t][s] = {origin.x + side * pitch_mm, origin.y + (static_cast<double>(s) - 4) * pitch_mm * 0.75,
                                  origin.z};
    }
    return c;
}

Json encode(const CellConfig& c) {
    Json fields = Json::object();
    for (const auto& [f, p] : c.field_coordinates) fields[std::string(ibpt::to_string(f))] = encode_point(p);
    Json trays = Json::object();
    for (std::size_t t = 0; t < 2; ++t) {
        Json slots = Json::array();
        for (const auto& p : c.tray_slots[t]) slots.push_back(encode_point(p));
        trays[kTrayKeys[t]] = slots;
    }
    Json durations = Json::object();
    for (auto p : vita::kSubPhases)
        durations[std::string(vita::to_string(p))] = c.sub_phase_duration_ms[static_cast<std::size_t>(p)];
    Json faults = Json::array();
    for (const auto& f : c.fault_plan)
        faults.push_back({{"op", std::string(to_string(f.op))},
                          {"at", f.at},
                          {"kind", std::string(to_string(f.kind))},
                          {"persistent", f.persistent}});
    Json j{{"name", c.name},
           {"kinematics_label", c.kinematics_label},
           {"field_coordinates", fields},
           {"tray_slots", trays},
           {"sub_phase_duration_ms", durations},
           {"latency_jitter_ms", c.latency_jitter_ms},
           {"fault_plan", faults},
           {"stall_ms", c.stall_ms}};
    if (c.deviation_sigma_mm) j["deviation_sigma_mm"] = *c.deviation_sigma_mm;
    if (!c.server.empty()) j["server"] = c.server;
    return j;
}

namespace {

CellConfig decode_config(const Json& j) {
    const std::string root;
    require_object(j, root);
    reject_unknown(j,
                   {"name", "kinematics_label", "field_coordinates", "tray_slots", "geometry", "sub_phase_duration_ms",
                    "latency_jitter_ms", "fault_plan", "deviation_sigma_mm", "stall_ms", "server"},
                   root);
    CellConfig c;
    auto name = as_string(member(j, "name", root), "name");
    std::string kinematics = "articulated";
    if (auto it = j.find("kinematics_label"); it != j.end()) kinematics = as_string(*it, "kinematics_label");

    // "geometry": {"origin": [x,y,z], "pitch_mm": p} generates the layout;
    // explicit field_coordinates / tray_slots override it entry by entry.
    if (auto it = j.find("geometry"); it != j.end()) {
        require_object(*it, "geometry");
        reject_unknown(*it, {"origin", "pitch_mm"}, "geometry");
        auto origin = decode_point(member(*it, "origin", "geometry"), "geometry.origin");
        auto pitch = as_double(member(*it, "pitch_mm", "geometry"), "geometry.pitch_mm");
        c = make_config(name, kinematics, origin, pitch);
    } else {
        c.name = name;
        c.kinematics_label = kinematics;
    }
    if (auto it = j.find("field_coordinates"); it != j.end()) {
        require_object(*it, "field_coordinates");
        for (const auto& [key, value] : it->items()) {
            auto p = join("field_coordinates", key.c_str());
            auto f = parse_field(key);
            if (!f || is_tray(*f)) throw DecodeError(p, "not a board field");
            c.field_coordinates[*f] = decode_point(value, p);
        }
    }
    if (auto it = j.find("tray_slots"); it != j.end()) {
        require_object(*it, "tray_slots");
        reject_unknown(*it, {"tray1", "tray2"}, "tray_slots");
        for (std::size_t t = 0; t < 2; ++t) {
            auto p = join("tray_slots", kTrayKeys[t]);
            const auto& slots = member(*it, kTrayKeys[t], "tray_slots");
            if (!slots.is_array() || slots.size() != kTraySlots) throw DecodeError(p, "expected 9 slots");
            for (std::size_t s = 0; s < kTraySlots; ++s) c.tray_slots[t][s] = decode_point(slots[s], index(p, s));
        }
    } else if (!j.contains("geometry")) {
        throw DecodeError("tray_slots", "missing field");
    }
    if (auto it = j.find("sub_phase_duration_ms"); it != j.end()) {
        const std::string p = "sub_phase_duration_ms";
        require_object(*it, p);
        reject_unknown(*it, {"PickUp", "MoveToken", "PlaceToken"}, p);
        for (auto phase : vita::kSubPhases) {
            auto key = std::string(vita::to_string(phase));
            if (auto v = it->find(key); v != it->end())
                c.sub_phase_duration_ms[static_cast<std::size_t>(phase)] =
                    static_cast<int>(as_i64(*v, join(p, key.c_str())));
        }
    }
    if (auto it = j.find("latency_jitter_ms"); it != j.end())
        c.latency_jitter_ms = static_cast<int>(as_i64(*it, "latency_jitter_ms"));
    if (auto it = j.find("stall_ms"); it != j.end()) c.stall_ms = static_cast<int>(as_i64(*it, "stall_ms"));
    if (auto it = j.find("deviation_sigma_mm"); it != j.end())
        c.deviation_sigma_mm = as_double(*it, "deviation_sigma_mm");
    if (auto it = j.find("server"); it != j.end()) c.server = as_string(*it, "server");
    if (auto it = j.find("fault_plan"); it != j.end()) {
        if (!it->is_array()) throw DecodeError("fault_plan", "expected array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            auto p = index("fault_plan", i);
            const auto& e = (*it)[i];
            require_object(e, p);
            reject_unknown(e, {"op", "at", "kind", "persistent"}, p);
            FaultEntry f;
            auto op = as_string(member(e, "op", p), join(p, "op"));
            if (op == "executeMove") f.op = FaultOp::ExecuteMove;
            else if (op == "reset") f.op = FaultOp::Reset;
            else throw DecodeError(join(p, "op"), "expected executeMove or reset");
            f.at = as_u64(member(e, "at", p), join(p, "at"));
            auto kind = as_string(member(e, "kind", p), join(p, "kind"));
            if (kind == "device_failure") f.kind = FaultKind::DeviceFailure;
            else if (kind == "timeout") f.kind = FaultKind::Timeout;
            else throw DecodeError(join(p, "kind"), "expected device_failure or timeout");
            if (auto ps = e.find("persistent"); ps != e.end()) {
                if (!ps->is_boolean()) throw DecodeError(join(p, "persistent"), "expected boolean");
                f.persistent = ps->get<bool>();
            }
            c.fault_plan.push_back(f);
        }
    }
    return c;
}

}  // namespace

CellConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cell config " + path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": malformed JSON");
    try {
        auto c = decode_config(j);
        validate(c);
        return c;
    } catch (const DecodeError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

int TrayState::count() const noexcept { return static_cast<int>(std::count(slots_.begin(), slots_.end(), true)); }

std::optional<std::size_t> TrayState::pick_slot() const noexcept {
    for (std::size_t i = kTraySlots; i-- > 0;)
        if (slots_[i]) return i;
    return std::nullopt;
}

std::optional<std::size_t> TrayState::place_slot() const noexcept {
    for (std::size_t i = 0; i < kTraySlots; ++i)
        if (!slots_[i]) return i;
    return std::nullopt;
}

Json encode(const ExecuteReport& r) {
    Json phases = Json::array();
    for (const auto& p : r.phases) phases.push_back(encode_phase(p));
    return Json{{"status", ibpt::encode(r.status)}, {"phases", phases}, {"board", ibpt::encode(r.board)}};
}

ExecuteReport decode_report(const Json& j) {
    const std::string root;
    require_object(j, root);
    reject_unknown(j, {"status", "phases", "board"}, root);
    ExecuteReport r;
    r.status = decode<StatusCode>(member(j, "status", root), "status");
    const auto& phases = member(j, "phases", root);
    if (!phases.is_array()) throw DecodeError("phases", "expected array");
    for (std::size_t i = 0; i < phases.size(); ++i) r.phases.push_back(decode_phase(phases[i], index("phases", i)));
    r.board = decode<GameBoard>(member(j, "board", root), "board");
    return r;
}

RobotCell::RobotCell(CellConfig config, std::uint64_t seed, Sleeper sleep)
    : config_(std::move(config)), rng_(seed), sleep_(std::move(sleep)) {
    validate(config_);
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

int RobotCell::tray_tokens() const noexcept { return trays_[0].count() + trays_[1].count(); }

std::optional<FaultKind> RobotCell::fault_for(FaultOp op, std::uint64_t ordinal) const {
    for (const auto& f : config_.fault_plan) {
        if (f.op != op) continue;
        if (f.at == ordinal || (f.persistent && ordinal >= f.at)) return f.kind;
    }
    return std::nullopt;
}

Point RobotCell::field_point(GameField f) const { return config_.field_coordinates.at(f); }

Placement RobotCell::resolve_coordinates(const GameMove& m) const {
    Placement out;
    if (is_tray(m.from)) {
        auto t = m.from == GameField::Tray1 ? 0 : 1;
        auto slot = trays_[t].pick_slot();
        if (!slot) throw CellError(std::string(ibpt::to_string(m.from)) + " is empty");
        out.pick = config_.tray_slots[t][*slot];
    } else {
        out.pick = field_point(m.from);
    }
    if (is_tray(m.to)) {
        auto t = m.to == GameField::Tray1 ? 0 : 1;
        auto slot = trays_[t].place_slot();
        if (!slot) throw CellError(std::string(ibpt::to_string(m.to)) + " is full");
        out.place = config_.tray_slots[t][*slot];
    } else {
        out.place = field_point(m.to);
    }
    return out;
}

// A token keeps its colour: Tray1 only ever exchanges PlayerOne tokens with
// the board, Tray2 PlayerTwo tokens.
StatusCode RobotCell::check_shadow(const GameMove& m) const {
    if (m.from == m.to) return StatusCode::BadInvalidArgument;
    if (is_tray(m.from) && is_tray(m.to)) return StatusCode::BadInvalidArgument;
    Occupation token;
    if (is_tray(m.from)) {
        if (trays_[m.from == GameField::Tray1 ? 0 : 1].count() == 0) return StatusCode::BadInvalidState;
        token = m.from == GameField::Tray1 ? Occupation::PlayerOne : Occupation::PlayerTwo;
    } else {
        token = board_.at(m.from);
        if (token == Occupation::Empty) return StatusCode::BadInvalidState;
    }
    if (is_tray(m.to)) {
        auto owner = m.to == GameField::Tray1 ? Occupation::PlayerOne : Occupation::PlayerTwo;
        if (token != owner) return StatusCode::BadInvalidState;
        if (trays_[m.to == GameField::Tray1 ? 0 : 1].count() == static_cast<int>(kTraySlots))
            return StatusCode::BadInvalidState;
    } else if (board_.at(m.to) != Occupation::Empty) {
        return StatusCode::BadInvalidState;
    }
    return StatusCode::Good;
}

ExecuteReport RobotCell::execute_move(const GameMove& m) {
    const auto ordinal = ++execute_calls_;
    ExecuteReport report;
    report.board = board_;
    report.status = check_shadow(m);
    if (!is_good(report.status)) return report;

    if (auto fault = fault_for(FaultOp::ExecuteMove, ordinal)) {
        if (*fault == FaultKind::Timeout) {
            sleep_(std::chrono::milliseconds(config_.stall_ms));
            report.status = StatusCode::BadTimeout;
            return report;
        }
        auto t = vita::now_ms();
        report.phases.push_back({vita::SubPhase::PickUp, t, t, StatusCode::BadDeviceFailure, std::nullopt});
        report.status = StatusCode::BadDeviceFailure;
        return report;
    }

    const auto where = resolve_coordinates(m);
    spdlog::debug("{}: {} pick ({:.1f},{:.1f},{:.1f}) place ({:.1f},{:.1f},{:.1f})", config_.name, to_string(m),
                  where.pick.x, where.pick.y, where.pick.z, where.place.x, where.place.y, where.place.z);

    auto clock = vita::now_ms();
    for (auto phase : vita::kSubPhases) {
        const int base = config_.sub_phase_duration_ms[static_cast<std::size_t>(phase)];
        const int lo = std::max(0, base - config_.latency_jitter_ms);
        const int hi = base + config_.latency_jitter_ms;
        const auto duration = std::chrono::milliseconds(std::uniform_int_distribution<int>(lo, hi)(rng_));
        PhaseTelemetry p{phase, clock, clock + duration, StatusCode::Good, std::nullopt};
        if (config_.deviation_sigma_mm) {
            std::normal_distribution<double> dist(0.0, *config_.deviation_sigma_mm);
            p.deviation_mm = std::abs(dist(rng_));
        }
        if (duration.count() > 0) sleep_(duration);
        clock = p.ended_at;
        report.phases.push_back(p);
    }

    Occupation token;
    if (is_tray(m.from)) {
        auto t = m.from == GameField::Tray1 ? 0 : 1;
        trays_[t].set(*trays_[t].pick_slot(), false);
        token = t == 0 ? Occupation::PlayerOne : Occupation::PlayerTwo;
    } else {
        token = board_.at(m.from);
        board_.set(m.from, Occupation::Empty);
    }
    if (is_tray(m.to)) {
        auto t = m.to == GameField::Tray1 ? 0 : 1;
        trays_[t].set(*trays_[t].place_slot(), true);
    } else {
        board_.set(m.to, token);
    }
    report.board = board_;
    return report;
}

StatusCode RobotCell::reset() {
    const auto ordinal = ++reset_calls_;
    if (auto fault = fault_for(FaultOp::Reset, ordinal)) {
        if (*fault == FaultKind::Timeout) {
            sleep_(std::chrono::milliseconds(config_.stall_ms));
            return StatusCode::BadTimeout;
        }
        return StatusCode::BadDeviceFailure;
    }
    board_ = GameBoard{};
    trays_[0].fill();
    trays_[1].fill();
    return StatusCode::Good;
}

CellClient::CellClient(CellConfig config, net::Endpoint server, std::uint64_t seed, net::HeartbeatConfig hb)
    : server_(std::move(server)),
      hb_(hb),
      cell_(std::move(config), seed, [this](std::chrono::milliseconds d) {
          std::unique_lock lock(wait_mutex_);
          wait_cv_.wait_for(lock, d, [this] { return stopping_.load(); });
      }) {}

CellClient::~CellClient() {
    stop();
    std::shared_ptr<net::Peer> peer;
    {
        std::lock_guard lock(wait_mutex_);
        peer = std::move(peer_);
    }
    peer.reset();
    runtime_.stop();
}

net::RpcResult CellClient::handle(const wire::WireMessage& m) {
    if (m.kind != wire::Kind::RpcRequest) return {StatusCode::BadNotFound, Json::object()};
    std::lock_guard lock(mutex_);
    if (m.method == "executeMove") {
        GameMove move;
        try {
            move = decode<GameMove>(m.payload, "payload");
        } catch (const DecodeError& e) {
            return {StatusCode::BadInvalidArgument, Json{{"error", e.what()}}};
        }
        auto report = cell_.execute_move(move);
        spdlog::info("{}: executeMove {} -> {}", cell_.config().name, to_string(move), ibpt::to_string(report.status));
        return {report.status, encode(report)};
    }
    if (m.method == "reset") {
        auto status = cell_.reset();
        spdlog::info("{}: reset -> {}", cell_.config().name, ibpt::to_string(status));
        return {status, Json{{"board", ibpt::encode(cell_.board())}}};
    }
    return {StatusCode::BadNotFound, Json::object()};
}

StatusCode CellClient::connect() {
    std::shared_ptr<net::Connection> conn;
    try {
        conn = net::connect(runtime_, server_, hb_);
    } catch (const std::exception& e) {
        spdlog::warn("{}: {}", cell_.config().name, e.what());
        return StatusCode::BadSessionClosed;
    }
    auto peer = net::Peer::create(
        conn, [this](const wire::WireMessage& m) { return handle(m); },
        [this](const std::string& reason) {
            spdlog::warn("{}: connection closed ({})", cell_.config().name, reason);
            wait_cv_.notify_all();
        });
    wire::PeerIdentity id{wire::PeerRole::ProductionUnit, cell_.config().name, wire::kProtocolVersion};
    auto r = peer->hello(id);
    if (!is_good(r.status)) {
        peer->close();
        return r.status;
    }
    std::lock_guard lock(wait_mutex_);
    peer_ = std::move(peer);
    return StatusCode::Good;
}

bool CellClient::connected() const {
    std::lock_guard lock(wait_mutex_);
    return peer_ && peer_->is_open();
}

void CellClient::run() {
    auto backoff = std::chrono::milliseconds(200);
    while (!stopping_) {
        if (!connected()) {
            if (is_good(connect())) {
                backoff = std::chrono::milliseconds(200);
            } else {
                std::unique_lock lock(wait_mutex_);
                wait_cv_.wait_for(lock, backoff, [this] { return stopping_.load(); });
                backoff = std::min(backoff * 2, std::chrono::milliseconds(5000));
                continue;
            }
        }
        std::unique_lock lock(wait_mutex_);
        wait_cv_.wait_for(lock, std::chrono::milliseconds(500),
                          [this] { return stopping_.load() || !peer_ || !peer_->is_open(); });
    }
}

void CellClient::stop() {
    stopping_ = true;
    wait_cv_.notify_all();
    std::lock_guard lock(wait_mutex_);
    if (peer_) peer_->close();
}

GameBoard CellClient::board() const {
    std::lock_guard lock(mutex_);
    return cell_.board();
}

int CellClient::tray_tokens() const {
    std::lock_guard lock(mutex_);
    return cell_.tray_tokens();
}

}  // namespace ibpt::cell
