// Acceptance run: one PASS/FAIL line per criterion; exits nonzero on any FAIL.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "engine_oracle.hpp"
#include "ibpt/ai.hpp"
#include "ibpt/cell.hpp"
#include "ibpt/server.hpp"
#include "ibpt/vita.hpp"
#include "process.hpp"
#include "support.hpp"

using namespace ibpt;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned limits.
constexpr int kOraclePlayouts = 10'000;
constexpr auto kOracleBudget = 60s;
constexpr std::uint64_t kPerft[] = {1, 24, 552, 12144};
constexpr int kTwinMinMoves = 40;
constexpr int kTwinMinCaptures = 2;
constexpr auto kTwinBudget = 30s;
constexpr int kPublishes = 1000;
constexpr int kSubscribersPerTransport = 10;
constexpr std::size_t kMinInvalidCases = 20;
constexpr auto kQuietWindow = 30ms;  // time allowed for a stray publication to arrive
constexpr int kAgentDepth = 2;
constexpr auto kEndToEndBudget = 300s;
constexpr double kMeanTolerance = 1e-6;

const std::string kConfigDir = IBPT_CONFIG_DIR;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string temp_path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p.string();
}

GameMove M(const std::string& from, const std::string& to) { return {*parse_field(from), *parse_field(to)}; }

using Move = std::pair<std::string, std::string>;

bool is_capture(const Move& m) { return m.second == "tray1" || m.second == "tray2"; }

// ---------------------------------------------------------------------------
// Rules oracle and token conservation

struct OracleReport {
    int playouts = 0;
    std::uint64_t positions = 0;
    std::uint64_t mismatches = 0;
    std::uint64_t conservation_violations = 0;
    std::string first_mismatch;
    bool perft_ok = true;
    std::string perft_detail;
    double seconds = 0;
};

OracleReport run_oracle() {
    OracleReport r;
    const auto t0 = Clock::now();
    const rules::Session start = rules::new_session();
    const oracle::Game g0;
    for (int d = 1; d <= 3; ++d) {
        std::function<std::uint64_t(const rules::Session&, int)> perft = [&](const rules::Session& s, int depth) {
            if (depth == 0) return std::uint64_t{1};
            std::uint64_t n = 0;
            for (const auto& m : rules::legal_moves(s)) n += perft(rules::apply_move(s, m), depth - 1);
            return n;
        };
        const auto engine = perft(start, d);
        const auto reference = oracle::perft(g0, d);
        r.perft_detail += (d > 1 ? " " : "") + std::string("d") + std::to_string(d) + "=" + std::to_string(engine);
        if (engine != reference || engine != kPerft[d]) r.perft_ok = false;
    }

    std::mt19937_64 rng(20261015);
    for (int game = 0; game < kOraclePlayouts; ++game) {
        auto s = rules::new_session();
        oracle::Game g;
        for (;;) {
            ++r.positions;
            const auto engine = rules::legal_moves(s);
            const auto reference = g.moves();
            if (bridge::as_text(engine) != reference) {
                if (r.mismatches++ == 0)
                    r.first_mismatch = "playout " + std::to_string(game) + " ply " + std::to_string(g.plies);
                break;
            }
            if (engine.empty()) break;
            const auto& m = engine[std::uniform_int_distribution<std::size_t>(0, engine.size() - 1)(rng)];
            s = rules::apply_move(s, m);
            g.play(std::string(to_string(m.from)), std::string(to_string(m.to)));
            if (!rules::conserves_tokens(s) || !g.conserved()) ++r.conservation_violations;
            if (auto d = bridge::diff(s, g); !d.empty()) {
                if (r.mismatches++ == 0) r.first_mismatch = "playout " + std::to_string(game) + ": " + d;
                break;
            }
        }
        ++r.playouts;
    }
    r.seconds = seconds_since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// Scripted game for the twin: an oracle-generated complete game.

std::vector<Move> scripted_game(int* captures) {
    for (std::uint64_t seed = 1;; ++seed) {
        std::mt19937_64 rng(seed);
        oracle::Game g;
        std::vector<Move> script;
        int caps = 0;
        while (g.result < 0) {
            auto moves = g.moves();
            auto m = moves[std::uniform_int_distribution<std::size_t>(0, moves.size() - 1)(rng)];
            caps += is_capture(m);
            script.push_back(m);
            g.play(m.first, m.second);
        }
        if (static_cast<int>(script.size()) >= kTwinMinMoves && caps >= kTwinMinCaptures) {
            *captures = caps;
            return script;
        }
    }
}

std::string run_twin() {
    const auto t0 = Clock::now();
    int captures = 0;
    const auto script = scripted_game(&captures);

    support::Rig rig;
    auto a = cell::make_config("twin-a", "articulated", {250.0, -150.0, 20.0}, 50.0);
    auto b = cell::make_config("twin-b", "scara", {-100.0, 300.0, 5.0}, 35.0);
    expect(a.field_coordinates != b.field_coordinates, "cell layouts should differ");
    auto& ca = rig.add_cell(a, 11);
    auto& cb = rig.add_cell(b, 12);
    support::Client one(rig.tcp()), two(rig.ws());
    expect(one.hello(wire::PeerRole::PlayerOne).status == StatusCode::Good, "hello PlayerOne");
    expect(two.hello(wire::PeerRole::PlayerTwo).status == StatusCode::Good, "hello PlayerTwo");
    expect(rig.server().init_game() == StatusCode::Good, "initGame");
    expect(rig.server().start_game() == StatusCode::Good, "startGame");

    std::uint64_t compared = 0;
    for (const auto& [from, to] : script) {
        auto& mover = rig.server().session().state.next == PlayerRole::PlayerOne ? one : two;
        auto r = mover.call("nextMove", encode(M(from, to)));
        expect(r.status == StatusCode::Good, "nextMove " + from + "->" + to + " " + std::string(to_string(r.status)));
        const auto id = r.payload.at("order_id").get<std::uint64_t>();
        auto o = rig.server().wait_settled(id, 10s);
        expect(o && o->status == StatusCode::Good, "order " + std::to_string(id) + " did not settle GOOD");
        const auto board = rig.server().session().state.board;
        expect(ca.board() == board && cb.board() == board, "cell shadow differs after order " + std::to_string(id));
        expect(o->reported_boards.size() == 2, "missing unit report");
        for (const auto& [_, rb] : o->reported_boards) expect(rb == board, "reported board differs");
        ++compared;
    }
    const auto s = rig.server().session();
    expect(s.outcome.has_value(), "scripted game did not finish");
    expect(ca.board() == cb.board(), "final cell boards differ");
    const double secs = seconds_since(t0);
    expect(secs <= std::chrono::duration<double>(kTwinBudget).count(), "took " + std::to_string(secs) + " s");
    std::ostringstream out;
    out << script.size() << " moves, " << captures << " captures, " << compared << " settled orders compared, outcome "
        << rules::to_string(*s.outcome) << ", " << secs << " s";
    return out.str();
}

// ---------------------------------------------------------------------------
// Protocol ordering

std::string run_ordering() {
    support::EchoServer srv;
    std::vector<std::unique_ptr<support::Client>> clients;
    std::vector<std::unique_ptr<support::Recorder>> recorders;
    for (auto t : {net::Transport::Tcp, net::Transport::WebSocket}) {
        for (int i = 0; i < kSubscribersPerTransport; ++i) {
            clients.push_back(std::make_unique<support::Client>(srv.endpoint(t)));
            recorders.push_back(std::make_unique<support::Recorder>());
            expect(clients.back()->hello(wire::PeerRole::Observer).status == StatusCode::Good, "hello");
        }
    }
    // Subscriptions are issued concurrently.
    std::vector<std::future<StatusCode>> subs;
    for (std::size_t i = 0; i < clients.size(); ++i)
        subs.push_back(std::async(std::launch::async,
                                  [&, i] { return clients[i]->peer().subscribe("T", recorders[i]->handler()); }));
    for (auto& f : subs) expect(f.get() == StatusCode::Good, "subscribe");

    for (int i = 0; i < kPublishes; ++i) srv.topics.publish("T", Json{{"i", i}});
    for (std::size_t i = 0; i < recorders.size(); ++i)
        expect(support::eventually([&] { return recorders[i]->size() >= kPublishes; }, 30s),
               "subscriber " + std::to_string(i) + " saw " + std::to_string(recorders[i]->size()));
    std::this_thread::sleep_for(100ms);

    const auto reference = recorders.front()->snapshot();
    for (std::size_t i = 0; i < recorders.size(); ++i) {
        auto seen = recorders[i]->snapshot();
        expect(seen.size() == static_cast<std::size_t>(kPublishes), "subscriber " + std::to_string(i) + " extra items");
        for (int k = 0; k < kPublishes; ++k) {
            expect(seen[k].first == static_cast<std::uint64_t>(k + 1), "sequence gap at subscriber " + std::to_string(i));
            expect(seen[k].second.at("i") == k, "payload out of order at subscriber " + std::to_string(i));
        }
        expect(seen == reference, "transports disagree");
    }
    return std::to_string(kPublishes) + " publishes x " + std::to_string(recorders.size()) +
           " subscribers (TCP and WebSocket), gap-free and identical";
}

// ---------------------------------------------------------------------------
// Status-code contract

struct InvalidCase {
    std::string name;
    std::vector<Move> prefix;  // played before the probe
    std::string caller;        // "p1", "p2", "observer", "anonymous"
    Json payload;
    StatusCode expected;
    std::string lifecycle = "running";  // "idle", "initialized", "running"
};

Json mv(const std::string& from, const std::string& to) { return Json{{"from", from}, {"to", to}}; }

std::vector<InvalidCase> invalid_cases() {
    const std::vector<Move> p1_placed = {{"tray1", "a1"}};
    // PlayerOne closes a1-d1-g1 and owes a capture; PlayerTwo holds b2 and f2.
    const std::vector<Move> capture_due = {{"tray1", "a1"}, {"tray2", "b2"}, {"tray1", "d1"},
                                           {"tray2", "f2"}, {"tray1", "g1"}};
    // PlayerTwo owns the mill b2-d2-f2 plus e3 and e4; PlayerOne owes a capture.
    const std::vector<Move> protected_mill = {
        {"tray1", "a7"}, {"tray2", "b2"}, {"tray1", "d7"}, {"tray2", "d2"}, {"tray1", "c5"}, {"tray2", "f2"},
        {"a7", "tray1"}, {"tray1", "a1"}, {"tray2", "e4"}, {"tray1", "d1"}, {"tray2", "e3"}, {"tray1", "g1"}};
    // Every token placed, no mill; empty fields are c4 c5 d3 d5 e3 e4.
    std::vector<Move> placed_out;
    const char* one[] = {"a1", "a7", "g1", "g7", "b4", "f4", "d2", "d6", "c3"};
    const char* two[] = {"d1", "d7", "a4", "g4", "b2", "b6", "f2", "f6", "e5"};
    for (int i = 0; i < 9; ++i) {
        placed_out.push_back({"tray1", one[i]});
        placed_out.push_back({"tray2", two[i]});
    }
    auto finished = placed_out;
    for (int i = 0; i < 25; ++i) {
        finished.push_back(i % 2 ? Move{"c4", "c3"} : Move{"c3", "c4"});
        finished.push_back(i % 2 ? Move{"e4", "e5"} : Move{"e5", "e4"});
    }

    const auto A = StatusCode::BadInvalidArgument;
    const auto S = StatusCode::BadInvalidState;
    std::vector<InvalidCase> c = {
        {"game not initialized", {}, "p1", mv("tray1", "a1"), S, "idle"},
        {"game not started", {}, "p1", mv("tray1", "a1"), S, "initialized"},
        {"out of turn at start", {}, "p2", mv("tray2", "a1"), S},
        {"observer cannot move", {}, "observer", mv("tray1", "a1"), S},
        {"no hello", {}, "anonymous", mv("tray1", "a1"), S},
        {"board source in placement", {}, "p1", mv("a1", "a7"), A},
        {"opponent tray as source", {}, "p1", mv("tray2", "a1"), A},
        {"tray to tray", {}, "p1", mv("tray1", "tray2"), A},
        {"same source and destination", {}, "p1", mv("tray1", "tray1"), A},
        {"centre is not a field", {}, "p1", mv("tray1", "d4"), A},
        {"unknown field name", {}, "p1", mv("tray1", "z9"), A},
        {"missing destination", {}, "p1", Json{{"from", "tray1"}}, A},
        {"unexpected member", {}, "p1", Json{{"from", "tray1"}, {"to", "a1"}, {"by", "p1"}}, A},
        {"payload not an object", {}, "p1", Json::array({"tray1", "a1"}), A},
        {"field name not a string", {}, "p1", Json{{"from", 7}, {"to", "a1"}}, A},
        {"destination occupied", p1_placed, "p2", mv("tray2", "a1"), A},
        {"same player twice", p1_placed, "p1", mv("tray1", "b2"), S},
        {"placement while a capture is due", capture_due, "p1", mv("tray1", "a4"), A},
        {"capturing an own token", capture_due, "p1", mv("a1", "tray1"), A},
        {"capture into the wrong tray", capture_due, "p1", mv("b2", "tray1"), A},
        {"capturing an empty field", capture_due, "p1", mv("a4", "tray2"), A},
        {"opponent moves during a capture", capture_due, "p2", mv("tray2", "a4"), S},
        {"capturing from a mill while others are free", protected_mill, "p1", mv("d2", "tray2"), A},
        {"non-adjacent move", placed_out, "p1", mv("c3", "e4"), A},
        {"placing from an empty tray", placed_out, "p1", mv("tray1", "c4"), A},
        {"moving an opponent token", placed_out, "p1", mv("e5", "e4"), A},
        {"moving onto an occupied field", placed_out, "p1", mv("b4", "a4"), A},
        {"move after the game ended", finished, "p1", mv("c3", "c4"), S},
    };
    return c;
}

std::string run_status_contract() {
    auto cases = invalid_cases();
    expect(cases.size() >= kMinInvalidCases, "too few cases");
    int passed = 0;
    std::vector<std::string> failures;
    for (const auto& tc : cases) {
        server::ServerConfig cfg;
        cfg.draw_threshold = 50;
        support::Rig rig(cfg);
        support::Client one(rig.tcp()), two(rig.ws()), observer(rig.tcp()), anonymous(rig.ws());
        expect(one.hello(wire::PeerRole::PlayerOne).status == StatusCode::Good, "hello");
        expect(two.hello(wire::PeerRole::PlayerTwo).status == StatusCode::Good, "hello");
        expect(observer.hello(wire::PeerRole::Observer).status == StatusCode::Good, "hello");
        if (tc.lifecycle != "idle") expect(rig.server().init_game() == StatusCode::Good, "init");
        if (tc.lifecycle == "running") expect(rig.server().start_game() == StatusCode::Good, "start");
        for (const auto& [from, to] : tc.prefix) {
            auto& mover = rig.server().session().state.next == PlayerRole::PlayerOne ? one : two;
            auto r = mover.call("nextMove", encode(M(from, to)));
            expect(r.status == StatusCode::Good, tc.name + ": prefix move " + from + "->" + to + " refused");
        }

        std::mutex mutex;
        std::size_t publications = 0;
        for (auto topic : {server::kTopicGameState, server::kTopicGameMove, server::kTopicSessionInfo,
                           server::kTopicUnitHealth}) {
            expect(observer.peer().subscribe(topic, [&](std::uint64_t, const Json&) {
                std::lock_guard lock(mutex);
                ++publications;
            }) == StatusCode::Good, "subscribe");
        }
        std::this_thread::sleep_for(kQuietWindow);
        std::size_t before;
        {
            std::lock_guard lock(mutex);
            before = publications;
        }
        const auto session_before = rig.server().session();
        support::Client* caller = tc.caller == "p1"          ? &one
                                  : tc.caller == "p2"        ? &two
                                  : tc.caller == "observer"  ? &observer
                                                             : &anonymous;
        const auto r = caller->call("nextMove", tc.payload);
        std::this_thread::sleep_for(kQuietWindow);
        std::size_t after;
        {
            std::lock_guard lock(mutex);
            after = publications;
        }
        const bool ok = r.status == tc.expected && after == before && rig.server().session() == session_before;
        if (ok) {
            ++passed;
        } else {
            failures.push_back(tc.name + " (got " + std::string(to_string(r.status)) + ", " +
                               std::to_string(after - before) + " publications)");
        }
    }
    std::string detail = std::to_string(passed) + "/" + std::to_string(cases.size()) + " cases";
    if (!failures.empty()) throw Failure(detail + "; first failure: " + failures.front());
    return detail + " returned the specified code with zero publications";
}

// ---------------------------------------------------------------------------
// Failure injection

std::string run_failure_injection() {
    std::string detail;
    {
        server::ServerConfig cfg;
        cfg.execute_deadline = 200ms;
        const auto log = temp_path("ibpt_accept_timeout.ndjson");
        cfg.vita_log_path = log;
        support::Rig rig(cfg);
        auto slow = support::fast_cell("stalling");
        slow.fault_plan.push_back({cell::FaultOp::ExecuteMove, 1, cell::FaultKind::Timeout, false});
        slow.stall_ms = 300;
        auto& cell = rig.add_cell(slow, 1);
        support::Client one(rig.tcp()), two(rig.tcp());
        expect(one.hello(wire::PeerRole::PlayerOne).status == StatusCode::Good, "hello");
        expect(two.hello(wire::PeerRole::PlayerTwo).status == StatusCode::Good, "hello");
        expect(rig.server().init_game() == StatusCode::Good && rig.server().start_game() == StatusCode::Good, "start");
        expect(one.call("nextMove", encode(M("tray1", "a1"))).status == StatusCode::Good, "move");
        auto o = rig.server().wait_settled(1, 10s);
        expect(o && o->status == StatusCode::Good, "timed out order not GOOD after retry");
        expect(o->attempts.at("stalling") == 2, "expected 2 attempts");
        expect(cell.board() == rig.server().session().state.board, "shadow differs after retry");
        rig.server().stop();
        const auto records = vita::read_log(log);
        std::size_t timeouts = 0, good = 0;
        for (const auto& r : records) {
            if (r.order_id != 1) continue;
            timeouts += r.status == StatusCode::BadTimeout;
            good += r.status == StatusCode::Good;
        }
        expect(timeouts == 1 && good == 3, "Vita log shows " + std::to_string(timeouts) + " timeout and " +
                                               std::to_string(good) + " good records for order 1");
        detail = "timeout retried (2 attempts, 1 BAD_TIMEOUT record + 3 GOOD in the Vita log)";
    }
    {
        server::ServerConfig cfg;
        const auto log = temp_path("ibpt_accept_faulted.ndjson");
        cfg.vita_log_path = log;
        support::Rig rig(cfg);
        auto broken = support::fast_cell("broken");
        broken.fault_plan.push_back({cell::FaultOp::ExecuteMove, 1, cell::FaultKind::DeviceFailure, true});
        rig.add_cell(broken, 1);
        auto& healthy = rig.add_cell(support::fast_cell("healthy"), 2);
        support::Client one(rig.tcp()), two(rig.ws()), watcher(rig.ws());
        expect(one.hello(wire::PeerRole::PlayerOne).status == StatusCode::Good, "hello");
        expect(two.hello(wire::PeerRole::PlayerTwo).status == StatusCode::Good, "hello");
        expect(watcher.hello(wire::PeerRole::Observer).status == StatusCode::Good, "hello");
        support::Recorder health;
        expect(watcher.peer().subscribe(server::kTopicUnitHealth, health.handler()) == StatusCode::Good, "subscribe");
        expect(rig.server().init_game() == StatusCode::Good && rig.server().start_game() == StatusCode::Good, "start");
        expect(one.call("nextMove", encode(M("tray1", "a1"))).status == StatusCode::Good, "move 1");
        auto first = rig.server().wait_settled(1, 10s);
        expect(first && first->status == StatusCode::BadDeviceFailure, "aggregate not BAD_DEVICE_FAILURE");
        expect(rig.unit_health("broken") == server::UnitHealth::Faulted, "unit not Faulted");
        expect(support::eventually([&] {
            auto last = health.last();
            if (!last) return false;
            for (const auto& u : last->at("units"))
                if (u.at("name") == "broken" && u.at("health") == "Faulted") return true;
            return false;
        }), "UnitHealth never published Faulted");
        for (const auto& [from, to] : std::vector<Move>{{"tray2", "b2"}, {"tray1", "d1"}, {"tray2", "f2"}}) {
            auto& mover = rig.server().session().state.next == PlayerRole::PlayerOne ? one : two;
            expect(mover.call("nextMove", encode(M(from, to))).status == StatusCode::Good, "game did not continue");
        }
        expect(rig.server().wait_all_settled(10s), "later orders unsettled");
        for (std::uint64_t id = 2; id <= 4; ++id)
            expect(rig.server().order(id)->status == StatusCode::Good, "later order not GOOD");
        expect(healthy.board() == rig.server().session().state.board, "healthy shadow differs");
        rig.server().stop();
        std::size_t failed = 0;
        for (const auto& r : vita::read_log(log)) failed += r.unit == "broken" && r.status == StatusCode::BadDeviceFailure;
        expect(failed == 3, "expected 3 failing attempts in the Vita log, found " + std::to_string(failed));
        detail += "; permanent failure -> Faulted, aggregate BAD_DEVICE_FAILURE, 3 more orders GOOD";
    }
    return detail;
}

// ---------------------------------------------------------------------------
// End to end and analytics

struct EndToEnd {
    std::string log;
    std::map<std::string, cell::CellConfig> cells;
    std::uint64_t orders = 0;
};

std::string run_end_to_end(EndToEnd& e2e) {
    const auto t0 = Clock::now();
    server::ServerConfig cfg;
    e2e.log = temp_path("ibpt_accept_e2e.ndjson");
    cfg.vita_log_path = e2e.log;
    support::Rig rig(cfg);
    for (auto file : {"cell-articulated.json", "cell-scara.json"}) {
        auto c = cell::load_config(kConfigDir + "/" + file);
        c.fault_plan.clear();
        e2e.cells[c.name] = c;
    }
    std::uint64_t seed = 100;
    for (const auto& [_, c] : e2e.cells) rig.add_cell(c, ++seed);
    expect(rig.server().init_game() == StatusCode::Good, "init");

    ai::Agent one({PlayerRole::PlayerOne, kAgentDepth, 1, 0ms, "agent-1"}, rig.tcp());
    ai::Agent two({PlayerRole::PlayerTwo, kAgentDepth, 2, 0ms, "agent-2"}, rig.ws());
    auto fa = std::async(std::launch::async, [&] { return one.run(); });
    auto fb = std::async(std::launch::async, [&] { return two.run(); });
    expect(support::eventually([&] {
        return rig.server().player_connected(PlayerRole::PlayerOne) &&
               rig.server().player_connected(PlayerRole::PlayerTwo);
    }, 10s), "agents did not connect");
    expect(rig.server().start_game() == StatusCode::Good, "start");

    const auto deadline = t0 + kEndToEndBudget;
    bool finished = fa.wait_until(deadline) == std::future_status::ready &&
                    fb.wait_until(deadline) == std::future_status::ready;
    if (!finished) {
        one.stop();
        two.stop();
        throw Failure("no outcome within the budget");
    }
    expect(fa.get() == ai::AgentExit::GameOver && fb.get() == ai::AgentExit::GameOver, "an agent resigned");
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    expect(rig.server().wait_all_settled(std::max(remaining, 0ms)), "orders still unsettled at the deadline");
    const auto s = rig.server().session();
    expect(s.outcome.has_value(), "no outcome");
    e2e.orders = s.move_number;
    std::uint64_t good = 0;
    for (std::uint64_t id = 1; id <= e2e.orders; ++id) good += rig.server().order(id)->status == StatusCode::Good;
    rig.server().stop();
    const auto records = vita::read_log(e2e.log);
    expect(good == e2e.orders, std::to_string(e2e.orders - good) + " orders not GOOD");
    expect(records.size() == good * e2e.cells.size() * 3,
           "Vita records " + std::to_string(records.size()) + " != " + std::to_string(good) + " x " +
               std::to_string(e2e.cells.size()) + " x 3");
    const double secs = seconds_since(t0);
    std::ostringstream out;
    out << rules::to_string(*s.outcome) << " after " << e2e.orders << " moves (captured " << s.captured[0] << "/"
        << s.captured[1] << "), " << records.size() << " Vita records = " << good << " x " << e2e.cells.size()
        << " x 3, " << secs << " s";
    return out.str();
}

// Timestamp parsing for the harness, independent of the library.
std::int64_t epoch_ms(const std::string& text) {
    std::tm tm{};
    int ms = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                    &tm.tm_min, &tm.tm_sec, &ms) != 7)
        throw Failure("harness cannot parse timestamp " + text);
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<std::int64_t>(timegm(&tm)) * 1000 + ms;
}

std::string run_analytics(const EndToEnd& e2e) {
    expect(!e2e.log.empty(), "end-to-end log missing");
    // Independent tally straight from the file.
    std::map<std::string, std::uint64_t> phase_count, unit_count;
    std::map<std::string, double> phase_sum;
    std::map<std::string, std::int64_t> phase_max;
    std::uint64_t total = 0, out_of_band = 0;
    std::ifstream in(e2e.log);
    const std::array<std::string, 3> phases = {"PickUp", "MoveToken", "PlaceToken"};
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        auto j = Json::parse(line);
        const auto phase = j.at("sub_phase").get<std::string>();
        const auto unit = j.at("unit").get<std::string>();
        const auto d = epoch_ms(j.at("ended_at")) - epoch_ms(j.at("started_at"));
        ++total;
        ++phase_count[phase];
        ++unit_count[unit];
        phase_sum[phase] += static_cast<double>(d);
        phase_max[phase] = std::max(phase_max[phase], d);
        const auto& c = e2e.cells.at(unit);
        const auto idx = static_cast<std::size_t>(std::find(phases.begin(), phases.end(), phase) - phases.begin());
        const int base = c.sub_phase_duration_ms.at(idx);
        if (d < base - c.latency_jitter_ms || d > base + c.latency_jitter_ms) ++out_of_band;
    }
    auto r = proc::run({"vita-stats", "--log", e2e.log, "--json"}, {}, 60s);
    expect(r.exit_code == 0, "vita-stats exited " + std::to_string(r.exit_code) + ": " + r.err);
    auto j = Json::parse(r.out);
    expect(j.at("total") == total, "total differs");
    for (const auto& p : phases) {
        const auto& jp = j.at("phases").at(p);
        expect(jp.at("count") == phase_count[p], p + " count differs");
        const double mean = phase_count[p] ? phase_sum[p] / static_cast<double>(phase_count[p]) : 0.0;
        expect(std::abs(jp.at("mean_duration_ms").get<double>() - mean) <= kMeanTolerance, p + " mean differs");
        expect(jp.at("max_duration_ms") == phase_max[p], p + " max differs");
    }
    for (const auto& [unit, n] : unit_count) expect(j.at("units").at(unit).at("records") == n, unit + " count differs");
    expect(j.at("units").size() == unit_count.size(), "unit set differs");
    expect(out_of_band == 0, std::to_string(out_of_band) + " durations outside [base - jitter, base + jitter]");
    return std::to_string(total) + " records; per-phase counts, means, maxima and per-unit counts match; all durations "
                                   "within [base - jitter, base + jitter]";
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    int failed = 0;
    auto report = [&](const std::string& name, const std::function<std::string()>& body) {
        std::string line;
        bool ok = false;
        try {
            line = body();
            ok = true;
        } catch (const std::exception& e) {
            line = e.what();
        }
        if (!ok) ++failed;
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << line << std::endl;
    };

    OracleReport oracle_report;
    report("rules-oracle equivalence", [&] {
        oracle_report = run_oracle();
        const auto& r = oracle_report;
        std::ostringstream out;
        out << r.playouts << " playouts, " << r.positions << " positions, " << r.mismatches << " mismatches, perft "
            << r.perft_detail << ", " << r.seconds << " s";
        if (r.mismatches) throw Failure(out.str() + "; first at " + r.first_mismatch);
        if (!r.perft_ok) throw Failure(out.str() + "; perft differs from the oracle or the pinned counts");
        if (r.seconds > std::chrono::duration<double>(kOracleBudget).count()) throw Failure(out.str() + "; over budget");
        return out.str();
    });
    report("token conservation", [&] {
        const auto& r = oracle_report;
        expect(r.playouts == kOraclePlayouts, "oracle playouts did not complete");
        std::string detail = std::to_string(r.conservation_violations) + " violations over " +
                             std::to_string(r.positions - r.playouts) + " transitions";
        expect(r.conservation_violations == 0, detail);
        return detail;
    });
    report("twin consistency", run_twin);
    report("protocol ordering", run_ordering);
    report("status-code contract", run_status_contract);
    report("failure injection", run_failure_injection);
    EndToEnd e2e;
    report("end-to-end AI game", [&] { return run_end_to_end(e2e); });
    report("vita analytics", [&] { return run_analytics(e2e); });

    std::cout << (failed ? "FAILED: " + std::to_string(failed) + " criteria" : std::string("ALL CRITERIA PASSED"))
              << std::endl;
    return failed ? 1 : 0;
}
