#include <csignal>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ibpt/ai.hpp"
#include "ibpt/cell.hpp"
#include "ibpt/console.hpp"
#include "ibpt/server.hpp"
#include "ibpt/vita.hpp"

using namespace ibpt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

constexpr const char* kDefaultServer = "127.0.0.1:4840";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

net::Endpoint endpoint_or_throw(const std::string& text) {
    auto ep = net::parse_endpoint(text);
    if (!ep) throw UsageError("invalid address \"" + text + "\"");
    return *ep;
}

// Flag, then IBPT_SERVER, then the fallback.
net::Endpoint server_address(const std::string& flag, const std::string& fallback = kDefaultServer) {
    if (!flag.empty()) return endpoint_or_throw(flag);
    if (const char* env = std::getenv("IBPT_SERVER"); env && *env) return endpoint_or_throw(env);
    return endpoint_or_throw(fallback);
}

PlayerRole role_or_throw(const std::string& text) {
    if (text == "p1" || text == "PlayerOne") return PlayerRole::PlayerOne;
    if (text == "p2" || text == "PlayerTwo") return PlayerRole::PlayerTwo;
    if (text == "observer" || text == "Observer") return PlayerRole::Observer;
    throw UsageError("invalid role \"" + text + "\"");
}

// SIGINT and SIGTERM are blocked in every thread and collected here.
void block_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

// True when a signal arrived, false once `done` is set.
bool wait_for_signal(const std::atomic<bool>& done) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    const timespec tick{0, 200'000'000};
    while (!done) {
        if (sigtimedwait(&set, nullptr, &tick) > 0) return true;
    }
    return false;
}

// --- serve -----------------------------------------------------------------

struct ServeOptions {
    std::string config;
    std::string listen_tcp;
    std::string listen_ws;
    std::string vita_log;
    int draw_threshold = 0;
    int max_retries = -1;
};

int run_serve(const ServeOptions& o) {
    server::ServerConfig cfg;
    cfg.listen_tcp = net::Endpoint{net::Transport::Tcp, "0.0.0.0", 4840};
    cfg.listen_ws = net::Endpoint{net::Transport::WebSocket, "0.0.0.0", 4841};
    cfg.vita_log_path = "vita.jsonl";
    if (!o.config.empty()) cfg = server::load_server_config(o.config);
    if (!o.listen_tcp.empty()) cfg.listen_tcp = endpoint_or_throw(o.listen_tcp);
    if (!o.listen_ws.empty()) cfg.listen_ws = endpoint_or_throw(o.listen_ws);
    if (!o.vita_log.empty()) cfg.vita_log_path = o.vita_log;
    if (o.draw_threshold > 0) cfg.draw_threshold = o.draw_threshold;
    if (o.max_retries >= 0) cfg.max_retries = o.max_retries;

    server::GameServer srv(cfg);
    srv.start();
    std::cout << "ibpt server ready";
    if (srv.tcp_port()) std::cout << " tcp=" << srv.tcp_port();
    if (srv.ws_port()) std::cout << " ws=" << srv.ws_port();
    std::cout << std::endl;
    std::atomic<bool> never{false};
    wait_for_signal(never);
    spdlog::info("shutting down");
    if (!srv.wait_all_settled(std::chrono::seconds(5))) spdlog::warn("unsettled orders dropped");
    srv.stop();
    return kExitOk;
}

// --- cell ------------------------------------------------------------------

int run_cell(const std::string& config_path, const std::string& server_flag, std::uint64_t seed,
             const std::string& name) {
    cell::CellConfig cfg;
    try {
        cfg = cell::load_config(config_path);
        if (!name.empty()) cfg.name = name;
        cell::validate(cfg);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    auto server = server_address(server_flag, cfg.server.empty() ? kDefaultServer : cfg.server);
    cell::CellClient client(cfg, server, seed);
    std::atomic<bool> done{false};
    std::thread runner([&] {
        client.run();
        done = true;
    });
    spdlog::info("cell '{}' serving {}", cfg.name, server.to_string());
    wait_for_signal(done);
    client.stop();
    runner.join();
    return kExitOk;
}

// --- agent -----------------------------------------------------------------

int run_agent(ai::AgentConfig cfg, const std::string& server_flag) {
    try {
        ai::validate(cfg);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    ai::Agent agent(cfg, server_address(server_flag));
    std::atomic<bool> done{false};
    ai::AgentExit exit = ai::AgentExit::Stopped;
    std::thread runner([&] {
        exit = agent.run();
        done = true;
    });
    if (wait_for_signal(done)) agent.stop();
    runner.join();
    std::cout << "agent finished: moves=" << agent.moves_sent() << " races=" << agent.turn_races() << std::endl;
    return exit == ai::AgentExit::Resigned ? kExitRuntime : kExitOk;
}

// --- admin -----------------------------------------------------------------

std::shared_ptr<net::Peer> open_session(net::Runtime& rt, const net::Endpoint& ep, PlayerRole role,
                                        const std::string& name) {
    auto peer = net::Peer::create(net::connect(rt, ep));
    auto r = peer->hello({*wire::as_peer_role(role), name});
    if (!is_good(r.status)) {
        peer->close();
        throw std::runtime_error("hello rejected: " + std::string(to_string(r.status)));
    }
    return peer;
}

int run_admin(const std::string& action, const std::string& server_flag, int draw_threshold) {
    static const std::map<std::string, std::string> methods = {
        {"init", "initGame"}, {"start", "startGame"}, {"reset", "resetGame"}};
    auto it = methods.find(action);
    if (it == methods.end()) throw UsageError("unknown action \"" + action + "\"");
    net::Runtime rt(1);
    auto peer = open_session(rt, server_address(server_flag), PlayerRole::Observer, "admin");
    Json payload = Json::object();
    if (action == "init" && draw_threshold > 0) payload["draw_threshold"] = draw_threshold;
    auto r = peer->call(it->second, payload, std::chrono::seconds(120));
    std::cout << to_string(r.status) << std::endl;
    peer->close();
    return is_good(r.status) ? kExitOk : kExitRuntime;
}

// --- play ------------------------------------------------------------------

int run_play(PlayerRole role, const std::string& server_flag) {
    net::Runtime rt(1);
    auto peer = open_session(rt, server_address(server_flag), role, "console");
    std::mutex out_mutex;
    std::optional<rules::Session> last;
    auto status = peer->subscribe(server::kTopicSessionInfo, [&](std::uint64_t, const Json& p) {
        try {
            auto s = decode<rules::Session>(p.at("session"), "session");
            std::lock_guard lock(out_mutex);
            last = s;
            std::cout << "\n[" << p.at("lifecycle").get<std::string>() << "]\n" << console::render_session(s) << "> "
                      << std::flush;
        } catch (const std::exception& e) {
            spdlog::warn("unreadable SessionInfo: {}", e.what());
        }
    });
    if (!is_good(status)) throw std::runtime_error("subscribe failed: " + std::string(to_string(status)));

    static const std::map<std::string, std::string> admin = {
        {"init", "initGame"}, {"start", "startGame"}, {"reset", "resetGame"}};
    for (std::string line; std::getline(std::cin, line);) {
        if (!peer->is_open()) {
            std::cerr << "connection lost\n";
            return kExitRuntime;
        }
        if (line.empty()) continue;
        if (line == "quit" || line == "exit") break;
        if (auto it = admin.find(line); it != admin.end()) {
            auto r = peer->call(it->second, Json::object(), std::chrono::seconds(120));
            std::lock_guard lock(out_mutex);
            std::cout << to_string(r.status) << "\n> " << std::flush;
            continue;
        }
        std::string error;
        auto move = console::parse_move(line, role == PlayerRole::Observer ? PlayerRole::PlayerOne : role, &error);
        if (!move) {
            std::lock_guard lock(out_mutex);
            std::cout << "invalid input: " << error << "\n> " << std::flush;
            continue;
        }
        auto r = peer->call("nextMove", encode(*move));
        std::lock_guard lock(out_mutex);
        std::cout << to_string(r.status) << "\n> " << std::flush;
    }
    peer->close();
    return kExitOk;
}

// --- vita-stats ------------------------------------------------------------

int run_vita_stats(const std::string& path, bool json) {
    std::vector<vita::VitaRecord> records;
    try {
        records = vita::read_log(path);
    } catch (const vita::LogFormatError& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return kExitRuntime;
    }
    auto stats = vita::compute_stats(records);
    if (json)
        std::cout << vita::encode(stats).dump(2) << '\n';
    else
        std::cout << vita::render_stats(stats);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nine Men's Morris business process twin: server, robot cells, players and telemetry"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    ServeOptions serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the game server");
    serve_cmd->add_option("--config", serve.config, "JSON server config file");
    serve_cmd->add_option("--listen-tcp", serve.listen_tcp, "TCP listen address (default 0.0.0.0:4840)");
    serve_cmd->add_option("--listen-ws", serve.listen_ws, "WebSocket listen address (default 0.0.0.0:4841)");
    serve_cmd->add_option("--vita-log", serve.vita_log, "Vita telemetry log (default vita.jsonl)");
    serve_cmd->add_option("--draw-threshold", serve.draw_threshold, "Quiet moves before a draw")
        ->check(CLI::PositiveNumber);
    serve_cmd->add_option("--max-retries", serve.max_retries, "Retries per unit on timeout or device failure")
        ->check(CLI::NonNegativeNumber);

    std::string cell_config, cell_server, cell_name;
    std::uint64_t cell_seed = 0;
    auto* cell_cmd = app.add_subcommand("cell", "Run one simulated robot cell");
    cell_cmd->add_option("--config", cell_config, "JSON cell config file")->required();
    cell_cmd->add_option("--server", cell_server, "Server address (else IBPT_SERVER, else the config)");
    cell_cmd->add_option("--seed", cell_seed, "Simulation seed");
    cell_cmd->add_option("--name", cell_name, "Override the unit name");

    ai::AgentConfig agent_cfg;
    std::string agent_role = "p1", agent_server;
    int think_ms = 0;
    auto* agent_cmd = app.add_subcommand("agent", "Run an AI player");
    agent_cmd->add_option("--role", agent_role, "p1 or p2")->required();
    agent_cmd->add_option("--depth", agent_cfg.search_depth, "Search depth in plies")->capture_default_str();
    agent_cmd->add_option("--server", agent_server, "Server address (else IBPT_SERVER)");
    agent_cmd->add_option("--seed", agent_cfg.rng_seed, "Tie-break seed");
    agent_cmd->add_option("--think-ms", think_ms, "Delay before each move")->check(CLI::NonNegativeNumber);
    agent_cmd->add_option("--name", agent_cfg.name, "Client name")->capture_default_str();

    std::string play_role = "p1", play_server;
    auto* play_cmd = app.add_subcommand("play", "Play from the terminal");
    play_cmd->add_option("--role", play_role, "p1, p2 or observer")->required();
    play_cmd->add_option("--server", play_server, "Server address (else IBPT_SERVER)");

    std::string admin_action, admin_server;
    int admin_threshold = 0;
    auto* admin_cmd = app.add_subcommand("admin", "Send initGame, startGame or resetGame");
    admin_cmd->add_option("action", admin_action, "init, start or reset")->required();
    admin_cmd->add_option("--server", admin_server, "Server address (else IBPT_SERVER)");
    admin_cmd->add_option("--draw-threshold", admin_threshold, "Draw threshold for init")->check(CLI::PositiveNumber);

    std::string vita_path;
    bool vita_json = false;
    auto* vita_cmd = app.add_subcommand("vita-stats", "Summarize a Vita telemetry log");
    vita_cmd->add_option("--log", vita_path, "Vita log file")->required()->check(CLI::ExistingFile);
    vita_cmd->add_flag("--json", vita_json, "Print JSON instead of a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("ibpt"));
    spdlog::set_level(spdlog::level::from_str(log_level));
    block_signals();

    try {
        if (*serve_cmd) return run_serve(serve);
        if (*cell_cmd) return run_cell(cell_config, cell_server, cell_seed, cell_name);
        if (*agent_cmd) {
            agent_cfg.role = role_or_throw(agent_role);
            agent_cfg.think_delay = std::chrono::milliseconds(think_ms);
            return run_agent(agent_cfg, agent_server);
        }
        if (*play_cmd) return run_play(role_or_throw(play_role), play_server);
        if (*admin_cmd) return run_admin(admin_action, admin_server, admin_threshold);
        if (*vita_cmd) return run_vita_stats(vita_path, vita_json);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const server::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
