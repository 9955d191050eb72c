#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>

#include "ibpt/ai.hpp"

namespace ibpt::ai {

namespace {

constexpr int kInfinity = std::numeric_limits<int>::max() / 2;

int terminal_score(const rules::Session& s, PlayerRole me, int depth) {
    if (*s.outcome == rules::Outcome::Draw) return 0;
    const bool won = (*s.outcome == rules::Outcome::WinPlayerOne) == (me == PlayerRole::PlayerOne);
    return won ? kWinScore + depth : -(kWinScore + depth);
}

struct Searcher {
    PlayerRole me;
    std::uint64_t nodes = 0;

    int minimax(const rules::Session& s, int depth) {
        ++nodes;
        if (s.outcome) return terminal_score(s, me, depth);
        if (depth == 0) return evaluate(s, me);
        const bool maximizing = s.state.next == me;
        int best = maximizing ? -kInfinity : kInfinity;
        for (const auto& m : rules::legal_moves(s)) {
            int v = minimax(rules::apply_move(s, m), depth - 1);
            best = maximizing ? std::max(best, v) : std::min(best, v);
        }
        return best;
    }

    // Fail-hard: the result is clamped to [alpha, beta].
    int alphabeta(const rules::Session& s, int depth, int alpha, int beta) {
        ++nodes;
        if (s.outcome) return std::clamp(terminal_score(s, me, depth), alpha, beta);
        if (depth == 0) return std::clamp(evaluate(s, me), alpha, beta);
        if (s.state.next == me) {
            for (const auto& m : rules::legal_moves(s)) {
                alpha = std::max(alpha, alphabeta(rules::apply_move(s, m), depth - 1, alpha, beta));
                if (alpha >= beta) break;
            }
            return alpha;
        }
        for (const auto& m : rules::legal_moves(s)) {
            beta = std::min(beta, alphabeta(rules::apply_move(s, m), depth - 1, alpha, beta));
            if (alpha >= beta) break;
        }
        return beta;
    }
};

void collect(SearchResult& r, const GameMove& m, int v) {
    if (r.best_moves.empty() || v > r.value) {
        r.value = v;
        r.best_moves.assign(1, m);
    } else if (v == r.value) {
        r.best_moves.push_back(m);
    }
}

}  // namespace

int evaluate(const rules::Session& s, PlayerRole me) {
    const auto foe = opponent(me);
    const int own_tokens = kTokensPerPlayer - s.captured_of(me);
    const int foe_tokens = kTokensPerPlayer - s.captured_of(foe);
    return 10 * (own_tokens - foe_tokens) + (rules::mobility(s, me) - rules::mobility(s, foe));
}

SearchResult search_minimax(const rules::Session& s, int depth, PlayerRole me) {
    if (depth < 1) throw std::invalid_argument("search depth must be positive");
    Searcher searcher{me};
    SearchResult r;
    for (const auto& m : rules::legal_moves(s)) collect(r, m, searcher.minimax(rules::apply_move(s, m), depth - 1));
    r.nodes = searcher.nodes;
    return r;
}

// Root moves are searched with alpha one below the best value so far, which
// makes every root value >= best exact and keeps the full set of best moves.
SearchResult search_alphabeta(const rules::Session& s, int depth, PlayerRole me) {
    if (depth < 1) throw std::invalid_argument("search depth must be positive");
    Searcher searcher{me};
    SearchResult r;
    for (const auto& m : rules::legal_moves(s)) {
        const int alpha = r.best_moves.empty() ? -kInfinity : r.value - 1;
        collect(r, m, searcher.alphabeta(rules::apply_move(s, m), depth - 1, alpha, kInfinity));
    }
    r.nodes = searcher.nodes;
    return r;
}

GameMove choose_move(const rules::Session& s, int depth, std::uint64_t seed) {
    auto r = search_alphabeta(s, depth, s.state.next);
    if (r.best_moves.empty()) throw std::logic_error("no legal moves");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, r.best_moves.size() - 1);
    return r.best_moves[pick(rng)];
}

void validate(const AgentConfig& c) {
    if (!is_player(c.role)) throw std::invalid_argument("an agent must play PlayerOne or PlayerTwo");
    if (c.search_depth < 1) throw std::invalid_argument("search depth must be positive");
    if (c.think_delay.count() < 0) throw std::invalid_argument("think delay must be non-negative");
}

}  // namespace ibpt::ai
