#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/dataset.hpp"
#include "countmorl/types.hpp"

namespace countmorl {

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

enum class GridKind { Empty, Bridge, Cliff, ZigZag };

inline const char* grid_kind_name(GridKind kind) {
    switch (kind) {
        case GridKind::Empty: return "empty";
        case GridKind::Bridge: return "bridge";
        case GridKind::Cliff: return "cliff";
        case GridKind::ZigZag: return "zigzag";
    }
    return "?";
}

/// 8x8 grid with lava cells, a start and a goal.
struct GridLayout {
    GridKind kind = GridKind::Empty;
    int width = 8;
    int height = 8;
    std::set<Cell> lava_cells;
    Cell start;
    Cell goal;

    bool in_bounds(Cell c) const { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; }
    bool is_lava(Cell c) const { return lava_cells.count(c) > 0; }
    int state_of(Cell c) const { return c.row * width + c.col; }
    Cell cell_of(int s) const { return {s / width, s % width}; }

    void validate() const {
        if (width != 8 || height != 8) throw std::invalid_argument("GridLayout: grid must be 8x8");
        if (!in_bounds(start) || !in_bounds(goal)) throw std::invalid_argument("GridLayout: start/goal out of bounds");
        for (const Cell& c : lava_cells)
            if (!in_bounds(c)) throw std::invalid_argument("GridLayout: lava cell out of bounds");
        if (is_lava(start)) throw std::invalid_argument("GridLayout: start inside lava");
        if (is_lava(goal)) throw std::invalid_argument("GridLayout: goal inside lava");
        if (start == goal) throw std::invalid_argument("GridLayout: start equals goal");
    }
};

/// Parses a plain-text grid: '.' free, 'L' lava, 'S' start, 'G' goal, one row
/// per line, top row first.
inline GridLayout parse_layout(const std::string& text, GridKind kind = GridKind::Empty) {
    GridLayout layout;
    layout.kind = kind;
    std::istringstream in(text);
    std::string line;
    int row = 0;
    bool saw_start = false, saw_goal = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row >= 8) throw std::invalid_argument("grid layout: more than 8 rows");
        if (line.size() != 8)
            throw std::invalid_argument("grid layout: row " + std::to_string(row) + " has " +
                                        std::to_string(line.size()) + " cells, expected 8");
        for (int col = 0; col < 8; ++col) {
            const Cell c{row, col};
            switch (line[static_cast<std::size_t>(col)]) {
                case '.': break;
                case 'L': layout.lava_cells.insert(c); break;
                case 'S':
                    layout.start = c;
                    saw_start = true;
                    break;
                case 'G':
                    layout.goal = c;
                    saw_goal = true;
                    break;
                default:
                    throw std::invalid_argument(std::string("grid layout: unknown cell character '") +
                                                line[static_cast<std::size_t>(col)] + "'");
            }
        }
        ++row;
    }
    if (row != 8) throw std::invalid_argument("grid layout: expected 8 rows, got " + std::to_string(row));
    if (!saw_start || !saw_goal) throw std::invalid_argument("grid layout: missing start or goal");
    layout.validate();
    return layout;
}

inline GridLayout load_layout(const std::string& path, GridKind kind = GridKind::Empty) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_layout: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_layout(buf.str(), kind);
}

/// Built-in geometries matching the qualitative shapes of the four named
/// 8x8 environments. Also shipped as data/layouts/*.txt.
inline GridLayout make_layout(GridKind kind) {
    switch (kind) {
        case GridKind::Empty:
            return parse_layout(
                "S.......\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                ".......G\n",
                kind);
        case GridKind::Bridge:
            return parse_layout(
                "........\n"
                "........\n"
                ".LLLLLL.\n"
                "S......G\n"
                ".LLLLLL.\n"
                "........\n"
                "........\n"
                "........\n",
                kind);
        case GridKind::Cliff:
            return parse_layout(
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "........\n"
                "SLLLLLLG\n",
                kind);
        case GridKind::ZigZag:
            return parse_layout(
                "S.L.....\n"
                "..L.....\n"
                "..L..L..\n"
                "..L..L..\n"
                "..L..L..\n"
                "..L..L..\n"
                ".....L..\n"
                ".....L.G\n",
                kind);
    }
    throw std::invalid_argument("make_layout: unknown kind");
}

// Actions, in the fixed order used everywhere: up, down, left, right.
inline constexpr int kGridActions = 4;
inline constexpr int kGridRowDelta[kGridActions] = {-1, 1, 0, 0};
inline constexpr int kGridColDelta[kGridActions] = {0, 0, -1, 1};

inline constexpr double kGridStepReward = -0.01;
inline constexpr double kGridGoalReward = 1.0;
inline constexpr double kGridLavaReward = -1.0;
inline constexpr double kGridGamma = 0.99;

/// Deterministic 64-state, 4-action MDP for a layout.
///
/// Moves into the boundary leave the state unchanged; goal and lava are
/// absorbing self-loops with reward 0. Entering the goal pays +1, entering
/// lava pays -1, every other step costs 0.01.
inline TabularMdp build_gridworld(const GridLayout& layout) {
    layout.validate();
    const int S = layout.width * layout.height;
    const int A = kGridActions;
    TabularMdp mdp;
    mdp.num_states = S;
    mdp.num_actions = A;
    mdp.gamma = kGridGamma;
    mdp.r_max = 1.0;
    mdp.transition.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    mdp.reward.assign(static_cast<std::size_t>(S) * A, 0.0);
    mdp.initial_dist.assign(static_cast<std::size_t>(S), 0.0);
    mdp.initial_dist[static_cast<std::size_t>(layout.state_of(layout.start))] = 1.0;

    for (int s = 0; s < S; ++s) {
        const Cell here = layout.cell_of(s);
        const bool absorbing = here == layout.goal || layout.is_lava(here);
        for (int a = 0; a < A; ++a) {
            if (absorbing) {
                mdp.row(s, a)[s] = 1.0;
                continue;
            }
            Cell dest{here.row + kGridRowDelta[a], here.col + kGridColDelta[a]};
            if (!layout.in_bounds(dest)) dest = here;  // wall clamp
            const int sp = layout.state_of(dest);
            mdp.row(s, a)[sp] = 1.0;
            double r = kGridStepReward;
            if (dest == layout.goal)
                r = kGridGoalReward;
            else if (layout.is_lava(dest))
                r = kGridLavaReward;
            mdp.reward[mdp.pair_index(s, a)] = r;
        }
    }
    mdp.validate();
    return mdp;
}

/// Tabular Q-learning settings for the behavior policy. These defaults are
/// this library's choices, not values taken from any benchmark.
struct BehaviorTrainConfig {
    int episodes = 1000;
    double epsilon = 0.3;
    double learning_rate = 0.1;
    int max_episode_steps = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (episodes < 0) throw std::invalid_argument("BehaviorTrainConfig: episodes must be >= 0");
        if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("BehaviorTrainConfig: epsilon in [0,1]");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw std::invalid_argument("BehaviorTrainConfig: learning_rate in (0,1]");
        if (max_episode_steps <= 0)
            throw std::invalid_argument("BehaviorTrainConfig: max_episode_steps must be positive");
    }
};

/// Q-table plus the replay buffer accumulated while training it.
struct BehaviorTrainResult {
    PolicyTable greedy_policy;
    OfflineDataset replay_buffer;
    std::vector<double> q_table;  // S * A
};

/// Trains an epsilon-greedy Q-learning agent on the MDP and logs every
/// environment transition, in order, into the returned dataset.
///
/// Episodes end on entering a lava cell or after max_episode_steps. The goal
/// is absorbing but episodes keep stepping there until the cap, so goal-state
/// pairs do appear in the buffer while lava-state pairs never do.
inline BehaviorTrainResult train_behavior(const TabularMdp& mdp, const GridLayout& layout,
                                          const BehaviorTrainConfig& cfg) {
    cfg.validate();
    mdp.validate();
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    Rng rng(derive_seed(cfg.seed, 0xBEAF));
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);

    BehaviorTrainResult result;
    result.replay_buffer.num_states = S;
    result.replay_buffer.num_actions = A;
    result.replay_buffer.meta = {std::string("grid/") + grid_kind_name(layout.kind), cfg.seed,
                                 "train_behavior"};

    auto greedy_action = [&](int s) {
        int best = 0;
        double best_q = q[static_cast<std::size_t>(s) * A];
        for (int a = 1; a < A; ++a) {
            const double v = q[static_cast<std::size_t>(s) * A + a];
            if (v > best_q) {
                best_q = v;
                best = a;
            }
        }
        return best;
    };

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        int state = static_cast<int>(rng.next_discrete(mdp.initial_dist));
        for (int step = 0; step < cfg.max_episode_steps; ++step) {
            const int action = rng.next_bernoulli(cfg.epsilon) ? static_cast<int>(rng.next_index(A))
                                                               : greedy_action(state);
            const int next = static_cast<int>(rng.next_discrete(
                std::span<const double>(mdp.row(state, action), static_cast<std::size_t>(S))));
            const double reward = mdp.reward_at(state, action);
            result.replay_buffer.transitions.push_back({state, action, reward, next});

            double best_next = q[static_cast<std::size_t>(next) * A];
            for (int a = 1; a < A; ++a)
                best_next = std::max(best_next, q[static_cast<std::size_t>(next) * A + a]);
            auto& cell = q[static_cast<std::size_t>(state) * A + action];
            cell += cfg.learning_rate * (reward + mdp.gamma * best_next - cell);

            if (layout.is_lava(layout.cell_of(next))) break;  // episode ends in lava
            state = next;
        }
    }

    std::vector<int> greedy(static_cast<std::size_t>(S), 0);
    for (int s = 0; s < S; ++s) greedy[static_cast<std::size_t>(s)] = greedy_action(s);
    result.greedy_policy = PolicyTable::deterministic(S, A, greedy);
    result.q_table = std::move(q);
    return result;
}

/// Collects transitions under a fixed policy with the same episode semantics
/// as the replay buffer: episodes end on entering lava or after episode_cap
/// steps, while the absorbing goal keeps logging self-loops until the cap.
/// Without the goal-state samples every count-based penalty would poison the
/// goal, since its pairs would stay unobserved in any dataset.
inline OfflineDataset collect_grid_dataset(const TabularMdp& mdp, const GridLayout& layout,
                                           const PolicyTable& policy, std::size_t n_transitions,
                                           std::uint64_t seed, int episode_cap) {
    detail::check_dims(mdp, policy);
    if (episode_cap <= 0) throw std::invalid_argument("collect_grid_dataset: episode_cap must be positive");
    OfflineDataset data;
    data.num_states = mdp.num_states;
    data.num_actions = mdp.num_actions;
    data.meta = {std::string("grid/") + grid_kind_name(layout.kind), seed, "collect_grid_dataset"};
    data.transitions.reserve(n_transitions);
    Rng rng(derive_seed(seed, 0x6e1d));
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    int state = -1;
    int steps = 0;
    while (data.transitions.size() < n_transitions) {
        if (state < 0 || steps >= episode_cap) {
            state = static_cast<int>(rng.next_discrete(mdp.initial_dist));
            steps = 0;
            continue;
        }
        const int action = static_cast<int>(rng.next_discrete(
            std::span<const double>(policy.probs.data() + static_cast<std::size_t>(state) * A,
                                    static_cast<std::size_t>(A))));
        const int next = static_cast<int>(rng.next_discrete(
            std::span<const double>(mdp.row(state, action), static_cast<std::size_t>(S))));
        data.transitions.push_back({state, action, mdp.reward_at(state, action), next});
        ++steps;
        if (layout.is_lava(layout.cell_of(next))) {
            state = -1;
            continue;
        }
        state = next;
    }
    return data;
}

/// Mixture (1-eps) * base + eps * uniform; the stationary stand-in for the
/// epsilon-greedy policy that generated a replay buffer.
inline PolicyTable epsilon_greedy_mixture(const PolicyTable& base, double eps) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("epsilon_greedy_mixture: eps in [0,1]");
    PolicyTable out = base;
    const double u = eps / base.num_actions;
    for (double& p : out.probs) p = (1.0 - eps) * p + u;
    return out;
}

}  // namespace countmorl
