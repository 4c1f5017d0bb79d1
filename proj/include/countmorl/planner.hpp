#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/conservative_mdp.hpp"
#include "countmorl/counting.hpp"
#include "countmorl/dataset.hpp"
#include "countmorl/mdp_core.hpp"
#include "countmorl/model_estimation.hpp"

namespace countmorl {

/// Value-iteration planner on the conservative MDP: the greedy policy of
/// V within tol of the optimum.
inline std::pair<PolicyTable, ValueVector> exact_plan(const ConservativeMdp& cmdp, double tol) {
    auto [value, policy] = value_iteration(cmdp.base, tol);
    return {std::move(policy), std::move(value)};
}

struct RolloutConfig {
    int epochs = 50;
    int rollout_batch = 32;          // B
    int horizon = 5;                 // H
    int updates_per_epoch = 200;
    int batch_size = 64;
    double real_ratio = 0.05;        // fraction of real transitions per update batch
    double q_learning_rate = 0.1;
    double exploration_eps = 0.1;
    std::uint64_t seed = 0;
    std::size_t model_buffer_capacity = 100000;

    void validate() const {
        if (epochs <= 0) throw std::invalid_argument("RolloutConfig: epochs must be positive");
        if (rollout_batch < 0) throw std::invalid_argument("RolloutConfig: rollout_batch must be >= 0");
        if (horizon <= 0) throw std::invalid_argument("RolloutConfig: horizon must be positive");
        if (updates_per_epoch <= 0)
            throw std::invalid_argument("RolloutConfig: updates_per_epoch must be positive");
        if (batch_size <= 0) throw std::invalid_argument("RolloutConfig: batch_size must be positive");
        if (real_ratio < 0.0 || real_ratio > 1.0)
            throw std::invalid_argument("RolloutConfig: real_ratio in [0,1]");
        if (!(q_learning_rate > 0.0 && q_learning_rate <= 1.0))
            throw std::invalid_argument("RolloutConfig: q_learning_rate in (0,1]");
        if (exploration_eps < 0.0 || exploration_eps > 1.0)
            throw std::invalid_argument("RolloutConfig: exploration_eps in [0,1]");
        if (model_buffer_capacity == 0)
            throw std::invalid_argument("RolloutConfig: model_buffer_capacity must be positive");
    }
};

/// Synthetic transition with its penalty and model provenance.
struct SyntheticTransition {
    int state = 0;
    int action = 0;
    double reward_tilde = 0.0;
    int next_state = 0;
    double nhat = 0.0;
    int member = 0;  // ensemble member that generated next_state
};

/// Bounded FIFO of synthetic transitions; stored rewards are already
/// penalized.
class ModelBuffer {
  public:
    explicit ModelBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ModelBuffer: capacity must be positive");
    }

    void push(const SyntheticTransition& t) {
        if (buffer_.size() == capacity_) buffer_.pop_front();
        buffer_.push_back(t);
    }

    std::size_t size() const { return buffer_.size(); }
    bool empty() const { return buffer_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const SyntheticTransition& at(std::size_t i) const { return buffer_[i]; }

  private:
    std::size_t capacity_;
    std::deque<SyntheticTransition> buffer_;
};

struct RolloutStats {
    std::size_t synthetic_steps = 0;
    std::size_t real_samples = 0;
    std::size_t model_samples = 0;
    std::size_t final_buffer_size = 0;

    double real_fraction() const {
        const auto total = real_samples + model_samples;
        return total == 0 ? 0.0 : static_cast<double>(real_samples) / static_cast<double>(total);
    }
};

struct RolloutResult {
    PolicyTable policy;
    std::vector<double> q_table;  // S * A
    RolloutStats stats;
    ModelBuffer buffer{1};  // final synthetic replay buffer, kept for audit
};

/// Conservative model-based rollout planning with tabular Q-learning.
///
/// Per epoch: B rollouts of horizon H from states drawn uniformly from the
/// dataset's transitions; each step samples an action epsilon-greedily from
/// the current Q, samples one ensemble member, draws the next state from that
/// member's row (self-loop where the member never saw the pair), penalizes
/// the known reward by the approximate count, and appends the result to the
/// model buffer. Then updates_per_epoch batches mixing real transitions
/// (penalized on the fly with the same spec) and buffer transitions update Q.
///
/// The true reward table is an explicit input because rollouts can visit
/// pairs absent from the dataset and the reward function is assumed known.
inline RolloutResult rollout_plan(const EnsembleModel& ensemble, const CountEnsemble& counts,
                                  const OfflineDataset& data, std::span<const double> true_reward,
                                  const PenaltySpec& spec, const RolloutConfig& cfg, double gamma,
                                  double r_max) {
    cfg.validate();
    spec.validate();
    if (data.transitions.empty()) throw std::invalid_argument("rollout_plan: empty dataset");
    const int S = ensemble.num_states();
    const int A = ensemble.num_actions();
    if (true_reward.size() != static_cast<std::size_t>(S) * static_cast<std::size_t>(A))
        throw std::invalid_argument("rollout_plan: reward table size mismatch");

    Rng rng(derive_seed(cfg.seed, 0x9017));
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);
    ModelBuffer buffer(cfg.model_buffer_capacity);
    RolloutStats stats;

    // Counts are queried once per pair; the table is tiny next to the data.
    std::vector<double> nhat(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> r_tilde(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const std::size_t p = static_cast<std::size_t>(s) * A + a;
            nhat[p] = counts.estimate_count(s, a, spec.count_mode);
            r_tilde[p] = penalty(true_reward[p], nhat[p], spec, gamma, r_max).first;
        }

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
    auto q_update = [&](int s, int a, double r, int sp) {
        double best_next = q[static_cast<std::size_t>(sp) * A];
        for (int b = 1; b < A; ++b) best_next = std::max(best_next, q[static_cast<std::size_t>(sp) * A + b]);
        auto& cell = q[static_cast<std::size_t>(s) * A + a];
        cell += cfg.q_learning_rate * (r + gamma * best_next - cell);
    };

    const double effective_real_ratio = cfg.rollout_batch == 0 ? 1.0 : cfg.real_ratio;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int rollout = 0; rollout < cfg.rollout_batch; ++rollout) {
            int state = data.transitions[rng.next_index(data.size())].state;
            for (int t = 0; t < cfg.horizon; ++t) {
                const int action = rng.next_bernoulli(cfg.exploration_eps)
                                       ? static_cast<int>(rng.next_index(A))
                                       : greedy_action(state);
                const int member_idx = static_cast<int>(rng.next_index(ensemble.members.size()));
                const MleModel& member = ensemble.members[static_cast<std::size_t>(member_idx)];
                int next = state;  // self-loop where the member has no distribution
                if (member.is_observed(state, action))
                    next = static_cast<int>(rng.next_discrete(std::span<const double>(
                        member.row(state, action), static_cast<std::size_t>(S))));
                const std::size_t p = static_cast<std::size_t>(state) * A + action;
                buffer.push({state, action, r_tilde[p], next, nhat[p], member_idx});
                ++stats.synthetic_steps;
                state = next;
            }
        }

        for (int u = 0; u < cfg.updates_per_epoch; ++u) {
            for (int b = 0; b < cfg.batch_size; ++b) {
                const bool use_real = buffer.empty() || rng.next_bernoulli(effective_real_ratio);
                if (use_real) {
                    const Transition& t = data.transitions[rng.next_index(data.size())];
                    const std::size_t p = static_cast<std::size_t>(t.state) * A + t.action;
                    q_update(t.state, t.action, r_tilde[p], t.next_state);
                    ++stats.real_samples;
                } else {
                    const SyntheticTransition& t = buffer.at(rng.next_index(buffer.size()));
                    q_update(t.state, t.action, t.reward_tilde, t.next_state);
                    ++stats.model_samples;
                }
            }
        }
    }

    std::vector<int> greedy(static_cast<std::size_t>(S), 0);
    for (int s = 0; s < S; ++s) greedy[static_cast<std::size_t>(s)] = greedy_action(s);
    stats.final_buffer_size = buffer.size();
    return {PolicyTable::deterministic(S, A, greedy), std::move(q), stats, std::move(buffer)};
}

/// Policy CSV: s,a,prob (zero entries omitted).
inline void save_policy(const PolicyTable& policy, const std::string& path,
                        const std::string& preamble = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_policy: cannot open '" + path + "'");
    if (!preamble.empty()) out << preamble;
    out << "s,a,prob\n";
    for (int s = 0; s < policy.num_states; ++s)
        for (int a = 0; a < policy.num_actions; ++a)
            if (policy.at(s, a) != 0.0)
                out << s << ',' << a << ',' << format_double(policy.at(s, a)) << '\n';
}

inline PolicyTable load_policy(const std::string& path, int num_states, int num_actions) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_policy: cannot open '" + path + "'");
    PolicyTable policy{num_states, num_actions,
                       std::vector<double>(static_cast<std::size_t>(num_states) *
                                               static_cast<std::size_t>(num_actions),
                                           0.0)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line.rfind("s,a,", 0) == 0) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i)
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        if (fields.size() != 3) throw std::runtime_error(where + ": expected s,a,prob");
        const auto s = parse_int(fields[0], where);
        const auto a = parse_int(fields[1], where);
        policy.at(static_cast<int>(s), static_cast<int>(a)) = parse_double(fields[2], where);
    }
    policy.validate();
    return policy;
}

}  // namespace countmorl
