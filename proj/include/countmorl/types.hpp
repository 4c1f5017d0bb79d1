#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace countmorl {

using ValueVector = std::vector<double>;

/// Finite MDP (S, A, P, r, d0, gamma) with rewards bounded by r_max.
///
/// transition is stored row-major as [s][a][s'] in one flat vector; reward as
/// [s][a]. Instances are treated as immutable once validated.
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition;    // S * A * S
    std::vector<double> reward;        // S * A
    double r_max = 1.0;
    double gamma = 0.99;
    std::vector<double> initial_dist;  // S

    std::size_t pair_index(int s, int a) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
               static_cast<std::size_t>(a);
    }
    const double* row(int s, int a) const {
        return transition.data() + pair_index(s, a) * static_cast<std::size_t>(num_states);
    }
    double* row(int s, int a) {
        return transition.data() + pair_index(s, a) * static_cast<std::size_t>(num_states);
    }
    double reward_at(int s, int a) const { return reward[pair_index(s, a)]; }
    int num_pairs() const { return num_states * num_actions; }

    /// True iff every action in s is a unit self-loop.
    bool is_absorbing(int s) const {
        for (int a = 0; a < num_actions; ++a)
            if (row(s, a)[s] != 1.0) return false;
        return true;
    }

    void validate() const;
};

/// Stochastic policy: probs[s][a], each row a distribution over actions.
struct PolicyTable {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> probs;  // S * A

    double at(int s, int a) const {
        return probs[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
                     static_cast<std::size_t>(a)];
    }
    double& at(int s, int a) {
        return probs[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
                     static_cast<std::size_t>(a)];
    }

    void validate() const;

    static PolicyTable uniform(int num_states, int num_actions) {
        PolicyTable p{num_states, num_actions,
                      std::vector<double>(
                          static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions),
                          1.0 / num_actions)};
        return p;
    }

    /// Deterministic policy encoded as one-hot rows.
    static PolicyTable deterministic(int num_states, int num_actions,
                                     const std::vector<int>& action_of_state) {
        PolicyTable p{num_states, num_actions,
                      std::vector<double>(
                          static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions),
                          0.0)};
        for (int s = 0; s < num_states; ++s) p.at(s, action_of_state[static_cast<std::size_t>(s)]) = 1.0;
        return p;
    }
};

/// Discounted state-action visitation distribution d(s,a); sums to one.
struct VisitationDist {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> probs;  // S * A

    double at(int s, int a) const {
        return probs[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
                     static_cast<std::size_t>(a)];
    }
    void validate() const;
};

namespace detail {

inline void check_simplex_row(const double* row, int n, double tol, const std::string& what) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (row[i] < 0.0) throw std::invalid_argument(what + ": negative probability");
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument(what + ": row sums to " + std::to_string(sum) + ", expected 1");
}

}  // namespace detail

inline void TabularMdp::validate() const {
    if (num_states <= 0 || num_actions <= 0)
        throw std::invalid_argument("TabularMdp: num_states and num_actions must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("TabularMdp: gamma must lie in [0,1)");
    if (!(r_max > 0.0)) throw std::invalid_argument("TabularMdp: r_max must be positive");
    const auto S = static_cast<std::size_t>(num_states);
    const auto A = static_cast<std::size_t>(num_actions);
    if (transition.size() != S * A * S) throw std::invalid_argument("TabularMdp: transition size mismatch");
    if (reward.size() != S * A) throw std::invalid_argument("TabularMdp: reward size mismatch");
    if (initial_dist.size() != S) throw std::invalid_argument("TabularMdp: initial_dist size mismatch");
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a)
            detail::check_simplex_row(row(s, a), num_states, 1e-9,
                                      "TabularMdp: transition(" + std::to_string(s) + "," +
                                          std::to_string(a) + ")");
    detail::check_simplex_row(initial_dist.data(), num_states, 1e-9, "TabularMdp: initial_dist");
    for (double r : reward)
        if (std::abs(r) > r_max)
            throw std::invalid_argument("TabularMdp: |reward| exceeds r_max");
}

inline void PolicyTable::validate() const {
    if (num_states <= 0 || num_actions <= 0)
        throw std::invalid_argument("PolicyTable: dimensions must be positive");
    if (probs.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions))
        throw std::invalid_argument("PolicyTable: probs size mismatch");
    for (int s = 0; s < num_states; ++s)
        detail::check_simplex_row(probs.data() + static_cast<std::size_t>(s) * num_actions, num_actions,
                                  1e-9, "PolicyTable: row " + std::to_string(s));
}

inline void VisitationDist::validate() const {
    if (probs.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions))
        throw std::invalid_argument("VisitationDist: probs size mismatch");
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw std::invalid_argument("VisitationDist: negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-8)
        throw std::invalid_argument("VisitationDist: total mass " + std::to_string(sum));
}

}  // namespace countmorl
