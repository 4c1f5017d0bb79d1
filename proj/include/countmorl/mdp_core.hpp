#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "countmorl/types.hpp"

namespace countmorl {

namespace detail {

inline void check_dims(const TabularMdp& mdp, const PolicyTable& policy) {
    if (policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions)
        throw std::invalid_argument("policy dimensions do not match MDP");
}

/// One synchronous application of the Bellman operator T_pi.
inline void apply_policy_bellman(const TabularMdp& mdp, const PolicyTable& policy,
                                 const ValueVector& in, ValueVector& out) {
    for (int s = 0; s < mdp.num_states; ++s) {
        double v = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double pa = policy.at(s, a);
            if (pa == 0.0) continue;
            const double* row = mdp.row(s, a);
            double next = 0.0;
            for (int sp = 0; sp < mdp.num_states; ++sp) next += row[sp] * in[static_cast<std::size_t>(sp)];
            v += pa * (mdp.reward_at(s, a) + mdp.gamma * next);
        }
        out[static_cast<std::size_t>(s)] = v;
    }
}

inline double sup_diff(const ValueVector& a, const ValueVector& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// Stopping threshold on successive iterates that guarantees a sup-norm error
/// of at most tol for a gamma-contraction.
inline double contraction_threshold(double gamma, double tol) {
    if (gamma <= 0.0) return std::numeric_limits<double>::infinity();
    return tol * (1.0 - gamma) / gamma;
}

}  // namespace detail

/// Evaluates V^pi by synchronous fixed-point iteration.
///
/// The returned V satisfies ||V - T_pi V||_inf <= tol*(1-gamma)/gamma and
/// hence ||V - V^pi||_inf <= tol.
inline ValueVector policy_evaluation(const TabularMdp& mdp, const PolicyTable& policy, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("policy_evaluation: tol must be positive");
    detail::check_dims(mdp, policy);
    const double threshold = detail::contraction_threshold(mdp.gamma, tol);
    ValueVector v(static_cast<std::size_t>(mdp.num_states), 0.0);
    ValueVector next(v.size(), 0.0);
    while (true) {
        detail::apply_policy_bellman(mdp, policy, v, next);
        const double delta = detail::sup_diff(v, next);
        v.swap(next);
        if (delta <= threshold) break;
    }
    return v;
}

/// Solves the MDP by synchronous value iteration.
///
/// Returns V within tol of V* in sup-norm together with the greedy policy of
/// the returned V, encoded one-hot, ties broken toward the lowest action.
inline std::pair<ValueVector, PolicyTable> value_iteration(const TabularMdp& mdp, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    const double threshold = detail::contraction_threshold(mdp.gamma, tol);
    ValueVector v(static_cast<std::size_t>(mdp.num_states), 0.0);
    ValueVector next(v.size(), 0.0);
    while (true) {
        for (int s = 0; s < mdp.num_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < mdp.num_actions; ++a) {
                const double* row = mdp.row(s, a);
                double q = mdp.reward_at(s, a);
                double tail = 0.0;
                for (int sp = 0; sp < mdp.num_states; ++sp)
                    tail += row[sp] * v[static_cast<std::size_t>(sp)];
                q += mdp.gamma * tail;
                if (q > best) best = q;
            }
            next[static_cast<std::size_t>(s)] = best;
        }
        const double delta = detail::sup_diff(v, next);
        v.swap(next);
        if (delta <= threshold) break;
    }

    std::vector<int> greedy(static_cast<std::size_t>(mdp.num_states), 0);
    for (int s = 0; s < mdp.num_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double* row = mdp.row(s, a);
            double q = mdp.reward_at(s, a);
            double tail = 0.0;
            for (int sp = 0; sp < mdp.num_states; ++sp) tail += row[sp] * v[static_cast<std::size_t>(sp)];
            q += mdp.gamma * tail;
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        greedy[static_cast<std::size_t>(s)] = best_a;
    }
    return {std::move(v), PolicyTable::deterministic(mdp.num_states, mdp.num_actions, greedy)};
}

/// Discounted state-action visitation d(s,a) = (1-gamma) sum_t gamma^t
/// Pr(s_t = s) pi(a|s), computed to within tol in L1.
///
/// Iterates the affine map nu <- (1-gamma) d0 + gamma P_pi' nu whose iterates
/// stay on the simplex, so the result sums to one at float precision
/// independent of tol.
inline VisitationDist discounted_visitation(const TabularMdp& mdp, const PolicyTable& policy,
                                            double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("discounted_visitation: tol must be positive");
    detail::check_dims(mdp, policy);
    const int S = mdp.num_states;
    const int A = mdp.num_actions;

    // State-to-state kernel under the policy.
    std::vector<double> kernel(static_cast<std::size_t>(S) * static_cast<std::size_t>(S), 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double pa = policy.at(s, a);
            if (pa == 0.0) continue;
            const double* row = mdp.row(s, a);
            for (int sp = 0; sp < S; ++sp)
                kernel[static_cast<std::size_t>(s) * S + sp] += pa * row[sp];
        }

    std::vector<double> nu(mdp.initial_dist);
    std::vector<double> next(static_cast<std::size_t>(S), 0.0);
    const double threshold = detail::contraction_threshold(mdp.gamma, tol);
    while (true) {
        for (int sp = 0; sp < S; ++sp) next[static_cast<std::size_t>(sp)] = (1.0 - mdp.gamma) * mdp.initial_dist[static_cast<std::size_t>(sp)];
        for (int s = 0; s < S; ++s) {
            const double mass = mdp.gamma * nu[static_cast<std::size_t>(s)];
            if (mass == 0.0) continue;
            const double* krow = kernel.data() + static_cast<std::size_t>(s) * S;
            for (int sp = 0; sp < S; ++sp) next[static_cast<std::size_t>(sp)] += mass * krow[sp];
        }
        double delta = 0.0;
        for (int s = 0; s < S; ++s) delta += std::abs(next[static_cast<std::size_t>(s)] - nu[static_cast<std::size_t>(s)]);
        nu.swap(next);
        if (delta <= threshold) break;
    }

    VisitationDist dist{S, A, std::vector<double>(static_cast<std::size_t>(S) * static_cast<std::size_t>(A), 0.0)};
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            dist.probs[static_cast<std::size_t>(s) * A + a] = nu[static_cast<std::size_t>(s)] * policy.at(s, a);
    return dist;
}

/// Expected discounted return from the initial distribution, E_{d0}[V^pi].
inline double scalar_return(const TabularMdp& mdp, const PolicyTable& policy, double tol) {
    const ValueVector v = policy_evaluation(mdp, policy, tol);
    double total = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) total += mdp.initial_dist[static_cast<std::size_t>(s)] * v[static_cast<std::size_t>(s)];
    return total;
}

/// Total variation distance between two finite distributions (half L1).
inline double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
    if (p.empty()) throw std::invalid_argument("total_variation: empty input");
    double sum_p = 0.0, sum_q = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("total_variation: negative entry");
        sum_p += p[i];
        sum_q += q[i];
        acc += std::abs(p[i] - q[i]);
    }
    if (std::abs(sum_p - 1.0) > 1e-6 || std::abs(sum_q - 1.0) > 1e-6)
        throw std::invalid_argument("total_variation: inputs must be probability vectors");
    return 0.5 * acc;
}

}  // namespace countmorl
