#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/counting.hpp"
#include "countmorl/model_estimation.hpp"
#include "countmorl/types.hpp"

namespace countmorl {

enum class PenaltyMode { Theory, Practical };

/// How rewards are penalized when building the conservative MDP.
///
/// Theory: r - (gamma R_max / (1-gamma)) * error_bound(n_hat). Practical:
/// r - beta/sqrt(n_hat) when n_hat > 0, r - beta otherwise. Note the
/// practical branch follows the rollout rule literally, so fractional counts
/// in (0,1) are penalized by more than beta.
struct PenaltySpec {
    PenaltyMode mode = PenaltyMode::Practical;
    double beta = 1.0;                  // Practical
    ErrorBoundConfig bound_cfg;         // Theory
    CountMode count_mode = CountMode::AVG;
    double alpha = 0.5;                 // recorded for audit; the count ensemble applies it

    void validate() const {
        // beta = 0 is allowed so the unpenalized baseline is expressible.
        if (mode == PenaltyMode::Practical && beta < 0.0)
            throw std::invalid_argument("PenaltySpec: beta must be non-negative");
        if (mode == PenaltyMode::Theory) bound_cfg.validate();
        if (alpha < 0.0) throw std::invalid_argument("PenaltySpec: alpha must be non-negative");
    }
};

/// Penalized reward and the penalty applied to it.
inline std::pair<double, double> penalty(double r, double n_hat, const PenaltySpec& spec,
                                         double mdp_gamma, double mdp_rmax) {
    spec.validate();
    double pen = 0.0;
    if (spec.mode == PenaltyMode::Practical) {
        pen = n_hat > 0.0 ? spec.beta / std::sqrt(n_hat) : spec.beta;
    } else {
        pen = (mdp_gamma * mdp_rmax / (1.0 - mdp_gamma)) * error_bound(n_hat, spec.bound_cfg);
    }
    return {r - pen, pen};
}

/// Estimated-dynamics MDP with count-penalized rewards plus the per-pair
/// penalty provenance used by audits.
struct ConservativeMdp {
    TabularMdp base;                    // transition = completed ensemble mean, reward = r_tilde
    std::vector<double> penalty_table;  // S * A
    std::vector<double> nhat_table;     // S * A
};

/// Builds the conservative MDP from a dense table of approximate counts.
inline ConservativeMdp build_conservative_mdp_from_nhat(
    const EnsembleModel& ensemble, std::span<const double> nhat, std::span<const double> true_reward,
    const PenaltySpec& spec, double gamma, double r_max, std::span<const double> initial_dist) {
    spec.validate();
    const int S = ensemble.num_states();
    const int A = ensemble.num_actions();
    const auto pairs = static_cast<std::size_t>(S) * static_cast<std::size_t>(A);
    if (nhat.size() != pairs || true_reward.size() != pairs)
        throw std::invalid_argument("build_conservative_mdp: table size mismatch");
    if (initial_dist.size() != static_cast<std::size_t>(S))
        throw std::invalid_argument("build_conservative_mdp: initial_dist size mismatch");

    ConservativeMdp out;
    const MleModel mean = ensemble_mean_model(ensemble);
    out.base.num_states = S;
    out.base.num_actions = A;
    out.base.gamma = gamma;
    out.base.transition = complete_transition(mean);
    out.base.initial_dist.assign(initial_dist.begin(), initial_dist.end());
    out.base.reward.resize(pairs);
    out.penalty_table.resize(pairs);
    out.nhat_table.assign(nhat.begin(), nhat.end());

    double max_abs_reward = r_max;
    for (std::size_t p = 0; p < pairs; ++p) {
        const auto [r_tilde, pen] = penalty(true_reward[p], nhat[p], spec, gamma, r_max);
        out.base.reward[p] = r_tilde;
        out.penalty_table[p] = pen;
        max_abs_reward = std::max(max_abs_reward, std::abs(r_tilde));
    }
    // Penalties can push rewards below -r_max; the stored bound tracks the
    // actual range.
    out.base.r_max = max_abs_reward;
    out.base.validate();
    return out;
}

/// Builds the conservative MDP querying the count ensemble under the spec's
/// count mode.
inline ConservativeMdp build_conservative_mdp(const EnsembleModel& ensemble,
                                              const CountEnsemble& counts,
                                              std::span<const double> true_reward,
                                              const PenaltySpec& spec, double gamma, double r_max,
                                              std::span<const double> initial_dist) {
    const int S = ensemble.num_states();
    const int A = ensemble.num_actions();
    if (counts.num_states() != S || counts.num_actions() != A)
        throw std::invalid_argument("build_conservative_mdp: count ensemble dimensions mismatch");
    std::vector<double> nhat(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            nhat[static_cast<std::size_t>(s) * A + a] = counts.estimate_count(s, a, spec.count_mode);
    return build_conservative_mdp_from_nhat(ensemble, nhat, true_reward, spec, gamma, r_max,
                                            initial_dist);
}

/// Penalty audit CSV: s,a,r,nhat,penalty,rtilde.
inline void save_penalty_audit(const ConservativeMdp& cmdp, std::span<const double> true_reward,
                               const std::string& path, const std::string& preamble = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_penalty_audit: cannot open '" + path + "'");
    if (!preamble.empty()) out << preamble;
    out << "s,a,r,nhat,penalty,rtilde\n";
    const int A = cmdp.base.num_actions;
    for (int s = 0; s < cmdp.base.num_states; ++s)
        for (int a = 0; a < A; ++a) {
            const std::size_t p = static_cast<std::size_t>(s) * A + a;
            out << s << ',' << a << ',' << format_double(true_reward[p]) << ','
                << format_double(cmdp.nhat_table[p]) << ',' << format_double(cmdp.penalty_table[p])
                << ',' << format_double(cmdp.base.reward[p]) << '\n';
        }
}

}  // namespace countmorl
