#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "countmorl/conservative_mdp.hpp"
#include "countmorl/dataset.hpp"
#include "countmorl/experiment.hpp"
#include "countmorl/mdp_core.hpp"
#include "countmorl/model_estimation.hpp"
#include "countmorl/planner.hpp"

namespace countmorl {

struct TheoryCheckConfig {
    std::string scaling_env = "synthetic/random-5x2-seed2024";
    int scaling_draws = 60;
    std::size_t scaling_min_size = 200;
    std::size_t scaling_max_size = 100000;

    std::string coverage_env = "synthetic/random-5x2-seed2024";
    int calibration_reps = 100;
    int coverage_reps = 200;
    std::size_t coverage_dataset_size = 2000;
    double delta = 0.1;

    std::vector<std::string> enum_envs{"synthetic/random-3x2-seed7",
                                       "synthetic/random-4x3-seed11"};
    int inequality_reps = 100;
    std::size_t inequality_min_size = 100;
    std::size_t inequality_max_size = 2000;
    double tolerance = 1e-6;

    std::uint64_t seed = 1;
};

inline TheoryCheckConfig parse_theory_config(const ConfigFile& file) {
    TheoryCheckConfig cfg;
    cfg.scaling_env = file.get_string("theory.scaling_env", cfg.scaling_env);
    cfg.scaling_draws = static_cast<int>(file.get_int("theory.scaling_draws", cfg.scaling_draws));
    cfg.scaling_min_size = static_cast<std::size_t>(
        file.get_int("theory.scaling_min_size", static_cast<long long>(cfg.scaling_min_size)));
    cfg.scaling_max_size = static_cast<std::size_t>(
        file.get_int("theory.scaling_max_size", static_cast<long long>(cfg.scaling_max_size)));
    cfg.coverage_env = file.get_string("theory.coverage_env", cfg.coverage_env);
    cfg.calibration_reps =
        static_cast<int>(file.get_int("theory.calibration_reps", cfg.calibration_reps));
    cfg.coverage_reps = static_cast<int>(file.get_int("theory.coverage_reps", cfg.coverage_reps));
    cfg.coverage_dataset_size = static_cast<std::size_t>(file.get_int(
        "theory.coverage_dataset_size", static_cast<long long>(cfg.coverage_dataset_size)));
    cfg.delta = file.get_double("theory.delta", cfg.delta);
    cfg.enum_envs = file.get_list("theory.enum_envs", cfg.enum_envs);
    cfg.inequality_reps =
        static_cast<int>(file.get_int("theory.inequality_reps", cfg.inequality_reps));
    cfg.inequality_min_size = static_cast<std::size_t>(file.get_int(
        "theory.inequality_min_size", static_cast<long long>(cfg.inequality_min_size)));
    cfg.inequality_max_size = static_cast<std::size_t>(file.get_int(
        "theory.inequality_max_size", static_cast<long long>(cfg.inequality_max_size)));
    cfg.tolerance = file.get_double("theory.tolerance", cfg.tolerance);
    cfg.seed = static_cast<std::uint64_t>(file.get_int("theory.seed", 1));
    return cfg;
}

// ---------------------------------------------------------------------------
// (a) estimation-error scaling: median TV against exact counts
// ---------------------------------------------------------------------------

struct ScalingBin {
    double count_center = 0.0;
    double median_tv = 0.0;
    std::size_t samples = 0;
};

struct ScalingResult {
    double slope = 0.0;
    std::vector<ScalingBin> bins;
    std::size_t draws = 0;
    std::size_t samples = 0;
};

/// Repeatedly draws datasets of geometrically spaced sizes, fits the MLE, and
/// regresses log median TV on log count over log-spaced count bins.
inline ScalingResult tv_scaling_experiment(const TabularMdp& truth, int draws,
                                           std::size_t min_size, std::size_t max_size,
                                           std::uint64_t seed) {
    const PolicyTable behavior = PolicyTable::uniform(truth.num_states, truth.num_actions);
    std::vector<std::pair<double, double>> samples;  // (count, tv)
    for (int draw = 0; draw < draws; ++draw) {
        const double frac = draws == 1 ? 0.0 : static_cast<double>(draw) / (draws - 1);
        const auto n = static_cast<std::size_t>(
            static_cast<double>(min_size) *
            std::pow(static_cast<double>(max_size) / static_cast<double>(min_size), frac));
        const auto data = generate_dataset(truth, behavior, n, derive_seed(seed, 10 + draw), 100);
        const auto model = fit_mle(data);
        const auto tv = tv_errors(model, truth);
        const auto counts = exact_counts(data);
        for (int s = 0; s < truth.num_states; ++s)
            for (int a = 0; a < truth.num_actions; ++a)
                if (counts.at(s, a) >= 10)
                    samples.emplace_back(static_cast<double>(counts.at(s, a)),
                                         tv[model.pair_index(s, a)]);
    }

    ScalingResult result;
    result.draws = static_cast<std::size_t>(draws);
    result.samples = samples.size();
    const double lo = std::log(10.0), hi = std::log(1e4);
    const int bins = 10;
    std::vector<double> xs, ys;
    for (int b = 0; b < bins; ++b) {
        const double left = std::exp(lo + (hi - lo) * b / bins);
        const double right = std::exp(lo + (hi - lo) * (b + 1) / bins);
        std::vector<double> tvs;
        for (auto [n, tv] : samples)
            if (n >= left && n < right && tv > 0.0) tvs.push_back(tv);
        if (tvs.size() < 5) continue;
        std::nth_element(tvs.begin(), tvs.begin() + static_cast<std::ptrdiff_t>(tvs.size() / 2),
                         tvs.end());
        ScalingBin bin;
        bin.count_center = std::sqrt(left * right);
        bin.median_tv = tvs[tvs.size() / 2];
        bin.samples = tvs.size();
        result.bins.push_back(bin);
        xs.push_back(std::log(bin.count_center));
        ys.push_back(std::log(bin.median_tv));
    }
    if (xs.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= static_cast<double>(xs.size());
        my /= static_cast<double>(xs.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        result.slope = sxy / sxx;
    }
    return result;
}

// ---------------------------------------------------------------------------
// (b) bound coverage with a calibrated log model-class knob
// ---------------------------------------------------------------------------

struct CoverageResult {
    double delta = 0.1;
    double default_log_model_class = 0.0;
    double default_coverage = 0.0;
    double calibrated_log_model_class = 0.0;
    double calibrated_coverage = 0.0;  // measured on fresh repetitions
    std::size_t calibration_samples = 0;
    std::size_t eval_samples = 0;
};

namespace detail {

/// (tv, n) samples of observed pairs over repeated dataset draws.
inline std::vector<std::pair<double, double>> coverage_samples(const TabularMdp& truth, int reps,
                                                               std::size_t dataset_size,
                                                               std::uint64_t seed) {
    const PolicyTable behavior = PolicyTable::uniform(truth.num_states, truth.num_actions);
    std::vector<std::pair<double, double>> samples;
    for (int rep = 0; rep < reps; ++rep) {
        const auto data =
            generate_dataset(truth, behavior, dataset_size, derive_seed(seed, 100 + rep), 100);
        const auto model = fit_mle(data);
        const auto tv = tv_errors(model, truth);
        const auto counts = exact_counts(data);
        for (int s = 0; s < truth.num_states; ++s)
            for (int a = 0; a < truth.num_actions; ++a)
                if (counts.at(s, a) > 0)
                    samples.emplace_back(tv[model.pair_index(s, a)],
                                         static_cast<double>(counts.at(s, a)));
    }
    return samples;
}

inline double coverage_at(const std::vector<std::pair<double, double>>& samples,
                          const ErrorBoundConfig& cfg) {
    std::size_t covered = 0;
    for (auto [tv, n] : samples)
        if (tv <= error_bound(n, cfg)) ++covered;
    return samples.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(samples.size());
}

/// Smallest log_model_class whose coverage reaches 1 - delta: each sample is
/// covered iff L >= n tv^2/2 - log(1/delta), so the answer is the
/// (1-delta)-quantile of those per-sample thresholds.
inline double calibrate_log_model_class(const std::vector<std::pair<double, double>>& samples,
                                        double delta) {
    std::vector<double> thresholds;
    thresholds.reserve(samples.size());
    for (auto [tv, n] : samples)
        thresholds.push_back(std::max(0.0, n * tv * tv / 2.0 - std::log(1.0 / delta)));
    std::sort(thresholds.begin(), thresholds.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil((1.0 - delta) * static_cast<double>(thresholds.size())));
    const double L = thresholds[std::min(thresholds.size() - 1, rank == 0 ? 0 : rank - 1)];
    return std::max(L, 1e-9);
}

}  // namespace detail

inline CoverageResult coverage_experiment(const TabularMdp& truth, double delta,
                                          int calibration_reps, int eval_reps,
                                          std::size_t dataset_size, std::uint64_t seed) {
    CoverageResult result;
    result.delta = delta;
    result.default_log_model_class = default_log_model_class(truth.num_states);

    const auto calib =
        detail::coverage_samples(truth, calibration_reps, dataset_size, derive_seed(seed, 1));
    const auto eval =
        detail::coverage_samples(truth, eval_reps, dataset_size, derive_seed(seed, 2));
    result.calibration_samples = calib.size();
    result.eval_samples = eval.size();

    result.default_coverage = detail::coverage_at(eval, {delta, result.default_log_model_class});
    result.calibrated_log_model_class = detail::calibrate_log_model_class(calib, delta);
    result.calibrated_coverage =
        detail::coverage_at(eval, {delta, result.calibrated_log_model_class});
    return result;
}

// ---------------------------------------------------------------------------
// (c) value-gap, pessimism, and sub-optimality inequalities on enumerable MDPs
// ---------------------------------------------------------------------------

struct InequalityResult {
    std::string env_id;
    int reps = 0;
    int events = 0;  // repetitions where the per-pair TV-bound event held
    int valuegap_violations = 0;
    int pessimism_violations = 0;
    int suboptimality_violations = 0;
    int policies = 0;
};

/// One repetition: draw a dataset, fit the MLE, verify the TV-bound event and
/// conditionally check the three inequalities over every deterministic
/// policy, all computed with exact solvers and exact counts (epsilon = 0).
inline InequalityResult inequality_experiment(const std::string& env_id, const TabularMdp& truth,
                                              int reps, double delta, double tolerance,
                                              std::size_t min_size, std::size_t max_size,
                                              std::uint64_t seed) {
    if (truth.num_states * truth.num_actions > 12)
        throw StageError(Stage::Config,
                         "inequality checks need S*A <= 12 for policy enumeration, got " +
                             std::to_string(truth.num_states * truth.num_actions));
    InequalityResult result;
    result.env_id = env_id;
    result.reps = reps;
    const double solver_tol = 1e-10;
    const ErrorBoundConfig bound_cfg{delta, default_log_model_class(truth.num_states)};
    const PolicyTable behavior = PolicyTable::uniform(truth.num_states, truth.num_actions);

    // enumerate deterministic policies once
    std::vector<PolicyTable> policies;
    {
        std::vector<int> choice(static_cast<std::size_t>(truth.num_states), 0);
        while (true) {
            policies.push_back(
                PolicyTable::deterministic(truth.num_states, truth.num_actions, choice));
            int i = 0;
            for (; i < truth.num_states; ++i) {
                if (++choice[static_cast<std::size_t>(i)] < truth.num_actions) break;
                choice[static_cast<std::size_t>(i)] = 0;
            }
            if (i == truth.num_states) break;
        }
    }
    result.policies = static_cast<int>(policies.size());

    const double coef =
        truth.gamma * truth.r_max / ((1.0 - truth.gamma) * (1.0 - truth.gamma));

    for (int rep = 0; rep < reps; ++rep) {
        Rng size_rng(derive_seed(seed, 7000 + rep));
        const std::size_t n =
            min_size + size_rng.next_index(std::max<std::size_t>(1, max_size - min_size));
        const auto data = generate_dataset(truth, behavior, n, derive_seed(seed, 400 + rep), 100);
        const auto model = fit_mle(data);
        const auto counts = exact_counts(data);
        const auto tv = tv_errors(model, truth);

        std::vector<double> c_hat(static_cast<std::size_t>(truth.num_pairs()), 1.0);
        bool event = true;
        for (int s = 0; s < truth.num_states; ++s)
            for (int a = 0; a < truth.num_actions; ++a) {
                const std::size_t p = model.pair_index(s, a);
                c_hat[p] = error_bound(static_cast<double>(counts.at(s, a)), bound_cfg);
                if (tv[p] > c_hat[p]) event = false;
            }
        if (!event) continue;
        ++result.events;

        TabularMdp m_hat = truth;
        m_hat.transition = complete_transition(model);

        PenaltySpec spec;
        spec.mode = PenaltyMode::Theory;
        spec.bound_cfg = bound_cfg;
        const auto ensemble = fit_ensemble(data, 1, 1, /*include_plain=*/true);
        std::vector<double> nhat(c_hat.size(), 0.0);
        for (std::size_t p = 0; p < nhat.size(); ++p)
            nhat[p] = static_cast<double>(counts.counts[p]);
        const auto cmdp = build_conservative_mdp_from_nhat(
            ensemble, nhat, truth.reward, spec, truth.gamma, truth.r_max, truth.initial_dist);

        const auto [pi_hat, v_hat] = exact_plan(cmdp, solver_tol);
        const double learned_truth = scalar_return(truth, pi_hat, solver_tol);

        for (const auto& pi : policies) {
            const double v_star = scalar_return(truth, pi, solver_tol);
            const double v_hat_pi = scalar_return(m_hat, pi, solver_tol);
            const double v_tilde = scalar_return(cmdp.base, pi, solver_tol);
            const auto d_hat = discounted_visitation(m_hat, pi, solver_tol);
            double expected_c = 0.0;
            for (std::size_t p = 0; p < c_hat.size(); ++p) expected_c += d_hat.probs[p] * c_hat[p];

            // value gap of the estimated model (epsilon = 0)
            if (v_hat_pi - v_star > coef * expected_c + tolerance) ++result.valuegap_violations;
            // pessimism of the conservative model
            if (v_tilde > v_star + tolerance) ++result.pessimism_violations;
            // sub-optimality lower bound for the planned policy
            if (learned_truth < v_star - 2.0 * coef * expected_c - tolerance)
                ++result.suboptimality_violations;
        }
    }
    return result;
}

struct TheoryReport {
    ScalingResult scaling;
    CoverageResult coverage;
    std::vector<InequalityResult> inequalities;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;

    bool slope_in_range() const { return scaling.slope > -0.65 && scaling.slope < -0.35; }
    bool coverage_ok() const { return coverage.calibrated_coverage >= 1.0 - coverage.delta - 0.02; }
    bool inequalities_ok() const {
        for (const auto& r : inequalities)
            if (r.valuegap_violations + r.pessimism_violations + r.suboptimality_violations > 0 ||
                r.events == 0)
                return false;
        return true;
    }
    bool all_ok() const { return slope_in_range() && coverage_ok() && inequalities_ok(); }
};

inline TheoryReport run_theory_check(const TheoryCheckConfig& cfg) {
    TheoryReport report;
    report.seed = cfg.seed;
    const auto scaling_env = build_env(cfg.scaling_env);
    report.scaling =
        tv_scaling_experiment(scaling_env.mdp, cfg.scaling_draws, cfg.scaling_min_size,
                              cfg.scaling_max_size, derive_seed(cfg.seed, 1));
    const auto coverage_env = build_env(cfg.coverage_env);
    report.coverage =
        coverage_experiment(coverage_env.mdp, cfg.delta, cfg.calibration_reps, cfg.coverage_reps,
                            cfg.coverage_dataset_size, derive_seed(cfg.seed, 2));
    for (std::size_t i = 0; i < cfg.enum_envs.size(); ++i) {
        const auto env = build_env(cfg.enum_envs[i]);
        report.inequalities.push_back(inequality_experiment(
            cfg.enum_envs[i], env.mdp, cfg.inequality_reps, cfg.delta, cfg.tolerance,
            cfg.inequality_min_size, cfg.inequality_max_size, derive_seed(cfg.seed, 3 + i)));
    }
    return report;
}

inline std::string render_theory_csv(const TheoryReport& report) {
    std::string out = csv_preamble(report.config_hash, report.seed);
    out += "section,key,value\n";
    out += "scaling,slope," + format_double(report.scaling.slope) + "\n";
    out += "scaling,draws," + std::to_string(report.scaling.draws) + "\n";
    out += "scaling,samples," + std::to_string(report.scaling.samples) + "\n";
    for (const auto& bin : report.scaling.bins)
        out += "scaling_bin," + format_double(bin.count_center) + "," +
               format_double(bin.median_tv) + "\n";
    out += "coverage,delta," + format_double(report.coverage.delta) + "\n";
    out += "coverage,default_log_model_class," +
           format_double(report.coverage.default_log_model_class) + "\n";
    out += "coverage,default_coverage," + format_double(report.coverage.default_coverage) + "\n";
    out += "coverage,calibrated_log_model_class," +
           format_double(report.coverage.calibrated_log_model_class) + "\n";
    out += "coverage,calibrated_coverage," + format_double(report.coverage.calibrated_coverage) +
           "\n";
    for (const auto& r : report.inequalities) {
        const std::string tag = "inequality[" + r.env_id + "]";
        out += tag + ",reps," + std::to_string(r.reps) + "\n";
        out += tag + ",events," + std::to_string(r.events) + "\n";
        out += tag + ",policies," + std::to_string(r.policies) + "\n";
        out += tag + ",valuegap_violations," + std::to_string(r.valuegap_violations) + "\n";
        out += tag + ",pessimism_violations," + std::to_string(r.pessimism_violations) + "\n";
        out += tag + ",suboptimality_violations," + std::to_string(r.suboptimality_violations) +
               "\n";
    }
    out += "verdict,slope_in_range," + std::string(report.slope_in_range() ? "1" : "0") + "\n";
    out += "verdict,coverage_ok," + std::string(report.coverage_ok() ? "1" : "0") + "\n";
    out += "verdict,inequalities_ok," + std::string(report.inequalities_ok() ? "1" : "0") + "\n";
    return out;
}

}  // namespace countmorl
