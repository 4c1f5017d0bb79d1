#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "countmorl/config.hpp"
#include "countmorl/conservative_mdp.hpp"
#include "countmorl/counting.hpp"
#include "countmorl/dataset.hpp"
#include "countmorl/gridworld.hpp"
#include "countmorl/mdp_core.hpp"
#include "countmorl/model_estimation.hpp"
#include "countmorl/planner.hpp"
#include "countmorl/svg.hpp"
#include "countmorl/synthetic.hpp"

namespace countmorl {

/// Pipeline stages mapped to distinct process exit codes.
enum class Stage : int {
    Config = 2,
    Dataset = 3,
    Model = 4,
    Counting = 5,
    Conservative = 6,
    Planner = 7,
    Eval = 8,
    Io = 9,
};

struct StageError : std::runtime_error {
    StageError(Stage stage, const std::string& msg)
        : std::runtime_error(msg), stage(stage) {}
    Stage stage;
};

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Config: return "config";
        case Stage::Dataset: return "dataset";
        case Stage::Model: return "model";
        case Stage::Counting: return "counting";
        case Stage::Conservative: return "conservative";
        case Stage::Planner: return "planner";
        case Stage::Eval: return "eval";
        case Stage::Io: return "io";
    }
    return "?";
}

/// Environment handle: the true MDP plus the grid layout when the env is a
/// grid world.
struct EnvHandle {
    std::string env_id;
    TabularMdp mdp;
    std::optional<GridLayout> layout;
};

inline EnvHandle build_env(const std::string& env_id) {
    EnvHandle env;
    env.env_id = env_id;
    if (env_id.rfind("grid/", 0) == 0) {
        const std::string name = env_id.substr(5);
        GridKind kind;
        if (name == "empty")
            kind = GridKind::Empty;
        else if (name == "bridge")
            kind = GridKind::Bridge;
        else if (name == "cliff")
            kind = GridKind::Cliff;
        else if (name == "zigzag")
            kind = GridKind::ZigZag;
        else
            throw StageError(Stage::Config, "unknown grid environment '" + env_id + "'");
        env.layout = make_layout(kind);
        env.mdp = build_gridworld(*env.layout);
        return env;
    }
    if (env_id.rfind("synthetic/", 0) == 0) {
        try {
            env.mdp = synthetic_from_id(env_id.substr(10));
        } catch (const std::exception& e) {
            throw StageError(Stage::Config, e.what());
        }
        return env;
    }
    if (env_id.rfind("gridfile/", 0) == 0) {
        env.layout = load_layout(env_id.substr(9));
        env.mdp = build_gridworld(*env.layout);
        return env;
    }
    throw StageError(Stage::Config, "unknown environment id '" + env_id + "'");
}

/// Everything one experiment needs; parsed from the config file with
/// documented defaults.
struct ExperimentConfig {
    std::string env_id = "grid/bridge";

    // dataset
    std::string dataset_source = "replay";  // replay | policy | file
    std::string dataset_path;
    int behavior_episodes = 1000;
    double behavior_epsilon = 0.3;
    double behavior_learning_rate = 0.1;
    int max_episode_steps = 100;
    std::size_t n_transitions = 50000;  // policy source
    int episode_cap = 100;
    double quality_eps = 0.05;   // policy source: epsilon around the converged greedy policy
    int pretrain_episodes = 3000;

    // ensemble
    int ensemble_members = 5;
    bool include_plain = false;

    // counting
    std::string feature_map = "onehot";
    double noise_rho = kNoisyOneHotDefaultRho;
    int code_bits = 32;
    int count_members = 5;
    double alpha = 0.5;

    // penalty
    PenaltySpec penalty;

    // planner
    std::string planner = "exact";  // exact | rollout
    double plan_tol = 1e-9;
    RolloutConfig rollout;

    // eval
    int num_seeds = 5;
    double eval_tol = 1e-9;

    std::uint64_t seed = 1;
    std::string out_dir;

    std::uint64_t config_hash = 0;
};

inline ExperimentConfig parse_experiment_config(const ConfigFile& file) {
    ExperimentConfig cfg;
    cfg.env_id = file.get_string("experiment.env_id", cfg.env_id);
    cfg.seed = static_cast<std::uint64_t>(file.get_int("experiment.seed", 1));
    cfg.out_dir = file.get_string("experiment.out_dir", "");

    cfg.dataset_source = file.get_string("dataset.source", cfg.dataset_source);
    cfg.dataset_path = file.get_string("dataset.path", "");
    cfg.behavior_episodes = static_cast<int>(file.get_int("dataset.episodes", cfg.behavior_episodes));
    cfg.behavior_epsilon = file.get_double("dataset.epsilon", cfg.behavior_epsilon);
    cfg.behavior_learning_rate =
        file.get_double("dataset.learning_rate", cfg.behavior_learning_rate);
    cfg.max_episode_steps =
        static_cast<int>(file.get_int("dataset.max_episode_steps", cfg.max_episode_steps));
    cfg.n_transitions =
        static_cast<std::size_t>(file.get_int("dataset.n_transitions",
                                              static_cast<long long>(cfg.n_transitions)));
    cfg.episode_cap = static_cast<int>(file.get_int("dataset.episode_cap", cfg.episode_cap));
    cfg.quality_eps = file.get_double("dataset.quality_eps", cfg.quality_eps);
    cfg.pretrain_episodes =
        static_cast<int>(file.get_int("dataset.pretrain_episodes", cfg.pretrain_episodes));

    cfg.ensemble_members = static_cast<int>(file.get_int("ensemble.n_members", cfg.ensemble_members));
    cfg.include_plain = file.get_bool("ensemble.include_plain", cfg.include_plain);

    cfg.feature_map = file.get_string("counting.feature_map", cfg.feature_map);
    cfg.noise_rho = file.get_double("counting.noise_rho", cfg.noise_rho);
    cfg.code_bits = static_cast<int>(file.get_int("counting.code_bits", cfg.code_bits));
    cfg.count_members = static_cast<int>(file.get_int("counting.n_members", cfg.count_members));
    cfg.alpha = file.get_double("counting.alpha", cfg.alpha);
    cfg.penalty.count_mode = parse_count_mode(file.get_string("counting.mode", "avg"));
    cfg.penalty.alpha = cfg.alpha;

    const std::string pmode = file.get_string("penalty.mode", "practical");
    if (pmode == "practical")
        cfg.penalty.mode = PenaltyMode::Practical;
    else if (pmode == "theory")
        cfg.penalty.mode = PenaltyMode::Theory;
    else
        throw StageError(Stage::Config, "penalty.mode must be 'practical' or 'theory'");
    cfg.penalty.beta = file.get_double("penalty.beta", 1.0);
    cfg.penalty.bound_cfg.delta = file.get_double("penalty.delta", 0.1);
    cfg.penalty.bound_cfg.log_model_class = file.get_double("penalty.log_model_class", 0.0);

    cfg.planner = file.get_string("planner.kind", cfg.planner);
    cfg.plan_tol = file.get_double("planner.tol", cfg.plan_tol);
    cfg.rollout.epochs = static_cast<int>(file.get_int("planner.epochs", cfg.rollout.epochs));
    cfg.rollout.rollout_batch =
        static_cast<int>(file.get_int("planner.rollout_batch", cfg.rollout.rollout_batch));
    cfg.rollout.horizon = static_cast<int>(file.get_int("planner.horizon", cfg.rollout.horizon));
    cfg.rollout.updates_per_epoch =
        static_cast<int>(file.get_int("planner.updates_per_epoch", cfg.rollout.updates_per_epoch));
    cfg.rollout.batch_size = static_cast<int>(file.get_int("planner.batch_size", cfg.rollout.batch_size));
    cfg.rollout.real_ratio = file.get_double("planner.real_ratio", cfg.rollout.real_ratio);
    cfg.rollout.q_learning_rate =
        file.get_double("planner.q_learning_rate", cfg.rollout.q_learning_rate);
    cfg.rollout.exploration_eps =
        file.get_double("planner.exploration_eps", cfg.rollout.exploration_eps);
    cfg.rollout.model_buffer_capacity = static_cast<std::size_t>(
        file.get_int("planner.model_buffer_capacity",
                     static_cast<long long>(cfg.rollout.model_buffer_capacity)));

    cfg.num_seeds = static_cast<int>(file.get_int("eval.num_seeds", cfg.num_seeds));
    cfg.eval_tol = file.get_double("eval.tol", cfg.eval_tol);

    cfg.config_hash = file.hash();
    if (cfg.num_seeds < 1) throw StageError(Stage::Config, "eval.num_seeds must be positive");
    if (cfg.planner != "exact" && cfg.planner != "rollout")
        throw StageError(Stage::Config, "planner.kind must be 'exact' or 'rollout'");
    return cfg;
}

/// A dataset plus the stationary behavior policy it is attributed to.
struct DatasetBundle {
    OfflineDataset data;
    std::optional<PolicyTable> behavior;  // absent for file-sourced datasets
};

/// Builds the offline dataset for one experiment seed.
///
/// replay: the full Q-learning replay buffer (grid envs only); the behavior
/// policy is the epsilon-greedy mixture around the final greedy policy.
/// policy: a fixed-quality stationary policy, epsilon-greedy around a
/// converged one (Q-learning on grids, value iteration elsewhere).
/// file: loaded from dataset.path.
inline DatasetBundle acquire_dataset(const ExperimentConfig& cfg, const EnvHandle& env,
                                     std::uint64_t seed) {
    DatasetBundle bundle;
    try {
        if (cfg.dataset_source == "file") {
            bundle.data = load_dataset(cfg.dataset_path);
            if (bundle.data.num_states != env.mdp.num_states ||
                bundle.data.num_actions != env.mdp.num_actions)
                throw std::runtime_error("dataset dimensions do not match environment " + env.env_id);
            return bundle;
        }
        if (cfg.dataset_source == "replay") {
            if (!env.layout)
                throw std::runtime_error("replay datasets require a grid environment");
            BehaviorTrainConfig bcfg;
            bcfg.episodes = cfg.behavior_episodes;
            bcfg.epsilon = cfg.behavior_epsilon;
            bcfg.learning_rate = cfg.behavior_learning_rate;
            bcfg.max_episode_steps = cfg.max_episode_steps;
            bcfg.seed = seed;
            auto trained = train_behavior(env.mdp, *env.layout, bcfg);
            bundle.behavior = epsilon_greedy_mixture(trained.greedy_policy, cfg.behavior_epsilon);
            bundle.data = std::move(trained.replay_buffer);
            bundle.data.meta = {env.env_id, seed, "replay"};
            return bundle;
        }
        if (cfg.dataset_source == "policy") {
            PolicyTable converged{};
            if (env.layout) {
                BehaviorTrainConfig bcfg;
                bcfg.episodes = cfg.pretrain_episodes;
                bcfg.epsilon = cfg.behavior_epsilon;
                bcfg.learning_rate = cfg.behavior_learning_rate;
                bcfg.max_episode_steps = cfg.max_episode_steps;
                bcfg.seed = derive_seed(seed, 0x717);
                converged = train_behavior(env.mdp, *env.layout, bcfg).greedy_policy;
            } else {
                converged = value_iteration(env.mdp, 1e-9).second;
            }
            const auto behavior = epsilon_greedy_mixture(converged, cfg.quality_eps);
            // Grid envs use replay-style episode semantics so goal-state
            // pairs show up in the data; synthetic envs have no terminal
            // structure and use the generic generator.
            bundle.data = env.layout
                              ? collect_grid_dataset(env.mdp, *env.layout, behavior,
                                                     cfg.n_transitions, seed, cfg.episode_cap)
                              : generate_dataset(env.mdp, behavior, cfg.n_transitions, seed,
                                                 cfg.episode_cap);
            bundle.data.meta = {env.env_id, seed, "policy"};
            bundle.behavior = behavior;
            return bundle;
        }
        throw std::runtime_error("unknown dataset source '" + cfg.dataset_source + "'");
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(Stage::Dataset, e.what());
    }
}

/// Resolved log_model_class: explicit config value if set, else the default
/// knob for the state count.
inline ErrorBoundConfig resolve_bound_cfg(const ExperimentConfig& cfg, int num_states) {
    ErrorBoundConfig bound = cfg.penalty.bound_cfg;
    if (bound.log_model_class <= 0.0) bound.log_model_class = default_log_model_class(num_states);
    return bound;
}

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t dataset_size = 0;
    double learned_return = 0.0;
    double behavior_return = std::numeric_limits<double>::quiet_NaN();
    double penalty_mean = 0.0;
    double penalty_max = 0.0;
    double frac_max_penalty = 0.0;
    double count_max_abs_err = 0.0;
    long long collision_pairs = 0;
    double wall_clock_ms = 0.0;
    PolicyTable learned_policy;
    ConservativeMdp cmdp;
    std::vector<double> true_reward;
};

struct ExperimentReport {
    std::uint64_t config_hash = 0;
    std::uint64_t base_seed = 0;
    std::string env_id;
    std::vector<SeedResult> seeds;

    double mean_learned() const {
        double acc = 0.0;
        for (const auto& s : seeds) acc += s.learned_return;
        return acc / static_cast<double>(seeds.size());
    }
    double std_learned() const {
        const double m = mean_learned();
        double acc = 0.0;
        for (const auto& s : seeds) acc += (s.learned_return - m) * (s.learned_return - m);
        return seeds.size() > 1 ? std::sqrt(acc / static_cast<double>(seeds.size() - 1)) : 0.0;
    }
    double mean_behavior() const {
        double acc = 0.0;
        for (const auto& s : seeds) acc += s.behavior_return;
        return acc / static_cast<double>(seeds.size());
    }
};

/// Runs the full pipeline for every evaluation seed: dataset, ensemble,
/// counts, conservative model, planner, exact evaluation on the true MDP.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const EnvHandle env = build_env(cfg.env_id);
    ExperimentReport report;
    report.config_hash = cfg.config_hash;
    report.base_seed = cfg.seed;
    report.env_id = cfg.env_id;

    for (int i = 0; i < cfg.num_seeds; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        SeedResult result;
        result.seed = seed;

        const DatasetBundle bundle = acquire_dataset(cfg, env, derive_seed(seed, 1));
        result.dataset_size = bundle.data.size();

        EnsembleModel ensemble;
        try {
            ensemble = fit_ensemble(bundle.data, cfg.ensemble_members, derive_seed(seed, 2),
                                    cfg.include_plain);
        } catch (const std::exception& e) {
            throw StageError(Stage::Model, e.what());
        }

        CountEnsembleConfig ccfg;
        ccfg.feature_map = cfg.feature_map;
        ccfg.noise_rho = cfg.noise_rho;
        ccfg.code_bits = cfg.code_bits;
        ccfg.n_members = cfg.count_members;
        ccfg.alpha = cfg.alpha;
        ccfg.seed = derive_seed(seed, 3);
        std::optional<CountEnsemble> counts;
        try {
            counts.emplace(env.mdp.num_states, env.mdp.num_actions, ccfg);
            counts->ingest_dataset(bundle.data);
        } catch (const std::exception& e) {
            throw StageError(Stage::Counting, e.what());
        }

        PenaltySpec spec = cfg.penalty;
        spec.bound_cfg = resolve_bound_cfg(cfg, env.mdp.num_states);

        try {
            result.cmdp = build_conservative_mdp(ensemble, *counts, env.mdp.reward, spec,
                                                 env.mdp.gamma, env.mdp.r_max, env.mdp.initial_dist);
        } catch (const std::exception& e) {
            throw StageError(Stage::Conservative, e.what());
        }

        try {
            if (cfg.planner == "exact") {
                result.learned_policy = exact_plan(result.cmdp, cfg.plan_tol).first;
            } else {
                RolloutConfig rcfg = cfg.rollout;
                rcfg.seed = derive_seed(seed, 4);
                result.learned_policy = rollout_plan(ensemble, *counts, bundle.data, env.mdp.reward,
                                                     spec, rcfg, env.mdp.gamma, env.mdp.r_max)
                                            .policy;
            }
        } catch (const std::exception& e) {
            throw StageError(Stage::Planner, e.what());
        }

        try {
            result.learned_return = scalar_return(env.mdp, result.learned_policy, cfg.eval_tol);
            if (bundle.behavior)
                result.behavior_return = scalar_return(env.mdp, *bundle.behavior, cfg.eval_tol);
        } catch (const std::exception& e) {
            throw StageError(Stage::Eval, e.what());
        }

        // penalty statistics and count audit summary
        const double max_penalty = spec.mode == PenaltyMode::Practical
                                       ? spec.beta
                                       : env.mdp.gamma * env.mdp.r_max / (1.0 - env.mdp.gamma);
        double pen_sum = 0.0, pen_max = 0.0;
        std::size_t at_max = 0;
        for (double p : result.cmdp.penalty_table) {
            pen_sum += p;
            pen_max = std::max(pen_max, p);
            if (p >= max_penalty - 1e-12) ++at_max;
        }
        result.penalty_mean = pen_sum / static_cast<double>(result.cmdp.penalty_table.size());
        result.penalty_max = pen_max;
        result.frac_max_penalty =
            static_cast<double>(at_max) / static_cast<double>(result.cmdp.penalty_table.size());

        const auto exact = exact_counts(bundle.data);
        for (int s = 0; s < env.mdp.num_states; ++s)
            for (int a = 0; a < env.mdp.num_actions; ++a)
                result.count_max_abs_err = std::max(
                    result.count_max_abs_err,
                    std::abs(counts->estimate_count(s, a, spec.count_mode) -
                             static_cast<double>(exact.at(s, a))));
        for (int m = 0; m < counts->n_members(); ++m)
            result.collision_pairs += counts->collision_pairs(m);
        result.true_reward = env.mdp.reward;

        result.wall_clock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        report.seeds.push_back(std::move(result));
    }
    return report;
}

inline std::string csv_preamble(std::uint64_t config_hash, std::uint64_t seed) {
    return "# config_hash=" + to_hex(config_hash) + "\n# seed=" + std::to_string(seed) + "\n";
}

/// report.csv: one row per seed, wall clock excluded (it goes to timings.txt
/// so re-runs are byte-identical).
inline std::string render_report_csv(const ExperimentReport& report) {
    std::string out = csv_preamble(report.config_hash, report.base_seed);
    out += "# env_id=" + report.env_id + "\n";
    out +=
        "seed_index,seed,dataset_size,learned_return,behavior_return,penalty_mean,penalty_max,"
        "frac_max_penalty,count_max_abs_err,collision_pairs\n";
    for (std::size_t i = 0; i < report.seeds.size(); ++i) {
        const SeedResult& s = report.seeds[i];
        out += std::to_string(i) + "," + std::to_string(s.seed) + "," +
               std::to_string(s.dataset_size) + "," + format_double(s.learned_return) + "," +
               format_double(s.behavior_return) + "," + format_double(s.penalty_mean) + "," +
               format_double(s.penalty_max) + "," + format_double(s.frac_max_penalty) + "," +
               format_double(s.count_max_abs_err) + "," + std::to_string(s.collision_pairs) + "\n";
    }
    out += "# mean_learned=" + format_double(report.mean_learned()) + "\n";
    out += "# std_learned=" + format_double(report.std_learned()) + "\n";
    out += "# mean_behavior=" + format_double(report.mean_behavior()) + "\n";
    return out;
}

/// Writes a manifest of (file, bytes, fnv1a64) for every artifact in the
/// output directory.
inline void write_manifest(const std::filesystem::path& dir, std::uint64_t config_hash,
                           std::uint64_t seed) {
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (name == "manifest.txt") continue;
        names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw StageError(Stage::Io, "cannot write manifest in " + dir.string());
    out << "# config_hash=" << to_hex(config_hash) << "\n# seed=" << seed << "\n";
    out << "file,bytes,fnv1a64\n";
    for (const auto& name : names) {
        std::ifstream in(dir / name, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string bytes = buf.str();
        out << name << ',' << bytes.size() << ',' << to_hex(fnv1a64(bytes)) << '\n';
    }
}

/// Writes report.csv, per-seed penalty audits and policies, a returns SVG,
/// timings.txt, and the manifest.
inline void write_experiment_outputs(const ExperimentReport& report, const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) return;
    const std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StageError(Stage::Io, "cannot create output dir " + dir.string());

    const std::string preamble = csv_preamble(report.config_hash, report.base_seed);
    {
        std::ofstream out(dir / "report.csv");
        out << render_report_csv(report);
    }
    {
        std::ofstream out(dir / "timings.txt");
        out << "# wall clock per seed, excluded from the determinism contract\n";
        for (std::size_t i = 0; i < report.seeds.size(); ++i)
            out << i << ',' << format_double(report.seeds[i].wall_clock_ms) << "ms\n";
    }
    for (std::size_t i = 0; i < report.seeds.size(); ++i) {
        const SeedResult& s = report.seeds[i];
        save_policy(s.learned_policy, (dir / ("policy_seed" + std::to_string(i) + ".csv")).string(),
                    preamble);
        save_penalty_audit(s.cmdp, s.true_reward,
                           (dir / ("penalty_audit_seed" + std::to_string(i) + ".csv")).string(),
                           preamble);
    }

    // quick-look plot: learned vs behavior return per seed
    SvgPlot plot(480, 320);
    double lo = 0.0, hi = 0.0;
    for (const auto& s : report.seeds) {
        lo = std::min({lo, s.learned_return, s.behavior_return});
        hi = std::max({hi, s.learned_return, s.behavior_return});
    }
    if (!(hi > lo)) hi = lo + 1.0;
    plot.set_view(-0.5, static_cast<double>(report.seeds.size()) - 0.5, lo - 0.05 * (hi - lo),
                  hi + 0.05 * (hi - lo));
    plot.axes();
    for (std::size_t i = 0; i < report.seeds.size(); ++i) {
        plot.bar(static_cast<double>(i), report.seeds[i].learned_return, 24.0, "steelblue");
        plot.bar(static_cast<double>(i) + 0.28, report.seeds[i].behavior_return, 10.0, "darkorange");
    }
    plot.text(0.0, hi, "learned (blue) vs behavior (orange) return per seed");
    plot.save((dir / "returns.svg").string());

    write_manifest(dir, report.config_hash, report.base_seed);
}

}  // namespace countmorl
