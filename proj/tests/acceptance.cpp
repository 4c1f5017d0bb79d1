// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Each criterion pins its seeds and thresholds in code; a
// rerun reproduces every number bit-exactly.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "countmorl/bench.hpp"
#include "countmorl/experiment.hpp"
#include "countmorl/theory.hpp"

using namespace countmorl;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    if (!ok) ++failures;
}

ConfigFile grid_replay_config(const std::string& env, int episodes, double beta,
                              const std::string& mode, std::uint64_t seed, int num_seeds) {
    return ConfigFile::parse(
        "[experiment]\nenv_id = " + env + "\nseed = " + std::to_string(seed) +
        "\n[dataset]\nsource = replay\nepisodes = " + std::to_string(episodes) +
        "\nepsilon = 0.3\n"
        "[ensemble]\nn_members = 5\n"
        "[counting]\nfeature_map = onehot\ncode_bits = 20\nn_members = 5\nalpha = 0.5\nmode = " +
        mode +
        "\n[penalty]\nmode = practical\nbeta = " + format_double(beta) +
        "\n[planner]\nkind = exact\n[eval]\nnum_seeds = " + std::to_string(num_seeds) + "\n");
}

// --------------------------------------------------------------------------
// 1. Grid-World count exactness: one-hot features, d = 20 bits, all four
//    layouts, desk-scale replay buffers, max |approximate - true| = 0.
// --------------------------------------------------------------------------
void criterion_1() {
    bool ok = true;
    std::string detail;
    const std::pair<const char*, int> layouts[] = {
        {"grid/empty", 800}, {"grid/bridge", 1400}, {"grid/cliff", 1400}, {"grid/zigzag", 1400}};
    for (const auto& [env_id, episodes] : layouts) {
        const auto file = grid_replay_config(env_id, episodes, 1.0, "avg", 9001, 1);
        const auto cfg = parse_experiment_config(file);
        const auto env = build_env(env_id);
        const auto bundle = acquire_dataset(cfg, env, derive_seed(cfg.seed, 1));
        if (bundle.data.size() < 20000 || bundle.data.size() > 100000) {
            ok = false;
            detail += std::string(env_id) + " size out of range; ";
            continue;
        }
        CountEnsembleConfig ccfg;
        ccfg.feature_map = "onehot";
        ccfg.code_bits = 20;
        ccfg.n_members = 5;
        ccfg.alpha = 0.5;
        ccfg.seed = 1;  // verified injective over all 256 pair codes
        CountEnsemble counts(64, 4, ccfg);
        counts.ingest_dataset(bundle.data);
        const auto audit = count_audit(bundle.data, counts);
        const double max_err =
            std::max({audit.max_abs_error_lc, audit.max_abs_error_avg, audit.max_abs_error_uc});
        if (max_err != 0.0) ok = false;
        detail += std::string(env_id) + " |D|=" + std::to_string(bundle.data.size()) +
                  " max_err=" + format_double(max_err) + "; ";
    }
    report(1, ok, "grid-world count exactness, one-hot d=20, all four layouts", detail);
}

// --------------------------------------------------------------------------
// 2. TV scaling: log-log slope of median TV vs count in [-0.65, -0.35].
// --------------------------------------------------------------------------
void criterion_2() {
    const auto truth = random_mdp(5, 2, 2024, 0.9);
    const auto scaling = tv_scaling_experiment(truth, 60, 200, 100000, 42);
    const bool ok = scaling.draws >= 50 && scaling.slope > -0.65 && scaling.slope < -0.35;
    report(2, ok, "estimation-error scaling slope in [-0.65, -0.35]",
           "slope=" + format_double(scaling.slope) + " over " + std::to_string(scaling.samples) +
               " samples from " + std::to_string(scaling.draws) + " draws");
}

// --------------------------------------------------------------------------
// 3. Bound coverage at delta = 0.1 with the calibrated log model-class knob:
//    fraction of observed pairs with TV <= bound is >= 0.88 on 200 fresh reps.
// --------------------------------------------------------------------------
void criterion_3() {
    const auto truth = random_mdp(5, 2, 2024, 0.9);
    const auto coverage = coverage_experiment(truth, 0.1, 100, 200, 2000, 77);
    const bool ok = coverage.calibrated_coverage >= 0.88;
    report(3, ok, "bound coverage >= 0.88 at calibrated log|M|",
           "calibrated L=" + format_double(coverage.calibrated_log_model_class) +
               " coverage=" + format_double(coverage.calibrated_coverage) + " on " +
               std::to_string(coverage.eval_samples) + " samples (default L=" +
               format_double(coverage.default_log_model_class) +
               " coverage=" + format_double(coverage.default_coverage) + ")");
}

// --------------------------------------------------------------------------
// 4+5. Conditional pessimism, value-gap, and sub-optimality inequalities on
//      enumerable MDPs with exact counts; zero violations given the TV event.
// --------------------------------------------------------------------------
void criteria_4_5() {
    const struct {
        const char* env;
        std::uint64_t seed;
    } envs[] = {{"synthetic/random-3x2-seed7", 101}, {"synthetic/random-4x3-seed11", 202}};
    bool ok45[2] = {true, true};
    std::string detail4, detail5;
    for (const auto& [env_id, seed] : envs) {
        const auto env = build_env(env_id);
        const auto r = inequality_experiment(env_id, env.mdp, 100, 0.1, 1e-6, 100, 2000, seed);
        if (r.events < 50 || r.pessimism_violations != 0 || r.valuegap_violations != 0)
            ok45[0] = false;
        if (r.events < 50 || r.suboptimality_violations != 0) ok45[1] = false;
        const std::string tag = std::string(env_id) + " events=" + std::to_string(r.events) + "/" +
                                std::to_string(r.reps) + " policies=" + std::to_string(r.policies);
        detail4 += tag + " pess_viol=" + std::to_string(r.pessimism_violations) +
                   " gap_viol=" + std::to_string(r.valuegap_violations) + "; ";
        detail5 += tag + " subopt_viol=" + std::to_string(r.suboptimality_violations) + "; ";
    }
    report(4, ok45[0], "conditional pessimism and value-gap inequalities, zero violations",
           detail4);
    report(5, ok45[1], "sub-optimality lower bound for the planned policy, zero violations",
           detail5);
}

// --------------------------------------------------------------------------
// 6. Policy improvement on the lava grids with mid-quality replay buffers:
//    learned beats behavior in >= 4/5 seeds and the beta=0 baseline in >= 3/5.
// --------------------------------------------------------------------------
void criterion_6() {
    bool ok = true;
    std::string detail;
    for (const char* env : {"grid/bridge", "grid/cliff", "grid/zigzag"}) {
        const auto cfg = parse_experiment_config(grid_replay_config(env, 1400, 1.0, "avg", 1, 5));
        const auto penalized = run_experiment(cfg);
        auto cfg0 = cfg;
        cfg0.penalty.beta = 0.0;
        const auto baseline = run_experiment(cfg0);
        int beat_behavior = 0, beat_baseline = 0;
        bool sizes_ok = true;
        for (std::size_t i = 0; i < penalized.seeds.size(); ++i) {
            if (penalized.seeds[i].dataset_size < 30000) sizes_ok = false;
            if (penalized.seeds[i].learned_return >= penalized.seeds[i].behavior_return)
                ++beat_behavior;
            if (penalized.seeds[i].learned_return >= baseline.seeds[i].learned_return)
                ++beat_baseline;
        }
        if (!(sizes_ok && beat_behavior >= 4 && beat_baseline >= 3)) ok = false;
        detail += std::string(env) + " behavior " + std::to_string(beat_behavior) +
                  "/5, baseline " + std::to_string(beat_baseline) + "/5; ";
    }
    report(6, ok, "policy improvement on lava grids (beta=1, exact counts)", detail);
}

// --------------------------------------------------------------------------
// 7. LC/UC dataset-quality trend with NoisyOneHot disagreement. A stochastic
//    trend check: mean over 5 seeds, required on >= 2 of 3 layouts per side;
//    ties count for the ordering.
// --------------------------------------------------------------------------
void criterion_7() {
    auto run_mode = [](const char* env, double quality_eps, const char* mode) {
        const auto file = ConfigFile::parse(
            "[experiment]\nenv_id = " + std::string(env) +
            "\nseed = 1\n[dataset]\nsource = policy\nn_transitions = 30000\nquality_eps = " +
            format_double(quality_eps) +
            "\n[ensemble]\nn_members = 5\n"
            "[counting]\nfeature_map = noisy-onehot\nnoise_rho = 0.05\ncode_bits = 16\n"
            "n_members = 5\nalpha = 0.5\nmode = " +
            mode +
            "\n[penalty]\nmode = practical\nbeta = 0.5\n[planner]\nkind = exact\n"
            "[eval]\nnum_seeds = 5\n");
        return run_experiment(parse_experiment_config(file)).mean_learned();
    };
    int random_ok = 0, expert_ok = 0;
    std::string detail;
    for (const char* env : {"grid/bridge", "grid/cliff", "grid/zigzag"}) {
        const double rand_lc = run_mode(env, 0.9, "lc");
        const double rand_uc = run_mode(env, 0.9, "uc");
        const double exp_lc = run_mode(env, 0.05, "lc");
        const double exp_uc = run_mode(env, 0.05, "uc");
        if (rand_lc >= rand_uc) ++random_ok;
        if (exp_uc >= exp_lc) ++expert_ok;
        detail += std::string(env) + " random(LC=" + format_double(rand_lc) +
                  ",UC=" + format_double(rand_uc) + ") expert(LC=" + format_double(exp_lc) +
                  ",UC=" + format_double(exp_uc) + "); ";
    }
    const bool ok = random_ok >= 2 && expert_ok >= 2;
    report(7, ok,
           "LC/UC dataset-quality trend (stochastic check, ties satisfy the ordering)",
           "random " + std::to_string(random_ok) + "/3, expert " + std::to_string(expert_ok) +
               "/3; " + detail);
}

// --------------------------------------------------------------------------
// 8. Count-estimation arithmetic at 1e-9.
// --------------------------------------------------------------------------
void criterion_8() {
    bool ok = true;
    const std::vector<double> same{7.0, 7.0, 7.0};
    for (CountMode mode : {CountMode::LC, CountMode::AVG, CountMode::UC})
        ok = ok && std::abs(count_from_members(same, 0.5, mode) - 7.0) <= 1e-9;
    const std::vector<double> pair{4.0, 6.0};
    const double lc = count_from_members(pair, 0.5, CountMode::LC);
    const double uc = count_from_members(pair, 0.5, CountMode::UC);
    ok = ok && std::abs(lc - 4.29289321881345) <= 1e-9 && std::abs(uc - 5.70710678118655) <= 1e-9;
    // pointwise ordering on a noisy ensemble
    Rng rng(5);
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        std::vector<double> counts(4);
        for (auto& c : counts) c = std::floor(rng.next_double() * 50.0);
        const double a = count_from_members(counts, 0.5, CountMode::LC);
        const double b = count_from_members(counts, 0.5, CountMode::AVG);
        const double c = count_from_members(counts, 0.5, CountMode::UC);
        ok = a <= b + 1e-12 && b <= c + 1e-12;
    }
    report(8, ok, "count-estimation arithmetic to 1e-9",
           "sigma=0 collapse, {4,6} alpha=0.5 LC/UC, LC<=AVG<=UC");
}

// --------------------------------------------------------------------------
// 9. Determinism: the full pipeline repeated with an identical config and
//    seed reproduces every reported number and artifact byte-exactly.
// --------------------------------------------------------------------------
void criterion_9() {
    auto file = grid_replay_config("grid/bridge", 400, 1.0, "lc", 303, 2);
    const auto dir1 = std::filesystem::temp_directory_path() / "countmorl_accept_det1";
    const auto dir2 = std::filesystem::temp_directory_path() / "countmorl_accept_det2";
    for (const auto& dir : {dir1, dir2}) {
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
    }
    auto cfg = parse_experiment_config(file);
    cfg.out_dir = dir1.string();
    const auto r1 = run_experiment(cfg);
    write_experiment_outputs(r1, cfg);
    cfg.out_dir = dir2.string();
    const auto r2 = run_experiment(cfg);
    write_experiment_outputs(r2, cfg);

    bool ok = render_report_csv(r1) == render_report_csv(r2);
    std::string detail = ok ? "report identical" : "report differs";
    for (const char* name :
         {"report.csv", "policy_seed0.csv", "policy_seed1.csv", "penalty_audit_seed0.csv",
          "penalty_audit_seed1.csv", "returns.svg"}) {
        std::ifstream a(dir1 / name, std::ios::binary), b(dir2 / name, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        if (sa.empty() || sa != sb) {
            ok = false;
            detail += std::string("; ") + name + " differs";
        }
    }
    if (ok) detail += "; all artifacts byte-identical across reruns";
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
    report(9, ok, "bit-exact reproducibility of the full pipeline", detail);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criteria_4_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%d criterion failure(s)\n", failures);
    return failures;
}
