// countmorl: count-based conservative offline RL bench.
//
// Subcommands: gen-data, count-audit, theory-check, run, sweep. Every
// subcommand reads a plain-text config file (see README for the schema) and
// writes its artifacts plus a hash manifest under --out.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "countmorl/bench.hpp"
#include "countmorl/experiment.hpp"
#include "countmorl/theory.hpp"

using namespace countmorl;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Path to the experiment config file")
        ->required();
    cmd->add_option("--out", args.out_dir, "Output directory (overrides experiment.out_dir)");
    cmd->add_option("--seed", args.seed, "Base seed (overrides experiment.seed)")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--workers", args.workers, "Worker threads for sweep cells")
        ->check(CLI::PositiveNumber);
}

/// Loads the config and applies command-line overrides so the stored config
/// hash covers the values actually used.
ConfigFile load_config(const CommonArgs& args) {
    ConfigFile file = ConfigFile::load(args.config_path);
    if (args.seed_set) file.set("experiment.seed", std::to_string(args.seed));
    if (!args.out_dir.empty()) file.set("experiment.out_dir", args.out_dir);
    return file;
}

std::filesystem::path ensure_out_dir(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw StageError(Stage::Config, "an output directory is required (--out)");
    const std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StageError(Stage::Io, "cannot create output directory " + dir.string());
    return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw StageError(Stage::Io, "cannot write " + path.string());
    out << text;
}

int cmd_gen_data(const CommonArgs& args) {
    const ConfigFile file = load_config(args);
    ExperimentConfig cfg = parse_experiment_config(file);
    const auto dir = ensure_out_dir(cfg);
    const EnvHandle env = build_env(cfg.env_id);
    auto bundle = acquire_dataset(cfg, env, derive_seed(cfg.seed, 1));
    bundle.data.meta.env_id = cfg.env_id;

    const auto path = dir / "dataset.csv";
    save_dataset(bundle.data, path.string());
    {
        // append provenance stamp recognized by the loader
        std::ofstream out(path, std::ios::app);
        out << "#config_hash=" << to_hex(cfg.config_hash) << '\n';
    }

    const auto counts = exact_counts(bundle.data);
    std::size_t observed = 0;
    for (long long c : counts.counts)
        if (c > 0) ++observed;
    std::cout << "dataset: " << bundle.data.size() << " transitions on " << cfg.env_id << "\n"
              << "coverage: " << observed << "/" << counts.counts.size()
              << " state-action pairs observed\n"
              << "count total: " << counts.total() << " (equals dataset size)\n";
    write_manifest(dir, cfg.config_hash, cfg.seed);
    return 0;
}

int cmd_count_audit(const CommonArgs& args) {
    const ConfigFile file = load_config(args);
    ExperimentConfig cfg = parse_experiment_config(file);
    const auto dir = ensure_out_dir(cfg);
    const EnvHandle env = build_env(cfg.env_id);
    const auto bundle = acquire_dataset(cfg, env, derive_seed(cfg.seed, 1));

    CountEnsembleConfig ccfg;
    ccfg.feature_map = cfg.feature_map;
    ccfg.noise_rho = cfg.noise_rho;
    ccfg.code_bits = cfg.code_bits;
    ccfg.n_members = cfg.count_members;
    ccfg.alpha = cfg.alpha;
    ccfg.seed = derive_seed(cfg.seed, 3);
    CountEnsemble counts(env.mdp.num_states, env.mdp.num_actions, ccfg);
    counts.ingest_dataset(bundle.data);

    const auto audit = count_audit(bundle.data, counts);
    write_text(dir / "count_audit.csv",
               render_count_audit_csv(audit, counts.n_members(), cfg.config_hash, cfg.seed));
    save_count_audit_svg(audit, env.mdp.num_actions, (dir / "count_audit.svg").string());
    write_manifest(dir, cfg.config_hash, cfg.seed);

    const double max_err = audit.max_abs_error(cfg.penalty.count_mode);
    std::cout << "count audit on " << cfg.env_id << " (" << cfg.feature_map
              << ", d=" << cfg.code_bits << ", N=" << cfg.count_members << ")\n"
              << "max |approximate - true| (" << count_mode_name(cfg.penalty.count_mode)
              << "): " << format_double(max_err) << "\n";
    for (std::size_t m = 0; m < audit.collisions_per_member.size(); ++m)
        std::cout << "member " << m << " colliding pairs: " << audit.collisions_per_member[m]
                  << "\n";
    return max_err == 0.0 ? 0 : 1;
}

int cmd_theory_check(const CommonArgs& args) {
    const ConfigFile file = load_config(args);
    ExperimentConfig cfg = parse_experiment_config(file);
    TheoryCheckConfig tcfg = parse_theory_config(file);
    tcfg.seed = cfg.seed;
    const auto dir = ensure_out_dir(cfg);

    TheoryReport report = run_theory_check(tcfg);
    report.config_hash = cfg.config_hash;
    write_text(dir / "theory_report.csv", render_theory_csv(report));

    // log-log quick look at the scaling bins
    if (report.scaling.bins.size() >= 2) {
        SvgPlot plot(480, 360);
        double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
        std::vector<std::pair<double, double>> pts;
        for (const auto& bin : report.scaling.bins) {
            const double x = std::log10(bin.count_center), y = std::log10(bin.median_tv);
            pts.emplace_back(x, y);
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
        plot.set_view(x_lo - 0.2, x_hi + 0.2, y_lo - 0.2, y_hi + 0.2);
        plot.axes();
        plot.dots(pts, "steelblue", 3.0);
        plot.polyline(pts, "steelblue");
        plot.text(x_lo, y_hi, "log10 median TV vs log10 count, slope=" +
                                   format_double(report.scaling.slope));
        plot.save((dir / "tv_scaling.svg").string());
    }
    write_manifest(dir, cfg.config_hash, cfg.seed);

    std::cout << "tv scaling slope: " << format_double(report.scaling.slope) << " over "
              << report.scaling.samples << " samples ("
              << (report.slope_in_range() ? "in" : "OUT OF") << " [-0.65,-0.35])\n"
              << "coverage at delta=" << format_double(report.coverage.delta)
              << ": default L=" << format_double(report.coverage.default_log_model_class)
              << " -> " << format_double(report.coverage.default_coverage)
              << ", calibrated L=" << format_double(report.coverage.calibrated_log_model_class)
              << " -> " << format_double(report.coverage.calibrated_coverage) << "\n";
    for (const auto& r : report.inequalities)
        std::cout << r.env_id << ": events " << r.events << "/" << r.reps << ", violations "
                  << r.valuegap_violations << "/" << r.pessimism_violations << "/"
                  << r.suboptimality_violations << " (value-gap/pessimism/sub-optimality)\n";
    std::cout << (report.all_ok() ? "theory checks passed" : "THEORY CHECKS FAILED") << "\n";
    return report.all_ok() ? 0 : 1;
}

int cmd_run(const CommonArgs& args) {
    const ConfigFile file = load_config(args);
    ExperimentConfig cfg = parse_experiment_config(file);
    if (!cfg.out_dir.empty()) ensure_out_dir(cfg);
    const ExperimentReport report = run_experiment(cfg);
    write_experiment_outputs(report, cfg);
    std::cout << render_report_csv(report);
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const ConfigFile file = load_config(args);
    ExperimentConfig cfg = parse_experiment_config(file);
    const SweepGrid grid = parse_sweep_grid(file);
    const auto dir = ensure_out_dir(cfg);
    const auto rows = run_sweep(cfg, grid, args.workers);
    write_text(dir / "sweep.csv", render_sweep_csv(rows, cfg.config_hash, cfg.seed));
    write_text(dir / "sweep_modes.csv", render_mode_table_csv(rows, cfg.config_hash, cfg.seed));
    write_manifest(dir, cfg.config_hash, cfg.seed);
    std::cout << render_mode_table_csv(rows, cfg.config_hash, cfg.seed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"count-based conservative model-based offline RL bench"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset and report coverage");
    auto* audit = app.add_subcommand("count-audit", "Compare approximate counts to exact counts");
    auto* theory = app.add_subcommand("theory-check", "Scaling, coverage, and inequality checks");
    auto* run = app.add_subcommand("run", "Full pipeline: data, model, counts, plan, evaluate");
    auto* sweep = app.add_subcommand("sweep", "Grid sweep over {mode, beta, H, d, alpha}");
    for (auto* cmd : {gen, audit, theory, run, sweep}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (audit->parsed()) return cmd_count_audit(args);
        if (theory->parsed()) return cmd_theory_check(args);
        if (run->parsed()) return cmd_run(args);
        if (sweep->parsed()) return cmd_sweep(args);
    } catch (const StageError& e) {
        std::cerr << "error [" << stage_name(e.stage) << "]: " << e.what() << "\n";
        return static_cast<int>(e.stage);
    } catch (const std::exception& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return static_cast<int>(Stage::Config);
    }
    return 0;
}
