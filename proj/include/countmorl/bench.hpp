#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "countmorl/experiment.hpp"
#include "countmorl/svg.hpp"
#include "countmorl/theory.hpp"

namespace countmorl {

// ---------------------------------------------------------------------------
// count audit
// ---------------------------------------------------------------------------

struct CountAuditRow {
    int s = 0;
    int a = 0;
    long long true_count = 0;
    std::vector<long long> member_counts;
    double lc = 0.0;
    double avg = 0.0;
    double uc = 0.0;
};

struct CountAuditResult {
    std::vector<CountAuditRow> rows;
    std::vector<long long> collisions_per_member;
    double max_abs_error_lc = 0.0;
    double max_abs_error_avg = 0.0;
    double max_abs_error_uc = 0.0;

    double max_abs_error(CountMode mode) const {
        switch (mode) {
            case CountMode::LC: return max_abs_error_lc;
            case CountMode::AVG: return max_abs_error_avg;
            case CountMode::UC: return max_abs_error_uc;
        }
        return 0.0;
    }
};

inline CountAuditResult count_audit(const OfflineDataset& data, const CountEnsemble& counts) {
    CountAuditResult result;
    const auto exact = exact_counts(data);
    for (int s = 0; s < data.num_states; ++s)
        for (int a = 0; a < data.num_actions; ++a) {
            CountAuditRow row;
            row.s = s;
            row.a = a;
            row.true_count = exact.at(s, a);
            for (int m = 0; m < counts.n_members(); ++m)
                row.member_counts.push_back(counts.member_count(m, s, a));
            row.lc = counts.estimate_count(s, a, CountMode::LC);
            row.avg = counts.estimate_count(s, a, CountMode::AVG);
            row.uc = counts.estimate_count(s, a, CountMode::UC);
            const auto truth = static_cast<double>(row.true_count);
            result.max_abs_error_lc = std::max(result.max_abs_error_lc, std::abs(row.lc - truth));
            result.max_abs_error_avg = std::max(result.max_abs_error_avg, std::abs(row.avg - truth));
            result.max_abs_error_uc = std::max(result.max_abs_error_uc, std::abs(row.uc - truth));
            result.rows.push_back(std::move(row));
        }
    for (int m = 0; m < counts.n_members(); ++m)
        result.collisions_per_member.push_back(counts.collision_pairs(m));
    return result;
}

inline std::string render_count_audit_csv(const CountAuditResult& audit, int n_members,
                                          std::uint64_t config_hash, std::uint64_t seed) {
    std::string out = csv_preamble(config_hash, seed);
    out += "s,a,true_count";
    for (int m = 0; m < n_members; ++m) out += ",member_" + std::to_string(m);
    out += ",lc,avg,uc\n";
    for (const auto& row : audit.rows) {
        out += std::to_string(row.s) + "," + std::to_string(row.a) + "," +
               std::to_string(row.true_count);
        for (long long c : row.member_counts) out += "," + std::to_string(c);
        out += "," + format_double(row.lc) + "," + format_double(row.avg) + "," +
               format_double(row.uc) + "\n";
    }
    out += "# max_abs_error_lc=" + format_double(audit.max_abs_error_lc) + "\n";
    out += "# max_abs_error_avg=" + format_double(audit.max_abs_error_avg) + "\n";
    out += "# max_abs_error_uc=" + format_double(audit.max_abs_error_uc) + "\n";
    for (std::size_t m = 0; m < audit.collisions_per_member.size(); ++m)
        out += "# collisions_member_" + std::to_string(m) + "=" +
               std::to_string(audit.collisions_per_member[m]) + "\n";
    return out;
}

/// True-vs-approximate count histogram over pair indices.
inline void save_count_audit_svg(const CountAuditResult& audit, int num_actions,
                                 const std::string& path) {
    double max_count = 1.0;
    for (const auto& row : audit.rows)
        max_count = std::max({max_count, static_cast<double>(row.true_count), row.avg});
    SvgPlot plot(980, 360);
    plot.set_view(0.0, static_cast<double>(audit.rows.size()), 0.0, max_count * 1.08);
    plot.axes();
    const double w = std::max(1.0, 900.0 / static_cast<double>(audit.rows.size()));
    for (const auto& row : audit.rows) {
        const double x = static_cast<double>(row.s * num_actions + row.a) + 0.5;
        plot.bar(x, static_cast<double>(row.true_count), w, "steelblue");
        plot.bar(x, row.avg, w * 0.5, "seagreen");
    }
    plot.text(1.0, max_count, "true (blue) vs approximate avg (green) count per pair");
    plot.save(path);
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepCell {
    CountMode mode = CountMode::AVG;
    double beta = 1.0;
    int horizon = 5;
    int code_bits = 32;
    double alpha = 0.5;
};

struct SweepRow {
    SweepCell cell;
    std::uint64_t seed = 0;
    int seed_index = 0;
    double learned_return = 0.0;
    double behavior_return = 0.0;
};

struct SweepGrid {
    std::vector<CountMode> modes{CountMode::LC, CountMode::AVG, CountMode::UC};
    std::vector<double> betas{1.0};
    std::vector<int> horizons{5};
    std::vector<int> code_bits{32};
    std::vector<double> alphas{0.5};

    std::vector<SweepCell> cells() const {
        std::vector<SweepCell> out;
        for (CountMode m : modes)
            for (double b : betas)
                for (int h : horizons)
                    for (int d : code_bits)
                        for (double a : alphas) out.push_back({m, b, h, d, a});
        return out;
    }
};

inline SweepGrid parse_sweep_grid(const ConfigFile& file) {
    SweepGrid grid;
    if (auto modes = file.get("sweep.modes")) {
        grid.modes.clear();
        for (const auto& m : file.get_list("sweep.modes", {}))
            grid.modes.push_back(parse_count_mode(m));
    }
    auto doubles = [&file](const std::string& key, std::vector<double> fallback) {
        auto items = file.get_list(key, {});
        if (items.empty()) return fallback;
        std::vector<double> out;
        for (const auto& s : items) out.push_back(parse_double(s, key));
        return out;
    };
    auto ints = [&file](const std::string& key, std::vector<int> fallback) {
        auto items = file.get_list(key, {});
        if (items.empty()) return fallback;
        std::vector<int> out;
        for (const auto& s : items) out.push_back(static_cast<int>(parse_int(s, key)));
        return out;
    };
    grid.betas = doubles("sweep.betas", grid.betas);
    grid.horizons = ints("sweep.horizons", grid.horizons);
    grid.code_bits = ints("sweep.code_bits", grid.code_bits);
    grid.alphas = doubles("sweep.alphas", grid.alphas);
    if (grid.cells().empty()) throw StageError(Stage::Config, "sweep grid is empty");
    return grid;
}

inline ExperimentConfig apply_cell(ExperimentConfig cfg, const SweepCell& cell) {
    cfg.penalty.count_mode = cell.mode;
    cfg.penalty.beta = cell.beta;
    cfg.rollout.horizon = cell.horizon;
    cfg.code_bits = cell.code_bits;
    cfg.alpha = cell.alpha;
    cfg.penalty.alpha = cell.alpha;
    cfg.out_dir.clear();  // cells write no per-run artifacts
    return cfg;
}

/// Runs every cell of the grid in a bounded worker pool. Each cell is fully
/// seeded, so results are byte-identical regardless of scheduling; rows come
/// back in grid order.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                                       int workers) {
    const auto cells = grid.cells();
    std::vector<std::vector<SweepRow>> per_cell(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                const auto cfg = apply_cell(base, cells[i]);
                const auto report = run_experiment(cfg);
                std::vector<SweepRow> rows;
                for (std::size_t k = 0; k < report.seeds.size(); ++k)
                    rows.push_back({cells[i], report.seeds[k].seed, static_cast<int>(k),
                                    report.seeds[k].learned_return,
                                    report.seeds[k].behavior_return});
                per_cell[i] = std::move(rows);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<SweepRow> rows;
    for (auto& cell_rows : per_cell)
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
    return rows;
}

inline std::string render_sweep_csv(const std::vector<SweepRow>& rows, std::uint64_t config_hash,
                                    std::uint64_t seed) {
    std::string out = csv_preamble(config_hash, seed);
    out += "mode,beta,horizon,code_bits,alpha,seed_index,seed,learned_return,behavior_return\n";
    for (const auto& r : rows)
        out += std::string(count_mode_name(r.cell.mode)) + "," + format_double(r.cell.beta) + "," +
               std::to_string(r.cell.horizon) + "," + std::to_string(r.cell.code_bits) + "," +
               format_double(r.cell.alpha) + "," + std::to_string(r.seed_index) + "," +
               std::to_string(r.seed) + "," + format_double(r.learned_return) + "," +
               format_double(r.behavior_return) + "\n";
    return out;
}

/// Per-mode mean and standard deviation of returns, the LC/AVG/UC comparison
/// table.
inline std::string render_mode_table_csv(const std::vector<SweepRow>& rows,
                                         std::uint64_t config_hash, std::uint64_t seed) {
    std::string out = csv_preamble(config_hash, seed);
    out += "mode,cells,mean_return,std_return\n";
    for (CountMode mode : {CountMode::LC, CountMode::AVG, CountMode::UC}) {
        std::vector<double> returns;
        for (const auto& r : rows)
            if (r.cell.mode == mode) returns.push_back(r.learned_return);
        if (returns.empty()) continue;
        double mean = 0.0;
        for (double v : returns) mean += v;
        mean /= static_cast<double>(returns.size());
        double ss = 0.0;
        for (double v : returns) ss += (v - mean) * (v - mean);
        const double sd =
            returns.size() > 1 ? std::sqrt(ss / static_cast<double>(returns.size() - 1)) : 0.0;
        out += std::string(count_mode_name(mode)) + "," + std::to_string(returns.size()) + "," +
               format_double(mean) + "," + format_double(sd) + "\n";
    }
    return out;
}

}  // namespace countmorl
