#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/dataset.hpp"
#include "countmorl/mdp_core.hpp"

namespace countmorl {

/// Tabular MLE transition model: empirical next-state frequencies per
/// observed pair. Rows with observed == false hold no distribution and must
/// not be read as one; planners complete them as self-loops.
struct MleModel {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> p_hat;    // S * A * S, zero rows where unobserved
    std::vector<bool> observed;   // S * A
    CountTable source_counts;

    std::size_t pair_index(int s, int a) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
               static_cast<std::size_t>(a);
    }
    const double* row(int s, int a) const {
        return p_hat.data() + pair_index(s, a) * static_cast<std::size_t>(num_states);
    }
    bool is_observed(int s, int a) const { return observed[pair_index(s, a)]; }
};

inline MleModel fit_mle(const OfflineDataset& data) {
    const int S = data.num_states;
    const int A = data.num_actions;
    MleModel model;
    model.num_states = S;
    model.num_actions = A;
    model.p_hat.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    model.observed.assign(static_cast<std::size_t>(S) * A, false);
    model.source_counts = exact_counts(data);

    for (const Transition& t : data.transitions)
        model.p_hat[(static_cast<std::size_t>(t.state) * A + t.action) * S + t.next_state] += 1.0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const long long n = model.source_counts.at(s, a);
            if (n == 0) continue;
            model.observed[model.pair_index(s, a)] = true;
            double* row = model.p_hat.data() + model.pair_index(s, a) * static_cast<std::size_t>(S);
            for (int sp = 0; sp < S; ++sp) row[sp] /= static_cast<double>(n);
        }
    return model;
}

/// Bootstrap ensemble of MLE models.
struct EnsembleModel {
    std::vector<MleModel> members;
    int n_members = 0;
    std::uint64_t seed = 0;

    int num_states() const { return members.empty() ? 0 : members.front().num_states; }
    int num_actions() const { return members.empty() ? 0 : members.front().num_actions; }
};

/// Fits each member on an independent bootstrap resample (with replacement,
/// same size). With include_plain, member 0 is fit on the raw dataset.
inline EnsembleModel fit_ensemble(const OfflineDataset& data, int n_members, std::uint64_t seed,
                                  bool include_plain = false) {
    if (n_members < 1) throw std::invalid_argument("fit_ensemble: need at least one member");
    EnsembleModel ensemble;
    ensemble.n_members = n_members;
    ensemble.seed = seed;
    ensemble.members.reserve(static_cast<std::size_t>(n_members));
    for (int i = 0; i < n_members; ++i) {
        if (i == 0 && include_plain) {
            ensemble.members.push_back(fit_mle(data));
            continue;
        }
        Rng rng(derive_seed(seed, 0xB007 + static_cast<std::uint64_t>(i)));
        OfflineDataset resample{data.num_states, data.num_actions, {}, data.meta};
        resample.transitions.reserve(data.size());
        for (std::size_t j = 0; j < data.size(); ++j)
            resample.transitions.push_back(data.transitions[rng.next_index(data.size())]);
        ensemble.members.push_back(fit_mle(resample));
    }
    return ensemble;
}

/// Knobs of the estimation-error bound: confidence delta and the log of the
/// model-class size, exposed as a calibration knob since the tabular class
/// is continuous.
struct ErrorBoundConfig {
    double delta = 0.1;
    double log_model_class = 2.0;

    void validate() const {
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("ErrorBoundConfig: delta in (0,1)");
        if (!(log_model_class > 0.0))
            throw std::invalid_argument("ErrorBoundConfig: log_model_class must be positive");
    }
};

inline double default_log_model_class(int num_states, double multiplier = 1.0) {
    return multiplier * (2.0 + num_states * std::log(static_cast<double>(num_states)));
}

/// min(1, sqrt(2 (log_model_class + log(1/delta)) / n_hat)); 1 for n_hat <= 0.
/// Non-increasing in n_hat and always in [0, 1].
inline double error_bound(double n_hat, const ErrorBoundConfig& cfg) {
    cfg.validate();
    if (n_hat <= 0.0) return 1.0;
    const double num = 2.0 * (cfg.log_model_class + std::log(1.0 / cfg.delta));
    return std::min(1.0, std::sqrt(num / n_hat));
}

/// Per-pair total variation between the model and the true dynamics;
/// unobserved pairs are reported as 1, matching the bound's clipping.
inline std::vector<double> tv_errors(const MleModel& model, const TabularMdp& truth) {
    if (model.num_states != truth.num_states || model.num_actions != truth.num_actions)
        throw std::invalid_argument("tv_errors: dimension mismatch");
    std::vector<double> out(static_cast<std::size_t>(model.num_states) * model.num_actions, 1.0);
    for (int s = 0; s < model.num_states; ++s)
        for (int a = 0; a < model.num_actions; ++a)
            if (model.is_observed(s, a))
                out[model.pair_index(s, a)] = total_variation(
                    std::span<const double>(model.row(s, a), static_cast<std::size_t>(model.num_states)),
                    std::span<const double>(truth.row(s, a), static_cast<std::size_t>(truth.num_states)));
    return out;
}

/// Member-wise mean of observed rows. A pair is observed if any member
/// observed it; its row is the mean over exactly those members.
inline MleModel ensemble_mean_model(const EnsembleModel& ensemble) {
    if (ensemble.members.empty()) throw std::invalid_argument("ensemble_mean_model: empty ensemble");
    const int S = ensemble.num_states();
    const int A = ensemble.num_actions();
    MleModel mean;
    mean.num_states = S;
    mean.num_actions = A;
    mean.p_hat.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    mean.observed.assign(static_cast<std::size_t>(S) * A, false);
    mean.source_counts = ensemble.members.front().source_counts;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            int observers = 0;
            double* acc = mean.p_hat.data() + mean.pair_index(s, a) * static_cast<std::size_t>(S);
            for (const MleModel& m : ensemble.members) {
                if (!m.is_observed(s, a)) continue;
                ++observers;
                const double* row = m.row(s, a);
                for (int sp = 0; sp < S; ++sp) acc[sp] += row[sp];
            }
            if (observers == 0) continue;
            mean.observed[mean.pair_index(s, a)] = true;
            double total = 0.0;
            for (int sp = 0; sp < S; ++sp) {
                acc[sp] /= observers;
                total += acc[sp];
            }
            for (int sp = 0; sp < S; ++sp) acc[sp] /= total;  // renormalize float drift
        }
    return mean;
}

/// Full transition tensor from a partial model: unobserved rows become unit
/// self-loops so the result is a valid MDP kernel.
inline std::vector<double> complete_transition(const MleModel& model) {
    const int S = model.num_states;
    const int A = model.num_actions;
    std::vector<double> out(model.p_hat);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            if (!model.is_observed(s, a))
                out[(static_cast<std::size_t>(s) * A + a) * S + s] = 1.0;
    return out;
}

/// Serializes a model as CSV: header, `s,a,s',p` rows for observed mass, then
/// an `observed` section with one `s,a,flag` row per pair.
inline void save_model(const MleModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
    out << "#num_states=" << model.num_states << '\n';
    out << "#num_actions=" << model.num_actions << '\n';
    out << "#section=p_hat\n";
    for (int s = 0; s < model.num_states; ++s)
        for (int a = 0; a < model.num_actions; ++a) {
            if (!model.is_observed(s, a)) continue;
            const double* row = model.row(s, a);
            for (int sp = 0; sp < model.num_states; ++sp)
                if (row[sp] != 0.0)
                    out << s << ',' << a << ',' << sp << ',' << format_double(row[sp]) << '\n';
        }
    out << "#section=observed\n";
    for (int s = 0; s < model.num_states; ++s)
        for (int a = 0; a < model.num_actions; ++a)
            out << s << ',' << a << ',' << (model.is_observed(s, a) ? 1 : 0) << '\n';
    if (!out) throw std::runtime_error("save_model: write to '" + path + "' failed");
}

inline MleModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
    MleModel model;
    std::string line;
    std::size_t line_no = 0;
    std::string section;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error(where + ": malformed header");
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "num_states") {
                model.num_states = static_cast<int>(parse_int(value, where));
            } else if (key == "num_actions") {
                model.num_actions = static_cast<int>(parse_int(value, where));
            } else if (key == "section") {
                if (section.empty()) {
                    const auto S = static_cast<std::size_t>(model.num_states);
                    const auto A = static_cast<std::size_t>(model.num_actions);
                    if (S == 0 || A == 0) throw std::runtime_error(where + ": sections before dimensions");
                    model.p_hat.assign(S * A * S, 0.0);
                    model.observed.assign(S * A, false);
                    model.source_counts = {model.num_states, model.num_actions,
                                           std::vector<long long>(S * A, 0)};
                }
                section = value;
            } else {
                throw std::runtime_error(where + ": unknown header key '" + key + "'");
            }
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i)
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        if (section == "p_hat") {
            if (fields.size() != 4) throw std::runtime_error(where + ": expected s,a,s',p");
            const auto s = parse_int(fields[0], where);
            const auto a = parse_int(fields[1], where);
            const auto sp = parse_int(fields[2], where);
            model.p_hat[(static_cast<std::size_t>(s) * model.num_actions + static_cast<std::size_t>(a)) *
                            model.num_states +
                        static_cast<std::size_t>(sp)] = parse_double(fields[3], where);
        } else if (section == "observed") {
            if (fields.size() != 3) throw std::runtime_error(where + ": expected s,a,flag");
            const auto s = parse_int(fields[0], where);
            const auto a = parse_int(fields[1], where);
            model.observed[static_cast<std::size_t>(s) * model.num_actions + static_cast<std::size_t>(a)] =
                parse_int(fields[2], where) != 0;
        } else {
            throw std::runtime_error(where + ": row outside a known section");
        }
    }
    return model;
}

}  // namespace countmorl
