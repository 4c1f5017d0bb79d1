#pragma once

#include <array>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/mdp_core.hpp"
#include "countmorl/types.hpp"

namespace countmorl {

/// One logged environment step (s, a, r, s').
struct Transition {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;

    bool operator==(const Transition&) const = default;
};

struct DatasetMeta {
    std::string env_id;
    std::uint64_t seed = 0;
    std::string generator;

    bool operator==(const DatasetMeta&) const = default;
};

/// Immutable offline dataset D = {(s_i, a_i, r_i, s'_i)}.
struct OfflineDataset {
    int num_states = 0;
    int num_actions = 0;
    std::vector<Transition> transitions;
    DatasetMeta meta;

    std::size_t size() const { return transitions.size(); }

    bool operator==(const OfflineDataset&) const = default;

    void validate() const {
        if (num_states <= 0 || num_actions <= 0)
            throw std::invalid_argument("OfflineDataset: dimensions must be positive");
        for (std::size_t i = 0; i < transitions.size(); ++i) {
            const Transition& t = transitions[i];
            if (t.state < 0 || t.state >= num_states || t.next_state < 0 || t.next_state >= num_states)
                throw std::invalid_argument("OfflineDataset: state index out of bounds at transition " +
                                            std::to_string(i));
            if (t.action < 0 || t.action >= num_actions)
                throw std::invalid_argument("OfflineDataset: action index out of bounds at transition " +
                                            std::to_string(i));
        }
    }
};

/// Exact visit counts n(s,a) = |D_{s,a}|.
struct CountTable {
    int num_states = 0;
    int num_actions = 0;
    std::vector<long long> counts;  // S * A

    long long at(int s, int a) const {
        return counts[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
                      static_cast<std::size_t>(a)];
    }
    long long total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }
};

inline CountTable exact_counts(const OfflineDataset& data) {
    CountTable table{data.num_states, data.num_actions,
                     std::vector<long long>(static_cast<std::size_t>(data.num_states) *
                                                static_cast<std::size_t>(data.num_actions),
                                            0)};
    for (const Transition& t : data.transitions)
        ++table.counts[static_cast<std::size_t>(t.state) * data.num_actions + t.action];
    return table;
}

/// Rolls out the behavior policy from d0, resetting at absorbing states or at
/// episode_cap steps, until n_transitions steps are logged.
inline OfflineDataset generate_dataset(const TabularMdp& mdp, const PolicyTable& behavior,
                                       std::size_t n_transitions, std::uint64_t seed,
                                       int episode_cap) {
    detail::check_dims(mdp, behavior);
    if (episode_cap <= 0) throw std::invalid_argument("generate_dataset: episode_cap must be positive");
    OfflineDataset data;
    data.num_states = mdp.num_states;
    data.num_actions = mdp.num_actions;
    data.meta = {"synthetic/unnamed", seed, "generate_dataset"};
    data.transitions.reserve(n_transitions);

    Rng rng(derive_seed(seed, 0xDA7A));
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    std::vector<bool> absorbing(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) absorbing[static_cast<std::size_t>(s)] = mdp.is_absorbing(s);

    int state = -1;
    int steps_in_episode = 0;
    while (data.transitions.size() < n_transitions) {
        if (state < 0 || absorbing[static_cast<std::size_t>(state)] || steps_in_episode >= episode_cap) {
            state = static_cast<int>(rng.next_discrete(mdp.initial_dist));
            steps_in_episode = 0;
            continue;
        }
        const int action = static_cast<int>(rng.next_discrete(
            std::span<const double>(behavior.probs.data() + static_cast<std::size_t>(state) * A,
                                    static_cast<std::size_t>(A))));
        const int next = static_cast<int>(
            rng.next_discrete(std::span<const double>(mdp.row(state, action), static_cast<std::size_t>(S))));
        data.transitions.push_back({state, action, mdp.reward_at(state, action), next});
        state = next;
        ++steps_in_episode;
    }
    return data;
}

/// Writes the dataset as CSV: '#key=value' header lines, then one `s,a,r,s'`
/// line per transition with round-trip reward precision.
inline void save_dataset(const OfflineDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
    out << "#num_states=" << data.num_states << '\n';
    out << "#num_actions=" << data.num_actions << '\n';
    out << "#env_id=" << data.meta.env_id << '\n';
    out << "#seed=" << data.meta.seed << '\n';
    out << "#generator=" << data.meta.generator << '\n';
    for (const Transition& t : data.transitions)
        out << t.state << ',' << t.action << ',' << format_double(t.reward) << ',' << t.next_state
            << '\n';
    if (!out) throw std::runtime_error("save_dataset: write to '" + path + "' failed");
}

inline OfflineDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
    OfflineDataset data;
    std::string line;
    std::size_t line_no = 0;
    bool have_states = false, have_actions = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error(where + ": malformed header line");
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "num_states") {
                data.num_states = static_cast<int>(parse_int(value, where));
                have_states = true;
            } else if (key == "num_actions") {
                data.num_actions = static_cast<int>(parse_int(value, where));
                have_actions = true;
            } else if (key == "env_id") {
                data.meta.env_id = value;
            } else if (key == "seed") {
                data.meta.seed = static_cast<std::uint64_t>(parse_int(value, where));
            } else if (key == "generator") {
                data.meta.generator = value;
            } else if (key == "config_hash") {
                // provenance stamp, not part of the dataset
            } else {
                throw std::runtime_error(where + ": unknown header key '" + key + "'");
            }
            continue;
        }
        std::array<std::string, 4> fields;
        std::size_t field = 0, start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (field >= 4) throw std::runtime_error(where + ": expected 4 fields");
                fields[field++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (field != 4) throw std::runtime_error(where + ": expected 4 fields");
        Transition t;
        t.state = static_cast<int>(parse_int(fields[0], where));
        t.action = static_cast<int>(parse_int(fields[1], where));
        t.reward = parse_double(fields[2], where);
        t.next_state = static_cast<int>(parse_int(fields[3], where));
        data.transitions.push_back(t);
    }
    if (!have_states || !have_actions)
        throw std::runtime_error(path + ": missing num_states/num_actions header");
    data.validate();
    return data;
}

/// Uniformly random disjoint split into (|D|-k, k) transitions; both halves
/// preserve the original relative order. Deterministic per seed.
inline std::pair<OfflineDataset, OfflineDataset> split_heldout(const OfflineDataset& data,
                                                               std::size_t k, std::uint64_t seed) {
    if (k > data.size()) throw std::invalid_argument("split_heldout: k exceeds dataset size");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5E1D));
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.next_index(i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<bool> heldout_mask(data.size(), false);
    for (std::size_t i = 0; i < k; ++i) heldout_mask[order[i]] = true;

    OfflineDataset train{data.num_states, data.num_actions, {}, data.meta};
    OfflineDataset heldout{data.num_states, data.num_actions, {}, data.meta};
    train.meta.generator += "/train";
    heldout.meta.generator += "/heldout";
    for (std::size_t i = 0; i < data.size(); ++i)
        (heldout_mask[i] ? heldout : train).transitions.push_back(data.transitions[i]);
    return {std::move(train), std::move(heldout)};
}

}  // namespace countmorl
