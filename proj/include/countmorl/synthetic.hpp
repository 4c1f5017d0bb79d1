#pragma once

#include <string>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/types.hpp"

namespace countmorl {

/// Dense random MDP: Dirichlet(1) transition rows and initial distribution,
/// rewards uniform in [-1, 1]. Deterministic per seed.
inline TabularMdp random_mdp(int num_states, int num_actions, std::uint64_t seed, double gamma = 0.9) {
    Rng rng(derive_seed(seed, 0x5EED));
    const auto S = static_cast<std::size_t>(num_states);
    const auto A = static_cast<std::size_t>(num_actions);
    TabularMdp mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    mdp.transition.assign(S * A * S, 0.0);
    mdp.reward.assign(S * A, 0.0);
    mdp.initial_dist.assign(S, 0.0);

    auto fill_simplex = [&rng](double* row, int n) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            // Exponential(1) variates normalized to Dirichlet(1).
            double u = rng.next_double();
            while (u <= 0.0) u = rng.next_double();
            row[i] = -std::log(u);
            total += row[i];
        }
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            row[i] /= total;
            acc += row[i];
        }
        row[n - 1] += 1.0 - acc;  // exact unit mass
    };

    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) fill_simplex(mdp.row(s, a), num_states);
    fill_simplex(mdp.initial_dist.data(), num_states);
    for (auto& r : mdp.reward) r = 2.0 * rng.next_double() - 1.0;
    mdp.validate();
    return mdp;
}

/// Parses env ids of the form "synthetic/random-SxA" with optional
/// "-seedK" and "-gG" suffixes, e.g. "synthetic/random-5x2-seed7-g0.9".
inline TabularMdp synthetic_from_id(const std::string& name) {
    const std::string prefix = "random-";
    if (name.rfind(prefix, 0) != 0)
        throw std::invalid_argument("unknown synthetic environment '" + name + "'");
    std::string rest = name.substr(prefix.size());
    std::uint64_t seed = 0;
    double gamma = 0.9;
    auto take_suffix = [&rest](const std::string& tag) -> std::string {
        auto pos = rest.rfind(tag);
        if (pos == std::string::npos) return {};
        std::string v = rest.substr(pos + tag.size());
        rest = rest.substr(0, pos);
        return v;
    };
    if (auto g = take_suffix("-g"); !g.empty()) gamma = parse_double(g, "synthetic gamma");
    if (auto s = take_suffix("-seed"); !s.empty())
        seed = static_cast<std::uint64_t>(parse_int(s, "synthetic seed"));
    auto x = rest.find('x');
    if (x == std::string::npos)
        throw std::invalid_argument("synthetic env '" + name + "': expected random-SxA");
    const int S = static_cast<int>(parse_int(rest.substr(0, x), "synthetic S"));
    const int A = static_cast<int>(parse_int(rest.substr(x + 1), "synthetic A"));
    return random_mdp(S, A, seed, gamma);
}

}  // namespace countmorl
