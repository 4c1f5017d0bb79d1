#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <tuple>

#include "countmorl/dataset.hpp"
#include "countmorl/mdp_core.hpp"
#include "countmorl/synthetic.hpp"

using namespace countmorl;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

OfflineDataset tiny_dataset() {
    OfflineDataset data;
    data.num_states = 3;
    data.num_actions = 2;
    data.meta = {"synthetic/tiny", 7, "handmade"};
    data.transitions = {{0, 1, 0.5, 2}, {0, 1, 0.5, 2}, {0, 1, 0.5, 1}, {2, 0, -0.25, 0}};
    return data;
}

}  // namespace

TEST_CASE("exact counts: empty dataset gives an all-zero table") {
    OfflineDataset data;
    data.num_states = 2;
    data.num_actions = 2;
    const auto table = exact_counts(data);
    CHECK(table.total() == 0);
    for (long long c : table.counts) CHECK(c == 0);
}

TEST_CASE("exact counts: duplicates accumulate on the right cell") {
    OfflineDataset data;
    data.num_states = 2;
    data.num_actions = 3;
    data.transitions = {{0, 1, 0.0, 1}, {0, 1, 1.0, 0}, {0, 1, 2.0, 1}};
    const auto table = exact_counts(data);
    CHECK(table.at(0, 1) == 3);
    CHECK(table.total() == 3);
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 3; ++a)
            if (!(s == 0 && a == 1)) CHECK(table.at(s, a) == 0);
}

TEST_CASE("exact counts: total mass equals dataset size") {
    const auto mdp = random_mdp(5, 2, 3, 0.9);
    for (std::size_t n : {std::size_t{0}, std::size_t{17}, std::size_t{1000}}) {
        const auto data = generate_dataset(mdp, PolicyTable::uniform(5, 2), n, 99, 50);
        CHECK(exact_counts(data).total() == static_cast<long long>(n));
        CHECK(data.size() == n);
    }
}

TEST_CASE("generate_dataset: deterministic cycle repeats") {
    // Deterministic 3-cycle with a point-mass start.
    TabularMdp mdp;
    mdp.num_states = 3;
    mdp.num_actions = 1;
    mdp.gamma = 0.9;
    mdp.r_max = 1.0;
    mdp.transition.assign(9, 0.0);
    mdp.row(0, 0)[1] = 1.0;
    mdp.row(1, 0)[2] = 1.0;
    mdp.row(2, 0)[0] = 1.0;
    mdp.reward = {0.1, 0.2, 0.3};
    mdp.initial_dist = {1.0, 0.0, 0.0};
    const auto data = generate_dataset(mdp, PolicyTable::uniform(3, 1), 9, 5, 1000);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(data.transitions[i].state == static_cast<int>(i % 3));
        CHECK(data.transitions[i].next_state == static_cast<int>((i + 1) % 3));
    }
}

TEST_CASE("generate_dataset: transitions are environment-consistent") {
    const auto mdp = random_mdp(4, 3, 21, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(4, 3), 2000, 1, 40);
    for (const Transition& t : data.transitions) {
        CHECK(mdp.row(t.state, t.action)[t.next_state] > 0.0);
        CHECK(t.reward == mdp.reward_at(t.state, t.action));
    }
}

TEST_CASE("generate_dataset: empirical next-state frequencies converge to the row") {
    const auto mdp = random_mdp(3, 2, 77, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(3, 2), 30000, 3, 200);
    const auto counts = exact_counts(data);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) {
            if (counts.at(s, a) < 2000) continue;
            std::vector<double> empirical(3, 0.0);
            for (const Transition& t : data.transitions)
                if (t.state == s && t.action == a) empirical[static_cast<std::size_t>(t.next_state)] += 1.0;
            for (double& v : empirical) v /= static_cast<double>(counts.at(s, a));
            double fix = 0.0;
            for (double v : empirical) fix += v;
            empirical[2] += 1.0 - fix;
            CHECK(total_variation(empirical, std::span<const double>(mdp.row(s, a), 3)) < 0.05);
        }
}

TEST_CASE("generate_dataset is deterministic per seed") {
    const auto mdp = random_mdp(4, 2, 10, 0.9);
    const auto a = generate_dataset(mdp, PolicyTable::uniform(4, 2), 500, 123, 30);
    const auto b = generate_dataset(mdp, PolicyTable::uniform(4, 2), 500, 123, 30);
    const auto c = generate_dataset(mdp, PolicyTable::uniform(4, 2), 500, 124, 30);
    CHECK(a == b);
    CHECK(a.transitions != c.transitions);
}

TEST_CASE("save/load round-trip is the identity, including metadata") {
    const auto path = temp_path("countmorl_roundtrip.csv");
    auto data = tiny_dataset();
    data.transitions.push_back({1, 0, 0.1234567890123456789, 2});  // full precision survives
    save_dataset(data, path);
    const auto loaded = load_dataset(path);
    CHECK(loaded == data);
    std::remove(path.c_str());
}

TEST_CASE("load_dataset: header-only file loads as an empty dataset") {
    const auto path = temp_path("countmorl_header_only.csv");
    {
        std::ofstream out(path);
        out << "#num_states=4\n#num_actions=2\n#env_id=grid/empty\n#seed=9\n#generator=test\n";
    }
    const auto data = load_dataset(path);
    CHECK(data.size() == 0);
    CHECK(data.num_states == 4);
    CHECK(data.meta.env_id == "grid/empty");
    CHECK(data.meta.seed == 9);
    std::remove(path.c_str());
}

TEST_CASE("load_dataset: out-of-bounds action is a validation error") {
    const auto path = temp_path("countmorl_bad_action.csv");
    {
        std::ofstream out(path);
        out << "#num_states=3\n#num_actions=2\n";
        out << "0,2,0.5,1\n";
    }
    CHECK_THROWS_AS(load_dataset(path), std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("load_dataset: malformed line reports its line number") {
    const auto path = temp_path("countmorl_malformed.csv");
    {
        std::ofstream out(path);
        out << "#num_states=3\n#num_actions=2\n";
        out << "0,1,0.5,1\n";
        out << "0,notanumber,0.5,1\n";
    }
    try {
        load_dataset(path);
        FAIL("expected parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":4") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("split_heldout: degenerate sizes and the partition property") {
    const auto mdp = random_mdp(4, 2, 2, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(4, 2), 100, 8, 25);

    auto [train_all, heldout_all] = split_heldout(data, data.size(), 3);
    CHECK(train_all.size() == 0);
    CHECK(heldout_all.size() == data.size());

    auto [train_none, heldout_none] = split_heldout(data, 0, 3);
    CHECK(train_none.transitions == data.transitions);
    CHECK(heldout_none.size() == 0);

    auto [train, heldout] = split_heldout(data, 25, 3);
    CHECK(train.size() == 75);
    CHECK(heldout.size() == 25);
    // union is a permutation of the input
    auto all = train.transitions;
    all.insert(all.end(), heldout.transitions.begin(), heldout.transitions.end());
    auto key = [](const Transition& t) {
        return std::tuple(t.state, t.action, t.reward, t.next_state);
    };
    auto sorted_input = data.transitions;
    std::sort(all.begin(), all.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
    std::sort(sorted_input.begin(), sorted_input.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
    CHECK(all == sorted_input);

    CHECK_THROWS_AS(split_heldout(data, data.size() + 1, 3), std::invalid_argument);
}

TEST_CASE("split_heldout is deterministic per seed") {
    const auto mdp = random_mdp(3, 2, 4, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(3, 2), 60, 1, 30);
    auto [t1, h1] = split_heldout(data, 10, 42);
    auto [t2, h2] = split_heldout(data, 10, 42);
    CHECK(t1.transitions == t2.transitions);
    CHECK(h1.transitions == h2.transitions);
}
