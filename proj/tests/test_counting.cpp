#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "countmorl/counting.hpp"
#include "countmorl/gridworld.hpp"
#include "countmorl/synthetic.hpp"

using namespace countmorl;

namespace {

CountEnsembleConfig onehot_cfg(int bits = 20, int n = 5, double alpha = 0.5, std::uint64_t seed = 1) {
    CountEnsembleConfig cfg;
    cfg.feature_map = "onehot";
    cfg.code_bits = bits;
    cfg.n_members = n;
    cfg.alpha = alpha;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("count estimation arithmetic: sigma = 0 collapse") {
    const std::vector<double> counts{7.0, 7.0, 7.0};
    for (CountMode mode : {CountMode::LC, CountMode::AVG, CountMode::UC})
        CHECK(count_from_members(counts, 0.5, mode) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("count estimation arithmetic: {4,6} with alpha = 0.5") {
    const std::vector<double> counts{4.0, 6.0};
    CHECK(count_from_members(counts, 0.5, CountMode::AVG) == doctest::Approx(5.0).epsilon(1e-12));
    // mean 5, sample sigma = sqrt(2): LC = 5 - 0.5*sqrt(2), UC = 5 + 0.5*sqrt(2)
    CHECK(count_from_members(counts, 0.5, CountMode::LC) ==
          doctest::Approx(4.29289321881345).epsilon(1e-9));
    CHECK(count_from_members(counts, 0.5, CountMode::UC) ==
          doctest::Approx(5.70710678118655).epsilon(1e-9));
}

TEST_CASE("count estimation arithmetic: alpha = 0 collapses LC/UC to AVG") {
    const std::vector<double> counts{1.0, 9.0, 2.0};
    const double avg = count_from_members(counts, 0.0, CountMode::AVG);
    CHECK(count_from_members(counts, 0.0, CountMode::LC) == avg);
    CHECK(count_from_members(counts, 0.0, CountMode::UC) == avg);
}

TEST_CASE("count estimation arithmetic: single member with non-AVG mode throws") {
    const std::vector<double> counts{3.0};
    CHECK_THROWS_AS(count_from_members(counts, 0.5, CountMode::LC), std::invalid_argument);
    CHECK_THROWS_AS(count_from_members(counts, 0.5, CountMode::UC), std::invalid_argument);
    CHECK(count_from_members(counts, 0.5, CountMode::AVG) == 3.0);
    CHECK(count_from_members(counts, 0.0, CountMode::LC) == 3.0);  // alpha = 0 is fine
}

TEST_CASE("empty dataset: every query returns zero counts") {
    CountEnsemble ens(4, 2, onehot_cfg());
    OfflineDataset empty;
    empty.num_states = 4;
    empty.num_actions = 2;
    ingest_dataset(ens, empty);
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 2; ++a) {
            for (int i = 0; i < ens.n_members(); ++i) CHECK(ens.member_count(i, s, a) == 0);
            CHECK(estimate_count(ens, s, a, CountMode::AVG) == 0.0);
        }
}

TEST_CASE("per-member table totals equal the dataset size") {
    const auto mdp = random_mdp(4, 2, 9, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(4, 2), 137, 4, 25);
    CountEnsemble ens(4, 2, onehot_cfg());
    ens.ingest_dataset(data);
    for (int i = 0; i < ens.n_members(); ++i)
        CHECK(ens.counter(i).total() == static_cast<long long>(data.size()));
}

TEST_CASE("double ingestion is rejected; reset clears the counters") {
    const auto mdp = random_mdp(3, 2, 1, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(3, 2), 20, 1, 10);
    CountEnsemble ens(3, 2, onehot_cfg());
    ens.ingest_dataset(data);
    CHECK_THROWS_AS(ens.ingest_dataset(data), std::logic_error);
    ens.reset();
    CHECK(ens.counter(0).total() == 0);
    ens.ingest_dataset(data);
    CHECK(ens.counter(0).total() == 20);
}

TEST_CASE("injective one-hot codes reproduce exact counts on grid datasets") {
    // With one-hot features and d = 20 sign-projection bits, pair codes are
    // injective for this seed; hashed counts then equal exact counts on all
    // 256 pairs.
    const auto layout = make_layout(GridKind::Bridge);
    const auto mdp = build_gridworld(layout);
    BehaviorTrainConfig bcfg;
    bcfg.episodes = 300;
    bcfg.epsilon = 0.3;
    bcfg.seed = 2;
    const auto behavior = train_behavior(mdp, layout, bcfg);
    const auto counts = exact_counts(behavior.replay_buffer);

    CountEnsemble ens(64, 4, onehot_cfg(20, 5, 0.5, /*seed=*/1));
    std::vector<std::size_t> all_pairs(256);
    for (std::size_t p = 0; p < 256; ++p) all_pairs[p] = p;
    for (int i = 0; i < ens.n_members(); ++i) REQUIRE(ens.injective_over(i, all_pairs));

    ens.ingest_dataset(behavior.replay_buffer);
    for (int s = 0; s < 64; ++s)
        for (int a = 0; a < 4; ++a) {
            for (int i = 0; i < ens.n_members(); ++i)
                CHECK(ens.member_count(i, s, a) == counts.at(s, a));
            CHECK(estimate_count(ens, s, a, CountMode::LC) ==
                  doctest::Approx(static_cast<double>(counts.at(s, a))).epsilon(1e-12));
        }
}

TEST_CASE("pair ingested exactly 7 times under injective codes counts 7") {
    OfflineDataset data;
    data.num_states = 3;
    data.num_actions = 2;
    for (int i = 0; i < 7; ++i) data.transitions.push_back({1, 0, 0.0, 2});
    data.transitions.push_back({0, 1, 0.0, 1});
    CountEnsemble ens(3, 2, onehot_cfg(24, 3));
    std::vector<std::size_t> pairs{0, 1, 2, 3, 4, 5};
    REQUIRE(ens.injective_over(0, pairs));
    ens.ingest_dataset(data);
    CHECK(ens.member_count(0, 1, 0) == 7);
    CHECK(ens.member_count(0, 2, 1) == 0);  // unseen pair, no collision
}

TEST_CASE("LC <= AVG <= UC pointwise for alpha >= 0") {
    const auto mdp = random_mdp(6, 3, 3, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(6, 3), 500, 9, 50);
    CountEnsembleConfig cfg;
    cfg.feature_map = "noisy-onehot";
    cfg.code_bits = 8;  // small code width forces collisions and disagreement
    cfg.n_members = 5;
    cfg.alpha = 0.7;
    cfg.seed = 12;
    CountEnsemble ens(6, 3, cfg);
    ens.ingest_dataset(data);
    for (int s = 0; s < 6; ++s)
        for (int a = 0; a < 3; ++a) {
            const double lc = estimate_count(ens, s, a, CountMode::LC);
            const double avg = estimate_count(ens, s, a, CountMode::AVG);
            const double uc = estimate_count(ens, s, a, CountMode::UC);
            CHECK(lc <= avg + 1e-12);
            CHECK(avg <= uc + 1e-12);
        }
}

TEST_CASE("identical seeds give identical codes and counts") {
    const auto mdp = random_mdp(4, 2, 8, 0.9);
    const auto data = generate_dataset(mdp, PolicyTable::uniform(4, 2), 200, 5, 25);
    CountEnsembleConfig cfg;
    cfg.feature_map = "noisy-onehot";
    cfg.code_bits = 16;
    cfg.n_members = 3;
    cfg.seed = 31;
    CountEnsemble a(4, 2, cfg), b(4, 2, cfg);
    a.ingest_dataset(data);
    b.ingest_dataset(data);
    for (int i = 0; i < 3; ++i)
        for (int s = 0; s < 4; ++s)
            for (int x = 0; x < 2; ++x) CHECK(a.member_count(i, s, x) == b.member_count(i, s, x));
    // A different seed draws different projections, so codes change even when
    // both assignments are injective.
    HashCounter h1(16, 8, 100), h2(16, 8, 101);
    std::vector<double> probe(8, 0.0);
    probe[3] = 1.0;
    CHECK(h1.code_of(probe) != h2.code_of(probe));
}

TEST_CASE("noisy one-hot collision audit is reported, not asserted") {
    // At very small code widths collisions must exist; the audit just counts
    // them.
    CountEnsembleConfig cfg;
    cfg.feature_map = "noisy-onehot";
    cfg.code_bits = 4;  // 16 buckets for 256 pairs: collisions guaranteed
    cfg.n_members = 2;
    cfg.seed = 5;
    CountEnsemble ens(64, 4, cfg);
    for (int i = 0; i < 2; ++i) CHECK(ens.collision_pairs(i) > 0);

    CountEnsemble wide(64, 4, onehot_cfg(64, 2));
    for (int i = 0; i < 2; ++i) CHECK(wide.collision_pairs(i) == 0);
}

TEST_CASE("feature maps are deterministic functions of the pair") {
    NoisyOneHotFeatures f(4, 3, 0.05, 77);
    std::vector<double> v1(static_cast<std::size_t>(f.dim())), v2(v1.size());
    f.write(2, 1, v1);
    f.write(2, 1, v2);
    CHECK(v1 == v2);
    f.write(2, 2, v2);
    CHECK(v1 != v2);
    // one-hot spike survives the perturbation
    CHECK(v1[2 * 3 + 1] > 0.5);
}

TEST_CASE("code bits beyond 64 use the high word") {
    CountEnsemble ens(8, 2, onehot_cfg(80, 2, 0.5, 9));
    std::vector<std::size_t> pairs(16);
    for (std::size_t p = 0; p < 16; ++p) pairs[p] = p;
    CHECK(ens.injective_over(0, pairs));
    OfflineDataset data;
    data.num_states = 8;
    data.num_actions = 2;
    data.transitions = {{3, 1, 0.0, 4}, {3, 1, 0.0, 5}};
    ens.ingest_dataset(data);
    CHECK(ens.member_count(0, 3, 1) == 2);
    CHECK(ens.member_count(1, 3, 1) == 2);
}

TEST_CASE("HashCounter rejects invalid configuration") {
    CHECK_THROWS_AS(HashCounter(0, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(HashCounter(129, 10, 1), std::invalid_argument);
    HashCounter c(8, 4, 1);
    std::vector<double> wrong(5, 0.0);
    CHECK_THROWS_AS(c.code_of(wrong), std::invalid_argument);
}
