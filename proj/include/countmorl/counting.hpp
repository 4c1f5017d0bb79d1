#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "countmorl/common.hpp"
#include "countmorl/dataset.hpp"

namespace countmorl {

/// Deterministic map from a state-action pair to a feature vector in R^k.
class FeatureMap {
  public:
    virtual ~FeatureMap() = default;
    virtual int dim() const = 0;
    virtual void write(int state, int action, std::span<double> out) const = 0;
    virtual std::string name() const = 0;
};

/// Indicator vector of the pair index; k = S * A.
class OneHotFeatures final : public FeatureMap {
  public:
    OneHotFeatures(int num_states, int num_actions)
        : num_states_(num_states), num_actions_(num_actions) {}

    int dim() const override { return num_states_ * num_actions_; }

    void write(int state, int action, std::span<double> out) const override {
        for (double& v : out) v = 0.0;
        out[static_cast<std::size_t>(state) * num_actions_ + static_cast<std::size_t>(action)] = 1.0;
    }

    std::string name() const override { return "onehot"; }

  private:
    int num_states_;
    int num_actions_;
};

/// One-hot plus a Gaussian perturbation of scale rho, frozen at construction:
/// the perturbation of a pair is a pure function of (seed, pair), so repeated
/// queries see the same vector without storing S*A*k values.
class NoisyOneHotFeatures final : public FeatureMap {
  public:
    NoisyOneHotFeatures(int num_states, int num_actions, double rho, std::uint64_t seed)
        : num_states_(num_states), num_actions_(num_actions), rho_(rho), seed_(seed) {}

    int dim() const override { return num_states_ * num_actions_; }

    void write(int state, int action, std::span<double> out) const override {
        const std::size_t pair =
            static_cast<std::size_t>(state) * num_actions_ + static_cast<std::size_t>(action);
        Rng rng(derive_seed(seed_, 0xFEA7 + pair));
        for (double& v : out) v = rho_ * rng.next_gaussian();
        out[pair] += 1.0;
    }

    std::string name() const override { return "noisy-onehot"; }

  private:
    int num_states_;
    int num_actions_;
    double rho_;
    std::uint64_t seed_;
};

inline constexpr double kNoisyOneHotDefaultRho = 0.05;

inline std::unique_ptr<FeatureMap> make_feature_map(const std::string& kind, int num_states,
                                                    int num_actions, std::uint64_t seed,
                                                    double rho = kNoisyOneHotDefaultRho) {
    if (kind == "onehot") return std::make_unique<OneHotFeatures>(num_states, num_actions);
    if (kind == "noisy-onehot")
        return std::make_unique<NoisyOneHotFeatures>(num_states, num_actions, rho, seed);
    throw std::invalid_argument("unknown feature map '" + kind + "'");
}

/// d-bit binary hash code, d <= 128.
struct HashCode {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;

    bool operator==(const HashCode&) const = default;

    void set_bit(int j) {
        if (j < 64)
            lo |= (1ULL << j);
        else
            hi |= (1ULL << (j - 64));
    }
};

struct HashCodeHash {
    std::size_t operator()(const HashCode& c) const {
        return static_cast<std::size_t>(splitmix64(c.lo ^ splitmix64(c.hi)));
    }
};

/// Sign-of-projection hashing counter: d seeded Gaussian projections of the
/// feature space; a vector's code bit j is 1 iff its projection j is >= 0.
class HashCounter {
  public:
    HashCounter(int code_bits, int feature_dim, std::uint64_t seed)
        : code_bits_(code_bits), feature_dim_(feature_dim) {
        if (code_bits < 1 || code_bits > 128)
            throw std::invalid_argument("HashCounter: code_bits must lie in [1,128]");
        Rng rng(derive_seed(seed, 0x4A5));
        projections_.assign(static_cast<std::size_t>(code_bits) * feature_dim, 0.0);
        for (double& v : projections_) v = rng.next_gaussian();
    }

    int code_bits() const { return code_bits_; }
    int feature_dim() const { return feature_dim_; }

    HashCode code_of(std::span<const double> feature) const {
        if (static_cast<int>(feature.size()) != feature_dim_)
            throw std::invalid_argument("HashCounter: feature dimension mismatch");
        HashCode code;
        for (int j = 0; j < code_bits_; ++j) {
            const double* proj = projections_.data() + static_cast<std::size_t>(j) * feature_dim_;
            double dot = 0.0;
            for (int i = 0; i < feature_dim_; ++i) dot += proj[i] * feature[static_cast<std::size_t>(i)];
            if (dot >= 0.0) code.set_bit(j);  // ties resolve to bit 1
        }
        return code;
    }

    void ingest(const HashCode& code, long long times = 1) {
        table_[code] += times;
        total_ += times;
    }

    long long count_of(const HashCode& code) const {
        auto it = table_.find(code);
        return it == table_.end() ? 0 : it->second;
    }

    long long total() const { return total_; }
    std::size_t distinct_codes() const { return table_.size(); }

    void reset() {
        table_.clear();
        total_ = 0;
    }

  private:
    int code_bits_;
    int feature_dim_;
    std::vector<double> projections_;
    std::unordered_map<HashCode, long long, HashCodeHash> table_;
    long long total_ = 0;
};

enum class CountMode { LC, AVG, UC };

inline const char* count_mode_name(CountMode mode) {
    switch (mode) {
        case CountMode::LC: return "lc";
        case CountMode::AVG: return "avg";
        case CountMode::UC: return "uc";
    }
    return "?";
}

inline CountMode parse_count_mode(const std::string& s) {
    if (s == "lc" || s == "LC") return CountMode::LC;
    if (s == "avg" || s == "AVG") return CountMode::AVG;
    if (s == "uc" || s == "UC") return CountMode::UC;
    throw std::invalid_argument("unknown count mode '" + s + "'");
}

/// Combines per-member counts into one estimate: mean for AVG, mean -/+
/// alpha * sigma for LC/UC, with sigma the sample standard deviation
/// (N-1 denominator). LC may go negative; nothing clamps it here.
inline double count_from_members(std::span<const double> member_counts, double alpha,
                                 CountMode mode) {
    const std::size_t N = member_counts.size();
    if (N == 0) throw std::invalid_argument("count_from_members: no members");
    if (mode != CountMode::AVG && alpha > 0.0 && N < 2)
        throw std::invalid_argument("count_from_members: LC/UC with alpha > 0 needs at least 2 members");
    double mean = 0.0;
    for (double c : member_counts) mean += c;
    mean /= static_cast<double>(N);
    if (mode == CountMode::AVG || alpha == 0.0) return mean;
    double ss = 0.0;
    for (double c : member_counts) ss += (c - mean) * (c - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(N - 1));
    return mode == CountMode::LC ? mean - alpha * sigma : mean + alpha * sigma;
}

struct CountEnsembleConfig {
    std::string feature_map = "onehot";
    double noise_rho = kNoisyOneHotDefaultRho;
    int code_bits = 20;
    int n_members = 5;
    double alpha = 0.5;
    std::uint64_t seed = 0;
};

/// Ensemble of (feature map, hashing counter) pairs with the LC/AVG/UC
/// estimator on top. Pair codes are precomputed per member, so ingesting a
/// transition is a single bucket increment.
class CountEnsemble {
  public:
    CountEnsemble(int num_states, int num_actions, const CountEnsembleConfig& cfg)
        : num_states_(num_states), num_actions_(num_actions), alpha_(cfg.alpha), cfg_(cfg) {
        if (cfg.n_members < 1) throw std::invalid_argument("CountEnsemble: need at least one member");
        if (cfg.alpha < 0.0) throw std::invalid_argument("CountEnsemble: alpha must be non-negative");
        const auto pairs = static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions);
        std::vector<double> feature;
        for (int i = 0; i < cfg.n_members; ++i) {
            const std::uint64_t member_seed = derive_seed(cfg.seed, 0xC0DE + static_cast<std::uint64_t>(i));
            Member m;
            m.features = make_feature_map(cfg.feature_map, num_states, num_actions,
                                          derive_seed(member_seed, 1), cfg.noise_rho);
            m.counter = std::make_unique<HashCounter>(cfg.code_bits, m.features->dim(),
                                                      derive_seed(member_seed, 2));
            m.pair_codes.resize(pairs);
            feature.assign(static_cast<std::size_t>(m.features->dim()), 0.0);
            for (int s = 0; s < num_states; ++s)
                for (int a = 0; a < num_actions; ++a) {
                    m.features->write(s, a, feature);
                    m.pair_codes[static_cast<std::size_t>(s) * num_actions + a] =
                        m.counter->code_of(feature);
                }
            members_.push_back(std::move(m));
        }
    }

    int n_members() const { return static_cast<int>(members_.size()); }
    double alpha() const { return alpha_; }
    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    const CountEnsembleConfig& config() const { return cfg_; }
    bool ingested() const { return ingested_; }

    const FeatureMap& feature_map(int member) const { return *members_.at(static_cast<std::size_t>(member)).features; }
    const HashCounter& counter(int member) const { return *members_.at(static_cast<std::size_t>(member)).counter; }

    void ingest_dataset(const OfflineDataset& data) {
        if (ingested_) throw std::logic_error("CountEnsemble: already ingested; reset first");
        if (data.num_states != num_states_ || data.num_actions != num_actions_)
            throw std::invalid_argument("CountEnsemble: dataset dimensions mismatch");
        for (Member& m : members_)
            for (const Transition& t : data.transitions)
                m.counter->ingest(m.pair_codes[static_cast<std::size_t>(t.state) * num_actions_ + t.action]);
        ingested_ = true;
    }

    void reset() {
        for (Member& m : members_) m.counter->reset();
        ingested_ = false;
    }

    long long member_count(int member, int s, int a) const {
        const Member& m = members_.at(static_cast<std::size_t>(member));
        return m.counter->count_of(m.pair_codes[static_cast<std::size_t>(s) * num_actions_ + a]);
    }

    double estimate_count(int s, int a, CountMode mode) const {
        const int N = n_members();
        std::vector<double> member_counts(static_cast<std::size_t>(N));
        for (int i = 0; i < N; ++i)
            member_counts[static_cast<std::size_t>(i)] = static_cast<double>(member_count(i, s, a));
        return count_from_members(member_counts, alpha_, mode);
    }

    /// True iff the member's codes are injective over the given pairs.
    bool injective_over(int member, const std::vector<std::size_t>& pair_indices) const {
        const Member& m = members_.at(static_cast<std::size_t>(member));
        std::unordered_map<HashCode, std::size_t, HashCodeHash> seen;
        for (std::size_t p : pair_indices) {
            auto [it, inserted] = seen.emplace(m.pair_codes[p], p);
            if (!inserted) return false;
        }
        return true;
    }

    /// Number of unordered pair collisions among all S*A pair codes.
    long long collision_pairs(int member) const {
        const Member& m = members_.at(static_cast<std::size_t>(member));
        std::unordered_map<HashCode, long long, HashCodeHash> buckets;
        for (const HashCode& c : m.pair_codes) ++buckets[c];
        long long collisions = 0;
        for (const auto& [code, n] : buckets) collisions += n * (n - 1) / 2;
        return collisions;
    }

  private:
    struct Member {
        std::unique_ptr<FeatureMap> features;
        std::unique_ptr<HashCounter> counter;
        std::vector<HashCode> pair_codes;
    };

    int num_states_;
    int num_actions_;
    double alpha_;
    CountEnsembleConfig cfg_;
    std::vector<Member> members_;
    bool ingested_ = false;
};

/// Free-function spellings matching the operation names used elsewhere.
inline void ingest_dataset(CountEnsemble& ensemble, const OfflineDataset& data) {
    ensemble.ingest_dataset(data);
}
inline double estimate_count(const CountEnsemble& ensemble, int s, int a, CountMode mode) {
    return ensemble.estimate_count(s, a, mode);
}

}  // namespace countmorl
