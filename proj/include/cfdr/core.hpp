#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfdr/errors.hpp"
#include "cfdr/rng.hpp"

namespace cfdr {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-major so that one context's action row is contiguous.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using CountMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Tolerance used by the normalization invariants (1e-12 for double).
template <typename Scalar>
constexpr Scalar normalization_tolerance() {
    return std::max(Scalar(1e-12), Scalar(64) * std::numeric_limits<Scalar>::epsilon());
}

/// phi(s, a) for every pair, stored densely: row s * action_count + a.
template <typename Scalar>
struct FeatureMap {
    std::string name;
    Index action_count = 0;
    MatrixX<Scalar> table;

    Index dim() const { return table.cols(); }
    auto operator()(Index s, Index a) const { return table.row(s * action_count + a); }
};

template <typename Scalar>
using FeatureMapPtr = std::shared_ptr<const FeatureMap<Scalar>>;

/// Full generative description of a discrete contextual bandit with Gaussian rewards.
template <typename Scalar = double>
class EnvSpec {
public:
    EnvSpec(std::string name, VectorX<Scalar> d0, MatrixX<Scalar> mean_reward,
            MatrixX<Scalar> reward_std)
        : name_(std::move(name)),
          d0_(std::move(d0)),
          mean_reward_(std::move(mean_reward)),
          reward_std_(std::move(reward_std)) {
        if (d0_.size() == 0 || mean_reward_.cols() == 0)
            throw InvalidArgument("environment needs at least one context and one action");
        if (mean_reward_.rows() != d0_.size() || reward_std_.rows() != d0_.size() ||
            reward_std_.cols() != mean_reward_.cols())
            throw InvalidArgument("environment tables disagree on |S| x |A|");
        if ((d0_.array() < Scalar(0)).any() ||
            std::abs(d0_.sum() - Scalar(1)) > normalization_tolerance<Scalar>())
            throw InvalidArgument("d0 must be a probability vector");
        if ((reward_std_.array() < Scalar(0)).any())
            throw InvalidArgument("reward_std must be nonnegative");
        if (!mean_reward_.allFinite() || !reward_std_.allFinite())
            throw InvalidArgument("reward tables must be finite");
        build_cdf();
    }

    const std::string& name() const { return name_; }
    Index context_count() const { return d0_.size(); }
    Index action_count() const { return mean_reward_.cols(); }

    const VectorX<Scalar>& d0() const { return d0_; }
    Scalar d0(Index s) const { return d0_(s); }
    const MatrixX<Scalar>& mean_rewards() const { return mean_reward_; }
    const MatrixX<Scalar>& reward_stds() const { return reward_std_; }
    Scalar mean_reward(Index s, Index a) const { return mean_reward_(s, a); }
    Scalar reward_std(Index s, Index a) const { return reward_std_(s, a); }

    /// Mean reward std over d0 x uniform actions; the unit for default (eps, delta) grids.
    Scalar mean_reward_std() const {
        return d0_.dot(reward_std_.rowwise().mean());
    }

    /// Probability that a reward-model training sample observes a uniformly random
    /// context instead of its own (partial observability). Zero means identity.
    Scalar observation_noise() const { return observation_noise_; }

    EnvSpec with_observation_noise(Scalar p) const {
        if (!(p >= Scalar(0) && p <= Scalar(1)))
            throw InvalidArgument("observation noise must lie in [0, 1]");
        EnvSpec copy = *this;
        copy.observation_noise_ = p;
        return copy;
    }

    /// Observed context for a model-training sample; always a valid context id.
    Index observe(Index s, Rng& rng) const {
        if (observation_noise_ <= Scalar(0)) return s;
        std::uniform_real_distribution<Scalar> unit(Scalar(0), Scalar(1));
        if (unit(rng) >= observation_noise_) return s;
        std::uniform_int_distribution<Index> pick(0, context_count() - 1);
        return pick(rng);
    }

    EnvSpec& add_feature_map(FeatureMap<Scalar> map) {
        if (map.action_count != action_count() ||
            map.table.rows() != context_count() * action_count())
            throw InvalidArgument("feature map '" + map.name + "' has the wrong shape");
        if (!map.table.allFinite())
            throw InvalidArgument("feature map '" + map.name + "' is not finite");
        feature_maps_.push_back(std::make_shared<const FeatureMap<Scalar>>(std::move(map)));
        return *this;
    }

    FeatureMapPtr<Scalar> feature_map(const std::string& name) const {
        for (const auto& m : feature_maps_)
            if (m->name == name) return m;
        return nullptr;
    }

    const std::vector<FeatureMapPtr<Scalar>>& feature_maps() const { return feature_maps_; }

    /// Structured record per context id (e.g. vitals for sepsis, step count for heartsteps).
    EnvSpec& set_context_records(std::vector<std::string> fields, MatrixX<Scalar> records) {
        if (records.rows() != context_count() ||
            records.cols() != static_cast<Index>(fields.size()))
            throw InvalidArgument("context records have the wrong shape");
        record_fields_ = std::move(fields);
        records_ = std::move(records);
        return *this;
    }

    const std::vector<std::string>& record_fields() const { return record_fields_; }
    const MatrixX<Scalar>& context_records() const { return records_; }

    Index sample_context(Rng& rng) const { return sample_from_cdf(d0_cdf_, rng); }

private:
    void build_cdf() {
        d0_cdf_.resize(d0_.size());
        Scalar acc = 0;
        for (Index s = 0; s < d0_.size(); ++s) d0_cdf_[s] = acc += d0_(s);
    }

    template <typename Cdf>
    static Index sample_from_cdf(const Cdf& cdf, Rng& rng);

    std::string name_;
    VectorX<Scalar> d0_;
    MatrixX<Scalar> mean_reward_;
    MatrixX<Scalar> reward_std_;
    Scalar observation_noise_ = 0;
    std::vector<FeatureMapPtr<Scalar>> feature_maps_;
    std::vector<std::string> record_fields_;
    MatrixX<Scalar> records_;
    std::vector<Scalar> d0_cdf_;

    template <typename>
    friend class Policy;
};

namespace detail {

/// Inverse-CDF draw. Zero-probability entries are never returned.
template <typename Scalar, typename Cdf>
Index draw_from_cdf(const Cdf& cdf, Index size, Rng& rng) {
    std::uniform_real_distribution<Scalar> unit(Scalar(0), Scalar(1));
    const Scalar u = unit(rng) * cdf[size - 1];
    Index lo = 0, hi = size;
    while (lo < hi) {
        const Index mid = (lo + hi) / 2;
        if (cdf[mid] > u) hi = mid; else lo = mid + 1;
    }
    if (lo >= size) {
        lo = size - 1;
        while (lo > 0 && cdf[lo] == cdf[lo - 1]) --lo;
    }
    return lo;
}

}  // namespace detail

template <typename Scalar>
template <typename Cdf>
Index EnvSpec<Scalar>::sample_from_cdf(const Cdf& cdf, Rng& rng) {
    return detail::draw_from_cdf<Scalar>(cdf, static_cast<Index>(cdf.size()), rng);
}

/// pi(a | s) as a row-stochastic |S| x |A| table.
template <typename Scalar = double>
class Policy {
public:
    Policy() = default;

    explicit Policy(MatrixX<Scalar> probs) : probs_(std::move(probs)) {
        if (probs_.rows() == 0 || probs_.cols() == 0)
            throw InvalidArgument("policy table is empty");
        for (Index s = 0; s < probs_.rows(); ++s) {
            const auto row = probs_.row(s);
            if ((row.array() < Scalar(0)).any() || (row.array() > Scalar(1)).any() ||
                std::abs(row.sum() - Scalar(1)) > normalization_tolerance<Scalar>())
                throw InvalidArgument("policy row " + std::to_string(s) +
                                      " is not a probability vector");
        }
        build_cdf();
    }

    /// The same action distribution in every context.
    static Policy constant(Index context_count, const VectorX<Scalar>& probs) {
        MatrixX<Scalar> table(context_count, probs.size());
        table.rowwise() = probs.transpose();
        return Policy(std::move(table));
    }

    static Policy deterministic(Index context_count, Index action_count, Index action) {
        VectorX<Scalar> p = VectorX<Scalar>::Zero(action_count);
        p(action) = Scalar(1);
        return constant(context_count, p);
    }

    Index context_count() const { return probs_.rows(); }
    Index action_count() const { return probs_.cols(); }
    Scalar operator()(Index s, Index a) const { return probs_(s, a); }
    auto row(Index s) const { return probs_.row(s); }
    const MatrixX<Scalar>& table() const { return probs_; }

    Index sample_action(Index s, Rng& rng) const {
        return detail::draw_from_cdf<Scalar>(cdf_.row(s).data(), action_count(), rng);
    }

private:
    void build_cdf() {
        cdf_.resize(probs_.rows(), probs_.cols());
        for (Index s = 0; s < probs_.rows(); ++s) {
            Scalar acc = 0;
            for (Index a = 0; a < probs_.cols(); ++a) cdf_(s, a) = acc += probs_(s, a);
        }
    }

    MatrixX<Scalar> probs_;
    MatrixX<Scalar> cdf_;
};

enum class CoverageMode {
    strict,      ///< estimators throw CoverageViolation when support is missing
    permissive,  ///< estimators run; ratios are only ever evaluated at logged actions
};

/// First (s, a) where target > 0 but behavior == 0, if any.
template <typename Scalar>
std::optional<std::pair<Index, Index>> find_uncovered(const MatrixX<Scalar>& behavior,
                                                      const MatrixX<Scalar>& target) {
    for (Index s = 0; s < target.rows(); ++s)
        for (Index a = 0; a < target.cols(); ++a)
            if (target(s, a) > Scalar(0) && !(behavior(s, a) > Scalar(0)))
                return std::pair{s, a};
    return std::nullopt;
}

template <typename Scalar = double>
class EvaluationProblem {
public:
    EvaluationProblem(EnvSpec<Scalar> env, Policy<Scalar> pi_b, Policy<Scalar> pi_e,
                      CoverageMode mode = CoverageMode::strict)
        : env_(std::move(env)), pi_b_(std::move(pi_b)), pi_e_(std::move(pi_e)), mode_(mode) {
        for (const Policy<Scalar>* p : {&pi_b_, &pi_e_})
            if (p->context_count() != env_.context_count() ||
                p->action_count() != env_.action_count())
                throw InvalidArgument("policy shape does not match the environment");
        uncovered_ = find_uncovered(pi_b_.table(), pi_e_.table());
    }

    const EnvSpec<Scalar>& env() const { return env_; }
    const Policy<Scalar>& pi_b() const { return pi_b_; }
    const Policy<Scalar>& pi_e() const { return pi_e_; }
    CoverageMode coverage_mode() const { return mode_; }

    bool covered() const { return !uncovered_.has_value(); }
    const std::optional<std::pair<Index, Index>>& first_uncovered() const { return uncovered_; }

    /// Throws unless common support holds or the problem was built permissive.
    void require_coverage() const {
        if (uncovered_ && mode_ == CoverageMode::strict)
            throw CoverageViolation(uncovered_->first, uncovered_->second,
                                    "behavior policy does not cover the target policy at (" +
                                        std::to_string(uncovered_->first) + ", " +
                                        std::to_string(uncovered_->second) + ")");
    }

private:
    EnvSpec<Scalar> env_;
    Policy<Scalar> pi_b_;
    Policy<Scalar> pi_e_;
    CoverageMode mode_;
    std::optional<std::pair<Index, Index>> uncovered_;
};

template <typename Scalar = double>
struct FactualSample {
    Index context = 0;
    Index action = 0;
    Scalar reward = 0;
};

template <typename Scalar = double>
struct Dataset {
    std::vector<FactualSample<Scalar>> samples;
    std::uint64_t source_seed = 0;
    Index context_count = 0;
    Index action_count = 0;

    Index size() const { return static_cast<Index>(samples.size()); }

    /// N_{s,a}
    CountMatrix counts() const {
        CountMatrix n = CountMatrix::Zero(context_count, action_count);
        for (const auto& x : samples) ++n(x.context, x.action);
        return n;
    }
};

/// pi_e(a|s) / pi_b(a|s), with 0/0 := 0.
template <typename Scalar>
Scalar ips_ratio(const EvaluationProblem<Scalar>& problem, Index s, Index a) {
    const Scalar target = problem.pi_e()(s, a);
    if (target == Scalar(0)) return Scalar(0);
    const Scalar behavior = problem.pi_b()(s, a);
    if (!(behavior > Scalar(0)))
        throw CoverageViolation(s, a, "ips ratio undefined: target takes action " +
                                          std::to_string(a) + " in context " +
                                          std::to_string(s) + " but behavior never does");
    return target / behavior;
}

/// Draws N logged samples: s ~ d0, a ~ pi_b(.|s), r ~ Normal(mean, std^2).
template <typename Scalar>
Dataset<Scalar> sample_dataset(const EvaluationProblem<Scalar>& problem, Index n,
                               std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("dataset size must be at least 1");
    const auto& env = problem.env();
    Rng rng = make_rng(seed);
    std::normal_distribution<Scalar> z(Scalar(0), Scalar(1));
    Dataset<Scalar> data{{}, seed, env.context_count(), env.action_count()};
    data.samples.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Index s = env.sample_context(rng);
        const Index a = problem.pi_b().sample_action(s, rng);
        const Scalar noise = z(rng);
        data.samples.push_back({s, a, env.mean_reward(s, a) + env.reward_std(s, a) * noise});
    }
    return data;
}

/// v(pi) = sum_s d0(s) sum_a pi(a|s) Rbar(s,a), the state-value vector contracted with d0.
template <typename Scalar>
VectorX<Scalar> context_values(const EnvSpec<Scalar>& env, const Policy<Scalar>& pi) {
    return pi.table().cwiseProduct(env.mean_rewards()).rowwise().sum();
}

template <typename Scalar>
Scalar policy_value_exact(const EnvSpec<Scalar>& env, const Policy<Scalar>& pi) {
    return env.d0().dot(context_values(env, pi));
}

/// Mean of n on-policy reward draws under pi.
template <typename Scalar>
Scalar policy_value_mc(const EnvSpec<Scalar>& env, const Policy<Scalar>& pi, Index n,
                       std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("Monte-Carlo sample count must be at least 1");
    Rng rng = make_rng(seed);
    std::normal_distribution<Scalar> z(Scalar(0), Scalar(1));
    Scalar total = 0;
    for (Index i = 0; i < n; ++i) {
        const Index s = env.sample_context(rng);
        const Index a = pi.sample_action(s, rng);
        const Scalar noise = z(rng);
        total += env.mean_reward(s, a) + env.reward_std(s, a) * noise;
    }
    return total / static_cast<Scalar>(n);
}

}  // namespace cfdr
