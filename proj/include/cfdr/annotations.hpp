#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cfdr/core.hpp"

namespace cfdr {

enum class AvailabilityMode {
    per_entry,        ///< each counterfactual (sample, action) annotated independently
    one_per_sample,   ///< exactly one counterfactual action per sample, chosen uniformly
};

/// Annotation law G(s, a) = Normal(Rbar + bias, std^2 + excess_variance).
template <typename Scalar = double>
struct AnnotationModel {
    MatrixX<Scalar> bias;
    MatrixX<Scalar> excess_variance;
    MatrixX<Scalar> availability;
    AvailabilityMode mode = AvailabilityMode::per_entry;

    static AnnotationModel uniform(Index contexts, Index actions, Scalar eps, Scalar delta,
                                   Scalar available,
                                   AvailabilityMode mode = AvailabilityMode::per_entry) {
        AnnotationModel m{MatrixX<Scalar>::Constant(contexts, actions, eps),
                          MatrixX<Scalar>::Constant(contexts, actions, delta),
                          MatrixX<Scalar>::Constant(contexts, actions, available), mode};
        m.validate();
        return m;
    }

    static AnnotationModel perfect(Index contexts, Index actions, Scalar available = 1) {
        return uniform(contexts, actions, 0, 0, available);
    }

    bool is_perfect() const {
        return (bias.array() == Scalar(0)).all() && (excess_variance.array() == Scalar(0)).all();
    }

    void validate() const {
        if (bias.rows() != excess_variance.rows() || bias.rows() != availability.rows() ||
            bias.cols() != excess_variance.cols() || bias.cols() != availability.cols())
            throw InvalidArgument("annotation model tables disagree on shape");
        if (!bias.allFinite() || !excess_variance.allFinite())
            throw InvalidArgument("annotation model must be finite");
        if ((excess_variance.array() < Scalar(0)).any())
            throw InvalidArgument("excess annotation variance must be nonnegative");
        if ((availability.array() < Scalar(0)).any() || (availability.array() > Scalar(1)).any())
            throw InvalidArgument("availability must lie in [0, 1]");
    }
};

/// Counterfactual annotations g_i, keyed by action (sorted, factual action excluded).
template <typename Scalar = double>
using AnnotationSet = std::vector<std::pair<Index, Scalar>>;

template <typename Scalar = double>
struct AugmentedSample {
    FactualSample<Scalar> factual;
    AnnotationSet<Scalar> annotations;
    VectorX<Scalar> weights;

    std::optional<Scalar> annotation(Index a) const {
        for (const auto& [act, g] : annotations)
            if (act == a) return g;
        return std::nullopt;
    }

    bool has(Index a) const { return a == factual.action || annotation(a).has_value(); }

    /// c_i^a: the reward for the factual action, else the annotation (0 when absent).
    Scalar combined(Index a) const {
        if (a == factual.action) return factual.reward;
        return annotation(a).value_or(Scalar(0));
    }
};

template <typename Scalar = double>
struct AugmentedDataset {
    std::vector<AugmentedSample<Scalar>> samples;
    Index n_factual = 0;
    Index m_annotations = 0;
    Index context_count = 0;
    Index action_count = 0;

    Index size() const { return static_cast<Index>(samples.size()); }

    Dataset<Scalar> factual() const {
        Dataset<Scalar> d{{}, 0, context_count, action_count};
        d.samples.reserve(samples.size());
        for (const auto& x : samples) d.samples.push_back(x.factual);
        return d;
    }

    /// M_{s,a}
    CountMatrix annotation_counts() const {
        CountMatrix m = CountMatrix::Zero(context_count, action_count);
        for (const auto& x : samples)
            for (const auto& [a, g] : x.annotations) ++m(x.factual.context, a);
        return m;
    }
};

/// Draws annotations for every logged sample. Every counterfactual slot consumes the
/// same random numbers whatever the model, so grids over (bias, variance, availability)
/// share their noise.
template <typename Scalar>
AugmentedDataset<Scalar> annotate(const Dataset<Scalar>& data, const EnvSpec<Scalar>& env,
                                  const AnnotationModel<Scalar>& model, std::uint64_t seed) {
    if (data.size() == 0) throw InvalidArgument("cannot annotate an empty dataset");
    model.validate();
    const Index A = env.action_count();
    if (model.bias.rows() != env.context_count() || model.bias.cols() != A)
        throw InvalidArgument("annotation model shape does not match the environment");
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<Scalar> unit(Scalar(0), Scalar(1));
    std::normal_distribution<Scalar> z(Scalar(0), Scalar(1));

    AugmentedDataset<Scalar> out;
    out.n_factual = data.size();
    out.context_count = env.context_count();
    out.action_count = A;
    out.samples.reserve(data.samples.size());
    for (const auto& f : data.samples) {
        AugmentedSample<Scalar> x{f, {}, VectorX<Scalar>::Zero(A)};
        x.weights(f.action) = Scalar(1);
        const Scalar pick_u = unit(rng);
        const Index chosen =
            A > 1 ? std::min<Index>(static_cast<Index>(pick_u * Scalar(A - 1)), A - 2) : -1;
        Index slot = 0;
        for (Index a = 0; a < A; ++a) {
            if (a == f.action) continue;
            const Scalar u = unit(rng);
            const Scalar noise = z(rng);
            const bool present = model.mode == AvailabilityMode::per_entry
                                     ? u < model.availability(f.context, a)
                                     : slot == chosen;
            ++slot;
            if (!present) continue;
            const Scalar sd = std::sqrt(env.reward_std(f.context, a) * env.reward_std(f.context, a) +
                                        model.excess_variance(f.context, a));
            x.annotations.emplace_back(
                a, env.mean_reward(f.context, a) + model.bias(f.context, a) + sd * noise);
        }
        out.m_annotations += static_cast<Index>(x.annotations.size());
        out.samples.push_back(std::move(x));
    }
    return out;
}

namespace detail {

/// pmf of a sum of independent Bernoulli(p_j), skipping the listed indices.
template <typename Scalar>
std::vector<Scalar> poisson_binomial(const std::vector<Scalar>& p, Index skip1 = -1,
                                     Index skip2 = -1) {
    std::vector<Scalar> pmf{Scalar(1)};
    for (Index j = 0; j < static_cast<Index>(p.size()); ++j) {
        if (j == skip1 || j == skip2) continue;
        pmf.push_back(Scalar(0));
        for (std::size_t k = pmf.size() - 1; k > 0; --k)
            pmf[k] = pmf[k] * (Scalar(1) - p[j]) + pmf[k - 1] * p[j];
        pmf[0] *= Scalar(1) - p[j];
    }
    return pmf;
}

/// E[f(K + offset)] under a pmf over K.
template <typename Scalar, typename F>
Scalar expect(const std::vector<Scalar>& pmf, Index offset, F f) {
    Scalar acc = 0;
    for (std::size_t k = 0; k < pmf.size(); ++k) acc += pmf[k] * f(static_cast<Index>(k) + offset);
    return acc;
}

}  // namespace detail

/// How each sample's unit weight mass is spread over its factual reward and annotations.
template <typename Scalar = double>
class WeightScheme {
public:
    enum class Kind { equal, custom };

    /// Equal weight over every present entry; missing annotations leave their mass on the
    /// factual action. Mean weights and covariances are exact expectations over availability.
    static WeightScheme equal(const AnnotationModel<Scalar>& model) {
        model.validate();
        WeightScheme w;
        w.kind_ = Kind::equal;
        w.availability_ = model.availability;
        w.mode_ = model.mode;
        w.contexts_ = model.availability.rows();
        w.actions_ = model.availability.cols();
        w.mean_.resize(w.contexts_ * w.actions_, w.actions_);
        for (Index s = 0; s < w.contexts_; ++s)
            for (Index a = 0; a < w.actions_; ++a) w.mean_.row(s * w.actions_ + a) = w.moments(s, a).first;
        return w;
    }

    /// Deterministic weights: row s * |A| + a holds w^. for a sample logged at (s, a).
    static WeightScheme custom(Index contexts, Index actions, MatrixX<Scalar> table) {
        if (table.rows() != contexts * actions || table.cols() != actions)
            throw InvalidArgument("custom weight table has the wrong shape");
        for (Index r = 0; r < table.rows(); ++r)
            if ((table.row(r).array() < Scalar(0)).any() ||
                std::abs(table.row(r).sum() - Scalar(1)) > normalization_tolerance<Scalar>())
                throw WeightSumViolation("custom weight row " + std::to_string(r) +
                                         " is not a probability vector");
        WeightScheme w;
        w.kind_ = Kind::custom;
        w.contexts_ = contexts;
        w.actions_ = actions;
        w.mean_ = std::move(table);
        return w;
    }

    Kind kind() const { return kind_; }
    Index context_count() const { return contexts_; }
    Index action_count() const { return actions_; }

    /// Wbar(target | s, factual)
    Scalar mean_weight(Index s, Index factual, Index target) const {
        return mean_(s * actions_ + factual, target);
    }

    auto mean_row(Index s, Index factual) const { return mean_.row(s * actions_ + factual); }

    /// Cov(w^j, w^k) for a sample logged at (s, factual); covers the factual slot too.
    MatrixX<Scalar> weight_covariance(Index s, Index factual) const {
        if (kind_ == Kind::custom) return MatrixX<Scalar>::Zero(actions_, actions_);
        auto [mean, second] = moments(s, factual);
        return second - mean * mean.transpose();
    }

    /// Per-sample weights given which annotations are present.
    VectorX<Scalar> weights_for(const AugmentedSample<Scalar>& x) const {
        const Index s = x.factual.context, a = x.factual.action;
        VectorX<Scalar> w = VectorX<Scalar>::Zero(actions_);
        if (kind_ == Kind::equal) {
            const Scalar each = Scalar(1) / static_cast<Scalar>(1 + x.annotations.size());
            w(a) = each;
            for (const auto& [act, g] : x.annotations) w(act) = each;
        } else {
            w = mean_row(s, a).transpose();
            for (Index t = 0; t < actions_; ++t)
                if (t != a && w(t) != Scalar(0) && !x.annotation(t))
                    throw InvalidArgument("custom weight placed on a missing annotation");
        }
        return w;
    }

private:
    /// (E[w], E[w w^T]) for a sample logged at (s, a).
    std::pair<VectorX<Scalar>, MatrixX<Scalar>> moments(Index s, Index a) const {
        const Index A = actions_;
        VectorX<Scalar> m = VectorX<Scalar>::Zero(A);
        MatrixX<Scalar> m2 = MatrixX<Scalar>::Zero(A, A);
        if (A == 1) {
            m(0) = 1;
            m2(0, 0) = 1;
            return {m, m2};
        }
        if (mode_ == AvailabilityMode::one_per_sample) {
            const Scalar q = Scalar(1) / static_cast<Scalar>(A - 1);
            m.setConstant(Scalar(0.5) * q);
            m(a) = Scalar(0.5);
            for (Index j = 0; j < A; ++j) {
                m2(a, j) = m2(j, a) = Scalar(0.25) * (j == a ? Scalar(1) : q);
                if (j != a) m2(j, j) = Scalar(0.25) * q;
            }
            return {m, m2};
        }
        // Bernoulli availability over counterfactual slots; the factual slot is always on.
        std::vector<Scalar> p(static_cast<std::size_t>(A));
        for (Index j = 0; j < A; ++j) p[j] = j == a ? Scalar(0) : availability_(s, j);
        const auto inv = [](Index n) { return Scalar(1) / static_cast<Scalar>(n); };
        const auto inv2 = [](Index n) { return Scalar(1) / static_cast<Scalar>(n * n); };
        const auto all = detail::poisson_binomial(p, a);
        m(a) = detail::expect(all, 1, inv);
        m2(a, a) = detail::expect(all, 1, inv2);
        for (Index j = 0; j < A; ++j) {
            if (j == a || p[j] == Scalar(0)) continue;
            const auto rest = detail::poisson_binomial(p, a, j);
            m(j) = p[j] * detail::expect(rest, 2, inv);
            m2(j, j) = m2(a, j) = m2(j, a) = p[j] * detail::expect(rest, 2, inv2);
            for (Index k = j + 1; k < A; ++k) {
                if (k == a || p[k] == Scalar(0)) continue;
                std::vector<Scalar> q = p;
                q[a] = Scalar(0);
                q[k] = Scalar(0);
                const auto rest2 = detail::poisson_binomial(q, j, k);
                m2(j, k) = m2(k, j) = p[j] * p[k] * detail::expect(rest2, 3, inv2);
            }
        }
        return {m, m2};
    }

    Kind kind_ = Kind::equal;
    MatrixX<Scalar> availability_;
    AvailabilityMode mode_ = AvailabilityMode::per_entry;
    Index contexts_ = 0;
    Index actions_ = 0;
    MatrixX<Scalar> mean_;
};

template <typename Scalar>
Scalar mean_weight(const WeightScheme<Scalar>& scheme, Index s, Index factual, Index target) {
    return scheme.mean_weight(s, factual, target);
}

template <typename Scalar>
AugmentedDataset<Scalar> assign_weights(AugmentedDataset<Scalar> aug,
                                        const WeightScheme<Scalar>& scheme) {
    if (scheme.action_count() != aug.action_count)
        throw InvalidArgument("weight scheme shape does not match the dataset");
    for (auto& x : aug.samples) {
        x.weights = scheme.weights_for(x);
        if ((x.weights.array() < Scalar(0)).any() ||
            std::abs(x.weights.sum() - Scalar(1)) > normalization_tolerance<Scalar>())
            throw WeightSumViolation("sample weights do not sum to one");
    }
    return aug;
}

/// pi_b^+(a|s) = sum_{a'} Wbar(a | s, a') pi_b(a'|s).
template <typename Scalar = double>
class AugmentedBehaviorPolicy {
public:
    AugmentedBehaviorPolicy(const Policy<Scalar>& pi_b, const WeightScheme<Scalar>& scheme)
        : probs_(MatrixX<Scalar>::Zero(pi_b.context_count(), pi_b.action_count())) {
        if (scheme.context_count() != pi_b.context_count() ||
            scheme.action_count() != pi_b.action_count())
            throw InvalidArgument("weight scheme shape does not match the policy");
        const Index A = pi_b.action_count();
        for (Index s = 0; s < pi_b.context_count(); ++s) {
            for (Index a = 0; a < A; ++a) {
                Scalar acc = scheme.mean_weight(s, a, a) * pi_b(s, a);
                for (Index other = 0; other < A; ++other)
                    if (other != a) acc += scheme.mean_weight(s, other, a) * pi_b(s, other);
                probs_(s, a) = acc;
            }
            if (std::abs(probs_.row(s).sum() - Scalar(1)) > Scalar(1e-10))
                throw WeightSumViolation("augmented behavior row " + std::to_string(s) +
                                         " does not sum to one");
        }
    }

    Index context_count() const { return probs_.rows(); }
    Index action_count() const { return probs_.cols(); }
    Scalar operator()(Index s, Index a) const { return probs_(s, a); }
    const MatrixX<Scalar>& table() const { return probs_; }

    /// First (s, a) with pi_e > 0 but pi_b^+ == 0.
    std::optional<std::pair<Index, Index>> uncovered(const Policy<Scalar>& pi_e) const {
        return find_uncovered(probs_, pi_e.table());
    }

private:
    MatrixX<Scalar> probs_;
};

template <typename Scalar>
AugmentedBehaviorPolicy<Scalar> augmented_behavior_policy(const Policy<Scalar>& pi_b,
                                                          const WeightScheme<Scalar>& scheme) {
    return AugmentedBehaviorPolicy<Scalar>(pi_b, scheme);
}

/// pi_e(a|s) / pi_b^+(a|s), with 0/0 := 0.
template <typename Scalar>
Scalar augmented_ips_ratio(const Policy<Scalar>& pi_e, const AugmentedBehaviorPolicy<Scalar>& plus,
                           Index s, Index a) {
    const Scalar target = pi_e(s, a);
    if (target == Scalar(0)) return Scalar(0);
    const Scalar behavior = plus(s, a);
    if (!(behavior > Scalar(0)))
        throw CoverageViolation(s, a, "augmented ips ratio undefined at (" + std::to_string(s) +
                                          ", " + std::to_string(a) + ")");
    return target / behavior;
}

}  // namespace cfdr
