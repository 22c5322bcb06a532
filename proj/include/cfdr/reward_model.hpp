#pragma once

#include <optional>
#include <string>
#include <utility>

#include "cfdr/annotations.hpp"
#include "cfdr/core.hpp"

namespace cfdr {

template <typename Scalar = double>
struct FitReport {
    CountMatrix factual_counts;     ///< N_{s,a}
    CountMatrix annotation_counts;  ///< M_{s,a}; zero for factual-only fits
    Scalar residual_sum_squares = 0;
    std::optional<bool> well_specified;
};

enum class RewardModelKind { tabular_mean, tabular_weighted_mean, linear };

/// Fitted R-hat or R-hat^+. Predictions are materialized for every (s, a).
template <typename Scalar = double>
class RewardModel {
public:
    RewardModel(RewardModelKind kind, MatrixX<Scalar> predictions, Scalar fallback = 0)
        : kind_(kind), table_(std::move(predictions)), fallback_(fallback) {
        if (!table_.allFinite()) throw InvalidArgument("reward model predictions must be finite");
    }

    /// Frozen model that predicts the given table (e.g. the true means, or zero).
    static RewardModel fixed(MatrixX<Scalar> predictions) {
        return RewardModel(RewardModelKind::tabular_mean, std::move(predictions));
    }

    static RewardModel constant(Index contexts, Index actions, Scalar c) {
        return fixed(MatrixX<Scalar>::Constant(contexts, actions, c));
    }

    RewardModelKind kind() const { return kind_; }
    Scalar predict(Index s, Index a) const { return table_(s, a); }
    Scalar operator()(Index s, Index a) const { return table_(s, a); }
    const MatrixX<Scalar>& predictions() const { return table_; }
    Scalar fallback() const { return fallback_; }

    const std::optional<VectorX<Scalar>>& coefficients() const { return coef_; }
    const std::string& feature_map_name() const { return feature_map_; }
    const FitReport<Scalar>& report() const { return report_; }
    FitReport<Scalar>& report() { return report_; }

    RewardModel& set_linear(VectorX<Scalar> coef, std::string map_name) {
        coef_ = std::move(coef);
        feature_map_ = std::move(map_name);
        return *this;
    }

private:
    RewardModelKind kind_;
    MatrixX<Scalar> table_;
    Scalar fallback_;
    std::optional<VectorX<Scalar>> coef_;
    std::string feature_map_;
    FitReport<Scalar> report_;
};

namespace detail {

/// Visits (s, a, target, weight): factual rewards first, then annotations in action order.
template <typename Scalar, typename F>
void for_each_target(const Dataset<Scalar>& data, F f) {
    for (const auto& x : data.samples) f(x.context, x.action, x.reward, Scalar(1));
}

template <typename Scalar, typename F>
void for_each_target(const AugmentedDataset<Scalar>& data, F f) {
    for (const auto& x : data.samples) {
        const Index s = x.factual.context;
        f(s, x.factual.action, x.factual.reward, x.weights(x.factual.action));
        for (const auto& [a, g] : x.annotations) f(s, a, g, x.weights(a));
    }
}

template <typename Scalar>
CountMatrix annotation_counts_of(const Dataset<Scalar>& d) {
    return CountMatrix::Zero(d.context_count, d.action_count);
}

template <typename Scalar>
CountMatrix annotation_counts_of(const AugmentedDataset<Scalar>& d) {
    return d.annotation_counts();
}

template <typename Scalar>
CountMatrix factual_counts_of(const Dataset<Scalar>& d) {
    return d.counts();
}

template <typename Scalar>
CountMatrix factual_counts_of(const AugmentedDataset<Scalar>& d) {
    CountMatrix n = CountMatrix::Zero(d.context_count, d.action_count);
    for (const auto& x : d.samples) ++n(x.factual.context, x.factual.action);
    return n;
}

template <typename Scalar, typename Data>
FitReport<Scalar> base_report(const Data& data) {
    return {factual_counts_of(data), annotation_counts_of(data), Scalar(0), std::nullopt};
}

template <typename Scalar>
Index total_count(const FitReport<Scalar>& r) {
    return r.factual_counts.sum() + r.annotation_counts.sum();
}

template <typename Scalar, typename Data>
RewardModel<Scalar> fit_tabular(const Data& data, bool weighted) {
    const Index S = data.context_count, A = data.action_count;
    if (data.size() == 0) throw InvalidArgument("cannot fit a reward model on an empty dataset");
    MatrixX<Scalar> sum = MatrixX<Scalar>::Zero(S, A);
    MatrixX<Scalar> mass = MatrixX<Scalar>::Zero(S, A);
    MatrixX<Scalar> unit = MatrixX<Scalar>::Zero(S, A);
    Scalar global = 0;
    Index rows = 0;
    for_each_target(data, [&](Index s, Index a, Scalar c, Scalar w) {
        global += c;
        ++rows;
        if (!weighted) w = Scalar(1);
        if (w == Scalar(0)) return;
        if (unit(s, a) == Scalar(0)) unit(s, a) = w;
        // Relative weights keep equal-weight fits bit-identical to the plain mean.
        const Scalar rel = w / unit(s, a);
        sum(s, a) += rel * c;
        mass(s, a) += rel;
    });
    const Scalar fallback = global / static_cast<Scalar>(rows);
    MatrixX<Scalar> pred(S, A);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            pred(s, a) = mass(s, a) > Scalar(0) ? sum(s, a) / mass(s, a) : fallback;

    RewardModel<Scalar> model(
        weighted ? RewardModelKind::tabular_weighted_mean : RewardModelKind::tabular_mean,
        std::move(pred), fallback);
    auto report = base_report<Scalar>(data);
    for_each_target(data, [&](Index s, Index a, Scalar c, Scalar) {
        const Scalar e = c - model(s, a);
        report.residual_sum_squares += e * e;
    });
    model.report() = std::move(report);
    return model;
}

}  // namespace detail

/// Per-pair arithmetic mean of rewards (and annotations, pooled equally). Unseen pairs
/// predict the global mean of all training targets.
template <typename Scalar>
RewardModel<Scalar> fit_tabular_mean(const Dataset<Scalar>& data) {
    return detail::fit_tabular<Scalar>(data, false);
}

template <typename Scalar>
RewardModel<Scalar> fit_tabular_mean(const AugmentedDataset<Scalar>& data) {
    return detail::fit_tabular<Scalar>(data, false);
}

/// Per-pair mean of c weighted by the sample weights; cells with zero total weight are unseen.
template <typename Scalar>
RewardModel<Scalar> fit_tabular_weighted_mean(const AugmentedDataset<Scalar>& data) {
    return detail::fit_tabular<Scalar>(data, true);
}

/// Ordinary least squares on rows (phi(s, a), c); annotations enter unweighted.
/// Rank-deficient designs get the minimum-norm solution.
template <typename Scalar, typename Data>
RewardModel<Scalar> fit_linear(const Data& data, const FeatureMap<Scalar>& phi) {
    if (data.size() == 0) throw InvalidArgument("cannot fit a reward model on an empty dataset");
    if (phi.action_count != data.action_count ||
        phi.table.rows() != data.context_count * data.action_count)
        throw InvalidArgument("feature map '" + phi.name + "' does not match the dataset");
    const Index d = phi.dim();
    Index rows = 0;
    detail::for_each_target(data, [&](Index, Index, Scalar, Scalar) { ++rows; });
    MatrixX<Scalar> X(rows, d);
    VectorX<Scalar> y(rows);
    Index r = 0;
    detail::for_each_target(data, [&](Index s, Index a, Scalar c, Scalar) {
        X.row(r) = phi(s, a);
        y(r++) = c;
    });
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Dense gram = Dense::Zero(d, d);
    gram.template selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    const VectorX<Scalar> rhs = X.transpose() * y;
    Eigen::CompleteOrthogonalDecomposition<Dense> cod(gram);
    VectorX<Scalar> theta = cod.solve(rhs);
    // One refinement step against the normal equations.
    theta += cod.solve(VectorX<Scalar>(rhs - gram * theta));

    MatrixX<Scalar> pred(data.context_count, data.action_count);
    Eigen::Map<VectorX<Scalar>>(pred.data(), pred.size()) = phi.table * theta;
    RewardModel<Scalar> model(RewardModelKind::linear, std::move(pred), y.mean());
    model.set_linear(std::move(theta), phi.name);
    auto report = detail::base_report<Scalar>(data);
    report.residual_sum_squares = (y - X * *model.coefficients()).squaredNorm();
    model.report() = std::move(report);
    return model;
}

/// R-hat(s, pi) = sum_a pi(a|s) R-hat(s, a)
template <typename Scalar>
Scalar predict_policy(const RewardModel<Scalar>& model, Index s, const Policy<Scalar>& pi) {
    return pi.row(s).dot(model.predictions().row(s));
}

}  // namespace cfdr
