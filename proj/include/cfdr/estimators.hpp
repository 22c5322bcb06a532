#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "cfdr/annotations.hpp"
#include "cfdr/core.hpp"
#include "cfdr/reward_model.hpp"

namespace cfdr {

enum class EstimatorId { IS, DM, DMplus, ISplus, DM_IS, DMplus_IS, DM_ISplus, DMplus_ISplus, NaiveDR };

inline constexpr std::array<EstimatorId, 9> all_estimators{
    EstimatorId::IS,        EstimatorId::DM,        EstimatorId::DMplus,
    EstimatorId::ISplus,    EstimatorId::DM_IS,     EstimatorId::DMplus_IS,
    EstimatorId::DM_ISplus, EstimatorId::DMplus_ISplus, EstimatorId::NaiveDR};

constexpr std::string_view to_string(EstimatorId id) {
    switch (id) {
        case EstimatorId::IS: return "IS";
        case EstimatorId::DM: return "DM";
        case EstimatorId::DMplus: return "DM+";
        case EstimatorId::ISplus: return "IS+";
        case EstimatorId::DM_IS: return "DM-IS";
        case EstimatorId::DMplus_IS: return "DM+-IS";
        case EstimatorId::DM_ISplus: return "DM-IS+";
        case EstimatorId::DMplus_ISplus: return "DM+-IS+";
        case EstimatorId::NaiveDR: return "NaiveDR";
    }
    return "?";
}

/// Accepts the display names above and the enum spellings (DMplus_IS, ...).
inline std::optional<EstimatorId> estimator_from_string(std::string_view name) {
    static constexpr std::array<std::string_view, 9> alt{
        "IS", "DM", "DMplus", "ISplus", "DM_IS", "DMplus_IS", "DM_ISplus", "DMplus_ISplus", "NaiveDR"};
    for (std::size_t i = 0; i < all_estimators.size(); ++i)
        if (name == to_string(all_estimators[i]) || name == alt[i]) return all_estimators[i];
    return std::nullopt;
}

/// Whether the estimator consumes annotations (augmented data or R-hat^+).
constexpr bool uses_annotations(EstimatorId id) {
    return id != EstimatorId::IS && id != EstimatorId::DM && id != EstimatorId::DM_IS;
}

template <typename Scalar = double>
struct Estimate {
    Scalar value = 0;
    Index n_used = 0;
    Scalar max_ratio = 0;  ///< largest importance ratio touched
};

enum class DmMode { exact_d0, sample_contexts };

namespace detail {

template <typename Scalar>
void require_augmented_coverage(const Policy<Scalar>& pi_e,
                                const AugmentedBehaviorPolicy<Scalar>& plus, CoverageMode mode) {
    if (mode == CoverageMode::permissive) return;
    if (auto miss = plus.uncovered(pi_e))
        throw CoverageViolation(miss->first, miss->second,
                                "augmented behavior policy does not cover the target policy at (" +
                                    std::to_string(miss->first) + ", " +
                                    std::to_string(miss->second) + ")");
}

template <typename Scalar>
Estimate<Scalar> dm_impl(const RewardModel<Scalar>& model, const EnvSpec<Scalar>& env,
                         const Policy<Scalar>& pi_e, DmMode mode, const Dataset<Scalar>* data) {
    if (mode == DmMode::exact_d0) {
        const VectorX<Scalar> per_context =
            pi_e.table().cwiseProduct(model.predictions()).rowwise().sum();
        return {env.d0().dot(per_context), env.context_count(), Scalar(0)};
    }
    if (!data || data->size() == 0)
        throw InvalidArgument("sample-context DM needs a nonempty dataset");
    Scalar total = 0;
    for (const auto& x : data->samples) total += predict_policy(model, x.context, pi_e);
    return {total / static_cast<Scalar>(data->size()), data->size(), Scalar(0)};
}

template <typename Scalar>
Estimate<Scalar> dr_impl(const Dataset<Scalar>& data, const RewardModel<Scalar>* model,
                         const EvaluationProblem<Scalar>& problem) {
    if (data.size() == 0) throw InvalidArgument("estimator needs a nonempty dataset");
    problem.require_coverage();
    Scalar total = 0, max_ratio = 0;
    for (const auto& x : data.samples) {
        const Scalar rho = ips_ratio(problem, x.context, x.action);
        max_ratio = std::max(max_ratio, rho);
        if (model)
            total += predict_policy(*model, x.context, problem.pi_e()) +
                     rho * (x.reward - model->predict(x.context, x.action));
        else
            total += rho * x.reward;
    }
    return {total / static_cast<Scalar>(data.size()), data.size(), max_ratio};
}

template <typename Scalar>
Estimate<Scalar> augmented_impl(const AugmentedDataset<Scalar>& data,
                                const RewardModel<Scalar>* model, const Policy<Scalar>& pi_e,
                                const AugmentedBehaviorPolicy<Scalar>& plus, CoverageMode mode) {
    if (data.size() == 0) throw InvalidArgument("estimator needs a nonempty dataset");
    require_augmented_coverage(pi_e, plus, mode);
    const Index A = data.action_count;
    Scalar total = 0, max_ratio = 0;
    for (const auto& x : data.samples) {
        const Index s = x.factual.context;
        Scalar correction = 0;
        for (Index a = 0; a < A; ++a) {
            const Scalar w = x.weights(a);
            if (w == Scalar(0)) continue;
            const Scalar rho = augmented_ips_ratio(pi_e, plus, s, a);
            max_ratio = std::max(max_ratio, rho);
            const Scalar c = x.combined(a);
            correction += w * rho * (model ? c - model->predict(s, a) : c);
        }
        total += model ? predict_policy(*model, s, pi_e) + correction : correction;
    }
    return {total / static_cast<Scalar>(data.size()), data.size(), max_ratio};
}

}  // namespace detail

/// (1/N) sum rho r
template <typename Scalar>
Estimate<Scalar> estimate_is(const Dataset<Scalar>& data, const EvaluationProblem<Scalar>& problem) {
    return detail::dr_impl<Scalar>(data, nullptr, problem);
}

template <typename Scalar>
Estimate<Scalar> estimate_dm(const RewardModel<Scalar>& model, const EnvSpec<Scalar>& env,
                             const Policy<Scalar>& pi_e, DmMode mode = DmMode::exact_d0,
                             const Dataset<Scalar>* data = nullptr) {
    return detail::dm_impl(model, env, pi_e, mode, data);
}

template <typename Scalar>
Estimate<Scalar> estimate_dm_plus(const RewardModel<Scalar>& model_plus, const EnvSpec<Scalar>& env,
                                  const Policy<Scalar>& pi_e, DmMode mode = DmMode::exact_d0,
                                  const Dataset<Scalar>* data = nullptr) {
    return detail::dm_impl(model_plus, env, pi_e, mode, data);
}

/// (1/N) sum_i sum_a w_i^a rho^+(a) c_i^a
template <typename Scalar>
Estimate<Scalar> estimate_is_plus(const AugmentedDataset<Scalar>& data, const Policy<Scalar>& pi_e,
                                  const AugmentedBehaviorPolicy<Scalar>& plus,
                                  CoverageMode mode = CoverageMode::strict) {
    return detail::augmented_impl<Scalar>(data, nullptr, pi_e, plus, mode);
}

/// (1/N) sum R-hat(s, pi_e) + rho (r - R-hat(s, a))
template <typename Scalar>
Estimate<Scalar> estimate_dr(const Dataset<Scalar>& data, const RewardModel<Scalar>& model,
                             const EvaluationProblem<Scalar>& problem) {
    return detail::dr_impl<Scalar>(data, &model, problem);
}

/// DR with the annotation-augmented reward model and the factual ratio.
template <typename Scalar>
Estimate<Scalar> estimate_dm_plus_is(const Dataset<Scalar>& data,
                                     const RewardModel<Scalar>& model_plus,
                                     const EvaluationProblem<Scalar>& problem) {
    return detail::dr_impl<Scalar>(data, &model_plus, problem);
}

/// (1/N) sum_i R-hat(s_i, pi_e) + sum_a w_i^a rho^+(a) (c_i^a - R-hat(s_i, a))
template <typename Scalar>
Estimate<Scalar> estimate_dm_is_plus(const AugmentedDataset<Scalar>& data,
                                     const RewardModel<Scalar>& model, const Policy<Scalar>& pi_e,
                                     const AugmentedBehaviorPolicy<Scalar>& plus,
                                     CoverageMode mode = CoverageMode::strict) {
    return detail::augmented_impl<Scalar>(data, &model, pi_e, plus, mode);
}

template <typename Scalar>
Estimate<Scalar> estimate_dm_plus_is_plus(const AugmentedDataset<Scalar>& data,
                                          const RewardModel<Scalar>& model_plus,
                                          const Policy<Scalar>& pi_e,
                                          const AugmentedBehaviorPolicy<Scalar>& plus,
                                          CoverageMode mode = CoverageMode::strict) {
    return detail::augmented_impl<Scalar>(data, &model_plus, pi_e, plus, mode);
}

/// Standard DR over the N + M rows obtained by treating every annotation as a logged sample.
template <typename Scalar>
Estimate<Scalar> estimate_naive_dr(const AugmentedDataset<Scalar>& data,
                                   const RewardModel<Scalar>& model_plus,
                                   const EvaluationProblem<Scalar>& problem) {
    if (data.size() == 0) throw InvalidArgument("estimator needs a nonempty dataset");
    problem.require_coverage();
    Scalar total = 0, max_ratio = 0;
    Index rows = 0;
    const auto row = [&](Index s, Index a, Scalar c) {
        const Scalar rho = ips_ratio(problem, s, a);
        max_ratio = std::max(max_ratio, rho);
        total += predict_policy(model_plus, s, problem.pi_e()) + rho * (c - model_plus.predict(s, a));
        ++rows;
    };
    for (const auto& x : data.samples) {
        row(x.factual.context, x.factual.action, x.factual.reward);
        for (const auto& [a, g] : x.annotations) row(x.factual.context, a, g);
    }
    return {total / static_cast<Scalar>(rows), data.size(), max_ratio};
}

}  // namespace cfdr
