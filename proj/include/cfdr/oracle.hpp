#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfdr/annotations.hpp"
#include "cfdr/core.hpp"
#include "cfdr/estimators.hpp"
#include "cfdr/reward_model.hpp"

namespace cfdr {

/// Named terms of a closed-form decomposition and their sum.
struct ClosedFormReport {
    std::vector<std::pair<std::string, double>> terms;
    double total = 0;

    double term(const std::string& name) const;
    void add(std::string name, double value);
};

/// Moments of a random reward model around the truth.
struct RewardModelErrorProfile {
    MatrixX<double> mean_error;    ///< E[R-hat^+(s,a)] - Rbar(s,a)
    MatrixX<double> fit_variance;  ///< V[R-hat^+(s,a)]
    /// Optional per-context |A| x |A| covariance of R-hat^+(s, .); diagonal when absent.
    std::vector<MatrixX<double>> fit_covariance;

    /// sum_a pi_e(a|s) mean_error(s, a)
    VectorX<double> policy_mean_error(const Policy<double>& pi_e) const;

    /// Profile of a frozen model (zero fit variance).
    static RewardModelErrorProfile frozen(const EnvSpec<double>& env, const MatrixX<double>& model);
    /// Moments measured over a sample of fitted prediction tables.
    static RewardModelErrorProfile measured(const EnvSpec<double>& env,
                                            const std::vector<MatrixX<double>>& fits,
                                            bool with_covariance = true);
};

/// N * V[IS]
ClosedFormReport is_variance(const EvaluationProblem<double>& problem);

/// N * V[DR] with R-hat frozen.
ClosedFormReport dr_variance(const EvaluationProblem<double>& problem, const MatrixX<double>& model);

/// E[1 / K | K > 0] for K ~ Binomial(n, p).
double expected_inverse_count(Index n, double p);

/// V[DM] (not scaled by N) for a tabular-mean R-hat fitted on an independent dataset of
/// size n_fit, evaluated over n_eval sampled contexts (or exactly over d0).
ClosedFormReport dm_variance(const EvaluationProblem<double>& problem, Index n_eval,
                             std::optional<Index> n_fit = std::nullopt,
                             DmMode mode = DmMode::sample_contexts);

/// E[DM-IS^+] - v(pi_e): E_{s~d0, a~pi_e}[(1 - Wbar(a|s,a) pi_b(a|s) / pi_b^+(a|s)) eps_G(s,a)]
double dm_is_plus_bias(const EvaluationProblem<double>& problem, const WeightScheme<double>& scheme,
                       const AnnotationModel<double>& model);

/// N * V[DM^+-IS] for a random R-hat^+ fitted on data independent of the evaluation set.
ClosedFormReport dm_plus_is_variance(const EvaluationProblem<double>& problem,
                                     const RewardModelErrorProfile& profile);

/// N * V[DM-IS^+] under perfect annotations with R-hat frozen. A zero model gives IS^+.
ClosedFormReport dm_is_plus_variance_perfect(const EvaluationProblem<double>& problem,
                                             const WeightScheme<double>& scheme,
                                             const MatrixX<double>& model);

ClosedFormReport is_plus_variance_perfect(const EvaluationProblem<double>& problem,
                                          const WeightScheme<double>& scheme);

struct EmpiricalMoments {
    double mean = 0;
    double variance = 0;  ///< unbiased sample variance over trials
    double se_mean = 0;   ///< bootstrap
    double se_variance = 0;
    Index trials = 0;
};

/// Repeats trial(child_seed) and summarizes; child seeds depend only on (seed, index).
EmpiricalMoments empirical_moments(const std::function<double(std::uint64_t)>& trial, Index trials,
                                   std::uint64_t seed, Index bootstrap = 200, unsigned workers = 1);

/// Summary of a fixed sample of values (bootstrap with the given seed).
EmpiricalMoments summarize(const std::vector<double>& values, std::uint64_t seed, Index bootstrap = 200);

}  // namespace cfdr
