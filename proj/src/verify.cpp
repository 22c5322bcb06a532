#include "cfdr/verify.hpp"

#include <cmath>
#include <cstdio>

#include "cfdr/environments.hpp"
#include "cfdr/estimators.hpp"
#include "cfdr/oracle.hpp"
#include "cfdr/parallel.hpp"

namespace cfdr {

namespace {

VerifyLine compare(std::string name, double closed, double empirical, double se) {
    return {std::move(name), closed, empirical, se, std::abs(closed - empirical) <= 4.0 * se};
}

}  // namespace

std::vector<VerifyLine> verify_theorems(std::uint64_t seed, Index trials, unsigned workers) {
    const Index n = 100;
    const auto env = build_two_context();
    VectorX<double> pb(2), pe(2);
    pb << 0.5, 0.5;
    pe << 0.9, 0.1;
    const EvaluationProblem<double> problem(env, Policy<double>::constant(2, pb),
                                            Policy<double>::constant(2, pe));
    const double truth = policy_value_exact(env, problem.pi_e());
    const double scale = static_cast<double>(n);
    std::vector<VerifyLine> out;

    const auto moments = [&](const char* tag, auto&& trial) {
        return empirical_moments(trial, trials, derive_seed(seed, tag), 200, workers);
    };

    {
        const auto m = moments("is", [&](std::uint64_t s) {
            return estimate_is(sample_dataset(problem, n, s), problem).value;
        });
        out.push_back(compare("is_variance", is_variance(problem).total, scale * m.variance,
                              scale * m.se_variance));
    }

    MatrixX<double> offset(2, 2);
    offset << 0.3, -0.2, 0.1, 0.4;
    const auto frozen = RewardModel<double>::fixed(env.mean_rewards() + offset);
    {
        const auto m = moments("dr", [&](std::uint64_t s) {
            return estimate_dr(sample_dataset(problem, n, s), frozen, problem).value;
        });
        out.push_back(compare("dr_variance", dr_variance(problem, frozen.predictions()).total,
                              scale * m.variance, scale * m.se_variance));
        const auto profile = RewardModelErrorProfile::frozen(env, frozen.predictions());
        out.push_back(compare("dm_plus_is_variance", dm_plus_is_variance(problem, profile).total,
                              scale * m.variance, scale * m.se_variance));
    }
    {
        const auto m = moments("dm", [&](std::uint64_t s) {
            const auto eval = sample_dataset(problem, n, derive_seed(s, "eval"));
            const auto model = fit_tabular_mean(sample_dataset(problem, n, derive_seed(s, "model")));
            return estimate_dm(model, env, problem.pi_e(), DmMode::sample_contexts, &eval).value;
        });
        out.push_back(compare("dm_variance", dm_variance(problem, n).total, m.variance, m.se_variance));
    }

    const double eps = 0.5;
    const auto biased = AnnotationModel<double>::uniform(2, 2, eps, 0, 1);
    const auto full = WeightScheme<double>::equal(biased);
    const AugmentedBehaviorPolicy<double> plus_full(problem.pi_b(), full);
    {
        const auto m = moments("bias", [&](std::uint64_t s) {
            const auto d = sample_dataset(problem, n, derive_seed(s, "eval"));
            const auto model = fit_tabular_mean(sample_dataset(problem, n, derive_seed(s, "model")));
            const auto aug = assign_weights(annotate(d, env, biased, derive_seed(s, "annotate")), full);
            return estimate_dm_is_plus(aug, model, problem.pi_e(), plus_full).value - truth;
        });
        out.push_back(compare("dm_is_plus_bias", dm_is_plus_bias(problem, full, biased), m.mean, m.se_mean));
    }

    const auto partial_model = AnnotationModel<double>::perfect(2, 2, 0.5);
    const auto partial = WeightScheme<double>::equal(partial_model);
    const AugmentedBehaviorPolicy<double> plus_partial(problem.pi_b(), partial);
    {
        const auto m = moments("dm_is_plus", [&](std::uint64_t s) {
            const auto d = sample_dataset(problem, n, derive_seed(s, "eval"));
            const auto aug =
                assign_weights(annotate(d, env, partial_model, derive_seed(s, "annotate")), partial);
            return estimate_dm_is_plus(aug, frozen, problem.pi_e(), plus_partial).value;
        });
        out.push_back(compare("dm_is_plus_variance",
                              dm_is_plus_variance_perfect(problem, partial, frozen.predictions()).total,
                              scale * m.variance, scale * m.se_variance));
    }
    {
        const auto perfect = AnnotationModel<double>::perfect(2, 2, 1.0);
        const auto eq = WeightScheme<double>::equal(perfect);
        const AugmentedBehaviorPolicy<double> plus(problem.pi_b(), eq);
        std::vector<double> gaps(static_cast<std::size_t>(std::min<Index>(trials, 1000)));
        parallel_for(gaps.size(), workers, [&](std::size_t i) {
            const auto s = derive_seed(seed, "equivalence", {i});
            const auto d = sample_dataset(problem, n, derive_seed(s, "eval"));
            const auto model = fit_tabular_mean(sample_dataset(problem, n, derive_seed(s, "model")));
            const auto aug = assign_weights(annotate(d, env, perfect, derive_seed(s, "annotate")), eq);
            const double is_plus = estimate_is_plus(aug, problem.pi_e(), plus).value;
            gaps[i] = std::max(std::abs(is_plus - estimate_dm_is_plus(aug, model, problem.pi_e(), plus).value),
                               std::abs(is_plus - estimate_dm_plus_is_plus(aug, model, problem.pi_e(), plus).value));
        });
        const double worst = *std::max_element(gaps.begin(), gaps.end());
        out.push_back({"equal_weights_equivalence", 0.0, worst, 0.0, worst <= 1e-10});
    }
    return out;
}

std::string format_verify_line(const VerifyLine& l) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-4s %-26s closed=%-14.8g empirical=%-14.8g se=%.3g",
                  l.passed ? "PASS" : "FAIL", l.name.c_str(), l.closed, l.empirical, l.se);
    return buf;
}

}  // namespace cfdr
