#include "cfdr/oracle.hpp"

#include <cmath>
#include <random>
#include <tuple>

#include "cfdr/parallel.hpp"
#include "cfdr/rng.hpp"

namespace cfdr {

double ClosedFormReport::term(const std::string& name) const {
    for (const auto& [n, v] : terms)
        if (n == name) return v;
    throw InvalidArgument("no term named '" + name + "'");
}

void ClosedFormReport::add(std::string name, double value) {
    terms.emplace_back(std::move(name), value);
    total += value;
}

VectorX<double> RewardModelErrorProfile::policy_mean_error(const Policy<double>& pi_e) const {
    return pi_e.table().cwiseProduct(mean_error).rowwise().sum();
}

RewardModelErrorProfile RewardModelErrorProfile::frozen(const EnvSpec<double>& env,
                                                        const MatrixX<double>& model) {
    return {model - env.mean_rewards(),
            MatrixX<double>::Zero(env.context_count(), env.action_count()), {}};
}

RewardModelErrorProfile RewardModelErrorProfile::measured(const EnvSpec<double>& env,
                                                          const std::vector<MatrixX<double>>& fits,
                                                          bool with_covariance) {
    if (fits.size() < 2) throw InvalidArgument("need at least two fitted models");
    const Index S = env.context_count(), A = env.action_count();
    const double n = static_cast<double>(fits.size());
    MatrixX<double> mean = MatrixX<double>::Zero(S, A);
    for (const auto& f : fits) mean += f;
    mean /= n;
    RewardModelErrorProfile p{mean - env.mean_rewards(), MatrixX<double>::Zero(S, A), {}};
    if (with_covariance) p.fit_covariance.assign(static_cast<std::size_t>(S), MatrixX<double>::Zero(A, A));
    for (const auto& f : fits) {
        const MatrixX<double> d = f - mean;
        p.fit_variance += d.cwiseAbs2();
        if (with_covariance)
            for (Index s = 0; s < S; ++s) p.fit_covariance[s] += d.row(s).transpose() * d.row(s);
    }
    p.fit_variance /= n - 1;
    for (auto& c : p.fit_covariance) c /= n - 1;
    return p;
}

namespace {

double context_variance(const EnvSpec<double>& env, const VectorX<double>& per_context) {
    const double mean = env.d0().dot(per_context);
    return env.d0().dot((per_context.array() - mean).square().matrix());
}

/// rho_s(a) over the actions pi_b takes; uncovered target mass throws.
VectorX<double> ratio_row(const EvaluationProblem<double>& problem, Index s) {
    const Index A = problem.env().action_count();
    VectorX<double> rho(A);
    for (Index a = 0; a < A; ++a) rho(a) = ips_ratio(problem, s, a);
    return rho;
}

/// E_s V_{a~pi_b}[rho f] and E_s E_{a~pi_b}[rho^2 sigma^2]
std::pair<double, double> action_terms(const EvaluationProblem<double>& problem,
                                       const MatrixX<double>& f) {
    const auto& env = problem.env();
    double action = 0, noise = 0;
    for (Index s = 0; s < env.context_count(); ++s) {
        const double d = env.d0(s);
        if (d == 0) continue;
        const VectorX<double> rho = ratio_row(problem, s);
        double m1 = 0, m2 = 0, n2 = 0;
        for (Index a = 0; a < env.action_count(); ++a) {
            const double pb = problem.pi_b()(s, a);
            if (pb == 0) continue;
            const double x = rho(a) * f(s, a);
            m1 += pb * x;
            m2 += pb * x * x;
            n2 += pb * rho(a) * rho(a) * env.reward_std(s, a) * env.reward_std(s, a);
        }
        action += d * (m2 - m1 * m1);
        noise += d * n2;
    }
    return {action, noise};
}

}  // namespace

ClosedFormReport is_variance(const EvaluationProblem<double>& problem) {
    const auto& env = problem.env();
    ClosedFormReport r;
    r.add("context_variance", context_variance(env, context_values(env, problem.pi_e())));
    const auto [action, noise] = action_terms(problem, env.mean_rewards());
    r.add("action_variance", action);
    r.add("reward_noise", noise);
    return r;
}

ClosedFormReport dr_variance(const EvaluationProblem<double>& problem, const MatrixX<double>& model) {
    const auto& env = problem.env();
    ClosedFormReport r;
    r.add("context_variance", context_variance(env, context_values(env, problem.pi_e())));
    const auto [action, noise] = action_terms(problem, MatrixX<double>(env.mean_rewards() - model));
    r.add("action_variance", action);
    r.add("reward_noise", noise);
    return r;
}

double expected_inverse_count(Index n, double p) {
    if (n < 1) throw InvalidArgument("count must be positive");
    if (!(p > 0) || p > 1) throw RealizabilityViolation("cell has zero visit probability");
    if (p == 1) return 1.0 / static_cast<double>(n);
    const double lp = std::log(p), lq = std::log1p(-p);
    const double nn = static_cast<double>(n);
    double acc = 0;
    for (Index k = 1; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double log_pmf = std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) +
                               kk * lp + (nn - kk) * lq;
        acc += std::exp(log_pmf) / kk;
    }
    return acc / -std::expm1(nn * lq);
}

ClosedFormReport dm_variance(const EvaluationProblem<double>& problem, Index n_eval,
                             std::optional<Index> n_fit, DmMode mode) {
    const auto& env = problem.env();
    const Index nf = n_fit.value_or(n_eval);
    const double n = static_cast<double>(n_eval);
    double model = 0;
    for (Index s = 0; s < env.context_count(); ++s) {
        const double d = env.d0(s);
        if (d == 0) continue;
        const double scale = mode == DmMode::sample_contexts ? d * (1.0 / n + (1.0 - 1.0 / n) * d) : d * d;
        for (Index a = 0; a < env.action_count(); ++a) {
            const double pe = problem.pi_e()(s, a), sd = env.reward_std(s, a);
            if (pe == 0 || sd == 0) continue;
            const double visit = d * problem.pi_b()(s, a);
            if (!(visit > 0))
                throw RealizabilityViolation("cell (" + std::to_string(s) + ", " + std::to_string(a) +
                                             ") is never visited by the behavior policy");
            model += scale * pe * pe * sd * sd * expected_inverse_count(nf, visit);
        }
    }
    ClosedFormReport r;
    r.add("context_variance", mode == DmMode::sample_contexts
                                  ? context_variance(env, context_values(env, problem.pi_e())) / n
                                  : 0.0);
    r.add("model_variance", model);
    return r;
}

double dm_is_plus_bias(const EvaluationProblem<double>& problem, const WeightScheme<double>& scheme,
                       const AnnotationModel<double>& model) {
    const auto& env = problem.env();
    const AugmentedBehaviorPolicy<double> plus(problem.pi_b(), scheme);
    double bias = 0;
    for (Index s = 0; s < env.context_count(); ++s) {
        const double d = env.d0(s);
        if (d == 0) continue;
        for (Index a = 0; a < env.action_count(); ++a) {
            const double pe = problem.pi_e()(s, a);
            if (pe == 0) continue;
            const double pbp = plus(s, a);
            if (!(pbp > 0))
                throw CoverageViolation(s, a, "augmented behavior policy misses a target action");
            const double own = scheme.mean_weight(s, a, a) * problem.pi_b()(s, a);
            bias += d * pe * (1.0 - own / pbp) * model.bias(s, a);
        }
    }
    return bias;
}

ClosedFormReport dm_plus_is_variance(const EvaluationProblem<double>& problem,
                                     const RewardModelErrorProfile& profile) {
    const auto& env = problem.env();
    const VectorX<double> eps_pi = profile.policy_mean_error(problem.pi_e());
    double noise = 0, bias = 0, fit = 0;
    for (Index s = 0; s < env.context_count(); ++s) {
        const double d = env.d0(s);
        if (d == 0) continue;
        const VectorX<double> rho = ratio_row(problem, s);
        double n2 = 0, b2 = 0, f2 = 0;
        for (Index a = 0; a < env.action_count(); ++a) {
            const double pb = problem.pi_b()(s, a);
            if (pb == 0) continue;
            const double r2 = pb * rho(a) * rho(a);
            n2 += r2 * env.reward_std(s, a) * env.reward_std(s, a);
            b2 += r2 * profile.mean_error(s, a) * profile.mean_error(s, a);
            f2 += r2 * profile.fit_variance(s, a);
        }
        const auto pe = problem.pi_e().row(s);
        if (profile.fit_covariance.empty())
            f2 -= pe.cwiseAbs2().dot(profile.fit_variance.row(s));
        else
            f2 -= pe.dot(profile.fit_covariance[s] * pe.transpose());
        noise += d * n2;
        bias += d * (b2 - eps_pi(s) * eps_pi(s));
        fit += d * f2;
    }
    ClosedFormReport r;
    r.add("context_variance", context_variance(env, context_values(env, problem.pi_e())));
    r.add("reward_noise", noise);
    r.add("model_bias", bias);
    r.add("model_fit_variance", fit);
    return r;
}

ClosedFormReport dm_is_plus_variance_perfect(const EvaluationProblem<double>& problem,
                                             const WeightScheme<double>& scheme,
                                             const MatrixX<double>& model) {
    const auto& env = problem.env();
    const Index S = env.context_count(), A = env.action_count();
    const AugmentedBehaviorPolicy<double> plus(problem.pi_b(), scheme);
    VectorX<double> cond_mean(S);
    double action = 0, noise = 0, weights = 0;
    for (Index s = 0; s < S; ++s) {
        VectorX<double> rho(A), e(A), var(A);
        for (Index a = 0; a < A; ++a) {
            rho(a) = augmented_ips_ratio(problem.pi_e(), plus, s, a);
            e(a) = env.mean_reward(s, a) - model(s, a);
            var(a) = env.reward_std(s, a) * env.reward_std(s, a);
        }
        const VectorX<double> re = rho.cwiseProduct(e);
        double m1 = 0, m2 = 0, n2 = 0, w2 = 0;
        for (Index ai = 0; ai < A; ++ai) {
            const double pb = problem.pi_b()(s, ai);
            if (pb == 0) continue;
            const VectorX<double> wbar = scheme.mean_row(s, ai).transpose();
            const MatrixX<double> cov = scheme.weight_covariance(s, ai);
            const double m = wbar.dot(re);
            m1 += pb * m;
            m2 += pb * m * m;
            for (Index a = 0; a < A; ++a)
                n2 += pb * rho(a) * rho(a) * var(a) * (wbar(a) * wbar(a) + cov(a, a));
            w2 += pb * re.dot(cov * re);
        }
        cond_mean(s) = problem.pi_e().row(s).dot(model.row(s)) + m1;
        const double d = env.d0(s);
        action += d * (m2 - m1 * m1);
        noise += d * n2;
        weights += d * w2;
    }
    ClosedFormReport r;
    r.add("context_variance", context_variance(env, cond_mean));
    r.add("action_variance", action);
    r.add("reward_noise", noise);
    r.add("weight_variance", weights);
    return r;
}

ClosedFormReport is_plus_variance_perfect(const EvaluationProblem<double>& problem,
                                          const WeightScheme<double>& scheme) {
    const auto& env = problem.env();
    return dm_is_plus_variance_perfect(problem, scheme,
                                       MatrixX<double>::Zero(env.context_count(), env.action_count()));
}

EmpiricalMoments summarize(const std::vector<double>& values, std::uint64_t seed, Index bootstrap) {
    const Index n = static_cast<Index>(values.size());
    if (n < 2) throw InvalidArgument("need at least two trials");
    const auto moments = [&](auto&& at) {
        CompensatedSum s1;
        for (Index i = 0; i < n; ++i) s1.add(at(i));
        const double mean = s1.value() / static_cast<double>(n);
        CompensatedSum s2;
        for (Index i = 0; i < n; ++i) {
            const double d = at(i) - mean;
            s2.add(d * d);
        }
        return std::pair{mean, s2.value() / static_cast<double>(n - 1)};
    };
    EmpiricalMoments out;
    out.trials = n;
    std::tie(out.mean, out.variance) = moments([&](Index i) { return values[i]; });
    if (bootstrap > 1) {
        Rng rng = make_rng(derive_seed(seed, "bootstrap"));
        std::uniform_int_distribution<Index> pick(0, n - 1);
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::vector<double> means, vars;
        for (Index b = 0; b < bootstrap; ++b) {
            for (auto& i : idx) i = pick(rng);
            const auto [m, v] = moments([&](Index i) { return values[idx[i]]; });
            means.push_back(m);
            vars.push_back(v);
        }
        const auto sd = [](const std::vector<double>& x) {
            double m = 0, v = 0;
            for (double y : x) m += y;
            m /= static_cast<double>(x.size());
            for (double y : x) v += (y - m) * (y - m);
            return std::sqrt(v / static_cast<double>(x.size() - 1));
        };
        out.se_mean = sd(means);
        out.se_variance = sd(vars);
    }
    return out;
}

EmpiricalMoments empirical_moments(const std::function<double(std::uint64_t)>& trial, Index trials,
                                   std::uint64_t seed, Index bootstrap, unsigned workers) {
    if (trials < 2) throw InvalidArgument("need at least two trials");
    std::vector<double> values(static_cast<std::size_t>(trials));
    parallel_for(values.size(), workers, [&](std::size_t i) {
        values[i] = trial(derive_seed(seed, "trial", {static_cast<std::uint64_t>(i)}));
    });
    return summarize(values, seed, bootstrap);
}

}  // namespace cfdr
