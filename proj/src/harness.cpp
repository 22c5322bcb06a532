#include "cfdr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cfdr/parallel.hpp"
#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

bool needs_augmented_eval(EstimatorId id) {
    return id == EstimatorId::ISplus || id == EstimatorId::DM_ISplus ||
           id == EstimatorId::DMplus_ISplus || id == EstimatorId::NaiveDR;
}

bool needs_model_plus(EstimatorId id) {
    return id == EstimatorId::DMplus || id == EstimatorId::DMplus_IS ||
           id == EstimatorId::DMplus_ISplus || id == EstimatorId::NaiveDR;
}

std::uint64_t u64(Index i) { return static_cast<std::uint64_t>(i); }

}  // namespace

ResolvedExperiment resolve(const ExperimentConfig& config) {
    config.validate();
    ResolvedExperiment exp{config, make_environment(config.env, config.env_configs), {}, {}, 0, 1,
                           AvailabilityMode::per_entry, CoverageMode::strict};
    const auto& envr = exp.environment;
    if (config.pairs.empty()) {
        exp.pairs.resize(static_cast<std::size_t>(envr.suite.size()));
        std::iota(exp.pairs.begin(), exp.pairs.end(), Index{0});
    } else {
        for (Index p : config.pairs)
            if (p < 0 || p >= envr.suite.size())
                throw ConfigError("policy pair index " + std::to_string(p) + " is out of range");
        exp.pairs = config.pairs;
    }
    const double unit = config.grid_units == GridUnits::scaled ? envr.env.mean_reward_std() : 1.0;
    for (double e : config.eps_grid)
        for (double d : config.delta_grid) exp.cells.push_back({e * unit, d * unit * unit});
    exp.n = config.n.value_or(envr.default_n);
    exp.availability = config.availability.value_or(envr.availability);
    exp.availability_mode = config.availability_mode.value_or(envr.availability_mode);
    exp.coverage = config.coverage.value_or(envr.coverage);
    return exp;
}

TrialContext::TrialContext(const ResolvedExperiment& exp, Index pair, Index trial)
    : exp_(&exp),
      pair_(pair),
      trial_(trial),
      problem_(exp.environment.env, exp.environment.suite.pairs.at(pair).pi_b,
               exp.environment.suite.pairs.at(pair).pi_e, exp.coverage),
      scheme_(WeightScheme<double>::equal(AnnotationModel<double>::uniform(
          exp.environment.env.context_count(), exp.environment.env.action_count(), 0, 0,
          exp.availability, exp.availability_mode))),
      plus_(problem_.pi_b(), scheme_),
      eval_(sample_dataset(problem_, exp.n,
                           derive_seed(exp.config.seed, "eval-data", {u64(pair), u64(trial)}))),
      model_data_(sample_dataset(problem_, exp.n,
                                 derive_seed(exp.config.seed, "model-data", {u64(pair), u64(trial)}))),
      observe_u_(),
      observe_context_(),
      model_([&] {
          Rng rng = make_rng(derive_seed(exp.config.seed, "observe", {u64(pair), u64(trial)}));
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          std::uniform_int_distribution<Index> pick(0, exp.environment.env.context_count() - 1);
          for (Index i = 0; i < model_data_.size(); ++i) {
              observe_u_.push_back(unit(rng));
              observe_context_.push_back(pick(rng));
          }
          return fit(exp.model_spec(), nullptr);
      }()) {}

Dataset<double> TrialContext::observed(const Dataset<double>& d, double noise) const {
    if (noise <= 0) return d;
    Dataset<double> out = d;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        if (observe_u_[i] < noise) out.samples[i].context = observe_context_[i];
    return out;
}

AugmentedDataset<double> TrialContext::observed(const AugmentedDataset<double>& d, double noise) const {
    if (noise <= 0) return d;
    AugmentedDataset<double> out = d;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        if (observe_u_[i] < noise) out.samples[i].factual.context = observe_context_[i];
    return out;
}

RewardModel<double> TrialContext::fit(const RewardModelSpec& spec,
                                      const AugmentedDataset<double>* aug) const {
    const auto& env = exp_->environment.env;
    if (spec.kind == RewardModelSpec::Kind::linear) {
        const auto phi = env.feature_map(spec.feature_map);
        if (!phi) throw InvalidArgument("environment has no feature map '" + spec.feature_map + "'");
        if (aug) return fit_linear(observed(*aug, spec.observation_noise), *phi);
        return fit_linear(observed(model_data_, spec.observation_noise), *phi);
    }
    if (!aug) return fit_tabular_mean(observed(model_data_, spec.observation_noise));
    const auto data = observed(*aug, spec.observation_noise);
    return exp_->config.pooling == Pooling::weighted ? fit_tabular_weighted_mean(data)
                                                     : fit_tabular_mean(data);
}

TrialContext::Augmented TrialContext::augment(const Cell& cell) const {
    const auto& env = exp_->environment.env;
    const auto model = AnnotationModel<double>::uniform(env.context_count(), env.action_count(),
                                                         cell.eps, cell.delta, exp_->availability,
                                                         exp_->availability_mode);
    const auto seed = exp_->config.seed;
    const std::initializer_list<std::uint64_t> key{u64(pair_), u64(trial_)};
    return {assign_weights(annotate(eval_, env, model, derive_seed(seed, "eval-annotations", key)), scheme_),
            assign_weights(annotate(model_data_, env, model, derive_seed(seed, "model-annotations", key)),
                           scheme_)};
}

TrialResult TrialContext::evaluate(const Cell& cell, const std::vector<EstimatorId>& estimators) const {
    const auto& env = exp_->environment.env;
    const auto& pi_e = problem_.pi_e();
    const bool any_plus = std::any_of(estimators.begin(), estimators.end(), [](EstimatorId id) {
        return needs_augmented_eval(id) || needs_model_plus(id);
    });
    std::optional<Augmented> aug;
    std::optional<RewardModel<double>> model_plus;
    TrialResult out;
    try {
        if (any_plus) aug = augment(cell);
        if (std::any_of(estimators.begin(), estimators.end(), needs_model_plus))
            model_plus = fit(exp_->model_spec(), &aug->model);
    } catch (const Error& e) {
        for (EstimatorId id : estimators)
            if (needs_augmented_eval(id) || needs_model_plus(id)) out[id] = std::string(e.what());
    }
    const DmMode mode = exp_->config.dm_mode;
    const CoverageMode coverage = exp_->coverage;
    for (EstimatorId id : estimators) {
        if (out.count(id)) continue;
        try {
            Estimate<double> est;
            switch (id) {
                case EstimatorId::IS: est = estimate_is(eval_, problem_); break;
                case EstimatorId::DM: est = estimate_dm(model_, env, pi_e, mode, &eval_); break;
                case EstimatorId::DMplus: est = estimate_dm_plus(*model_plus, env, pi_e, mode, &eval_); break;
                case EstimatorId::ISplus: est = estimate_is_plus(aug->eval, pi_e, plus_, coverage); break;
                case EstimatorId::DM_IS: est = estimate_dr(eval_, model_, problem_); break;
                case EstimatorId::DMplus_IS: est = estimate_dm_plus_is(eval_, *model_plus, problem_); break;
                case EstimatorId::DM_ISplus:
                    est = estimate_dm_is_plus(aug->eval, model_, pi_e, plus_, coverage);
                    break;
                case EstimatorId::DMplus_ISplus:
                    est = estimate_dm_plus_is_plus(aug->eval, *model_plus, pi_e, plus_, coverage);
                    break;
                case EstimatorId::NaiveDR: est = estimate_naive_dr(aug->eval, *model_plus, problem_); break;
            }
            out[id] = est;
        } catch (const Error& e) {
            out[id] = std::string(e.what());
        }
    }
    return out;
}

double TrialContext::delta(const Cell& cell, EstimatorId baseline) const {
    const auto& envr = exp_->environment;
    const Augmented aug = augment(cell);
    const auto chosen = fit(exp_->model_spec(), &aug.model);
    const double ours = estimate_dm_plus_is(eval_, chosen, problem_).value;
    const auto well = baseline == EstimatorId::DMplus ? fit(envr.well_specified, &aug.model)
                                                      : fit(envr.well_specified, nullptr);
    const double base =
        estimate_dm(well, envr.env, problem_.pi_e(), exp_->config.dm_mode, &eval_).value;
    return ours - base;
}

TrialResult run_trial(const ResolvedExperiment& exp, Index pair, const Cell& cell, Index trial) {
    return TrialContext(exp, pair, trial).evaluate(cell, exp.config.estimators);
}

const GridRow* GridResult::find(const std::string& estimator, double eps, double delta,
                                const std::string& pi_b) const {
    for (const auto& r : rows)
        if (r.estimator == estimator && r.pi_b == pi_b && r.eps == eps && r.delta == delta) return &r;
    return nullptr;
}

double ground_truth(const ResolvedExperiment& exp, Index pair) {
    const auto& env = exp.environment.env;
    const auto& pi_e = exp.environment.suite.pairs.at(pair).pi_e;
    if (exp.config.ground_truth == GroundTruth::exact) return policy_value_exact(env, pi_e);
    return policy_value_mc(env, pi_e, exp.config.mc_samples,
                           derive_seed(exp.config.seed, "ground-truth", {u64(pair)}));
}

namespace {

struct Metrics {
    double rmse, bias, std;
};

Metrics metrics(const std::vector<double>& x, double truth) {
    CompensatedSum sum, sq;
    for (double v : x) {
        sum.add(v);
        sq.add((v - truth) * (v - truth));
    }
    const double n = static_cast<double>(x.size());
    const double mean = sum.value() / n;
    CompensatedSum dev;
    for (double v : x) dev.add((v - mean) * (v - mean));
    return {std::sqrt(sq.value() / n), mean - truth, std::sqrt(dev.value() / n)};
}

double sample_sd(const std::vector<double>& x) {
    if (x.size() < 2) return 0;
    double m = 0, v = 0;
    for (double y : x) m += y;
    m /= static_cast<double>(x.size());
    for (double y : x) v += (y - m) * (y - m);
    return std::sqrt(v / static_cast<double>(x.size() - 1));
}

}  // namespace

GridResult run_grid(const ExperimentConfig& config) {
    const ResolvedExperiment exp = resolve(config);
    const auto& suite = exp.environment.suite;
    const std::size_t P = exp.pairs.size(), T = static_cast<std::size_t>(config.trials),
                      C = exp.cells.size(), E = config.estimators.size();
    const auto at = [&](std::size_t p, std::size_t t, std::size_t c, std::size_t e) {
        return ((p * T + t) * C + c) * E + e;
    };
    std::vector<double> values(P * T * C * E, nan);
    std::vector<std::string> errors(P * T * C * E);
    parallel_for(P * T, config.workers, [&](std::size_t task) {
        const std::size_t p = task / T, t = task % T;
        const TrialContext ctx(exp, exp.pairs[p], static_cast<Index>(t));
        for (std::size_t c = 0; c < C; ++c) {
            const TrialResult res = ctx.evaluate(exp.cells[c], config.estimators);
            for (std::size_t e = 0; e < E; ++e) {
                const auto& v = res.at(config.estimators[e]);
                if (const auto* est = std::get_if<Estimate<double>>(&v)) values[at(p, t, c, e)] = est->value;
                else errors[at(p, t, c, e)] = std::get<std::string>(v);
            }
        }
    });

    std::vector<double> truth(P);
    for (std::size_t p = 0; p < P; ++p) truth[p] = ground_truth(exp, exp.pairs[p]);

    GridResult result;
    const std::string env_name = to_string(config.env);
    const Index B = config.bootstrap;
    for (std::size_t c = 0; c < C; ++c) {
        const Cell& cell = exp.cells[c];
        std::vector<std::vector<GridRow>> per_pair(E);
        for (std::size_t p = 0; p < P; ++p) {
            Rng rng = make_rng(derive_seed(config.seed, "bootstrap", {u64(exp.pairs[p]), c}));
            std::uniform_int_distribution<std::size_t> pick(0, T - 1);
            std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(B), std::vector<std::size_t>(T));
            for (auto& r : resamples)
                for (auto& i : r) i = pick(rng);
            const auto& pp = suite.pairs[exp.pairs[p]];
            for (std::size_t e = 0; e < E; ++e) {
                const std::string name(to_string(config.estimators[e]));
                std::vector<double> x;
                std::string first_error;
                for (std::size_t t = 0; t < T; ++t) {
                    const double v = values[at(p, t, c, e)];
                    if (std::isnan(v)) {
                        if (first_error.empty()) first_error = errors[at(p, t, c, e)];
                    } else {
                        x.push_back(v);
                    }
                }
                if (!first_error.empty())
                    result.failures.push_back(env_name + " " + pp.pi_b_id + " " + name + " eps=" +
                                              format_double(cell.eps) + " delta=" + format_double(cell.delta) +
                                              ": " + std::to_string(T - x.size()) + " failed trials: " + first_error);
                if (x.empty()) continue;
                const Metrics m = metrics(x, truth[p]);
                std::vector<double> br, bb, bs;
                for (const auto& r : resamples) {
                    std::vector<double> xb;
                    for (std::size_t i : r) {
                        const double v = values[at(p, i, c, e)];
                        if (!std::isnan(v)) xb.push_back(v);
                    }
                    if (xb.empty()) continue;
                    const Metrics mb = metrics(xb, truth[p]);
                    br.push_back(mb.rmse);
                    bb.push_back(mb.bias);
                    bs.push_back(mb.std);
                }
                GridRow row{env_name, pp.pi_b_id, pp.pi_e_id, name, cell.eps, cell.delta,
                            m.rmse, m.bias, m.std, sample_sd(br), sample_sd(bb), sample_sd(bs),
                            static_cast<Index>(x.size())};
                result.rows.push_back(row);
                per_pair[e].push_back(row);
            }
        }
        for (std::size_t e = 0; e < E; ++e) {
            const auto& rows = per_pair[e];
            if (rows.size() != P || P == 0) continue;
            GridRow avg{env_name, "avg", "avg", rows[0].estimator, cell.eps, cell.delta,
                        0, 0, 0, 0, 0, 0, std::numeric_limits<Index>::max()};
            double vr = 0, vb = 0, vs = 0;
            for (const auto& r : rows) {
                avg.rmse += r.rmse;
                avg.bias += r.bias;
                avg.std += r.std;
                vr += r.se_rmse * r.se_rmse;
                vb += r.se_bias * r.se_bias;
                vs += r.se_std * r.se_std;
                avg.trials = std::min(avg.trials, r.trials);
            }
            const double np = static_cast<double>(P);
            avg.rmse /= np;
            avg.bias /= np;
            avg.std /= np;
            avg.se_rmse = std::sqrt(vr) / np;
            avg.se_bias = std::sqrt(vb) / np;
            avg.se_std = std::sqrt(vs) / np;
            result.rows.push_back(avg);
        }
    }
    return result;
}

DeltaResult delta_analysis(const ExperimentConfig& config) {
    const ResolvedExperiment exp = resolve(config);
    const std::size_t P = exp.pairs.size(), T = static_cast<std::size_t>(config.trials),
                      C = exp.cells.size();
    std::vector<double> values(P * T * C, nan);
    const auto baseline_for = [](const Cell& c) {
        return c.eps == 0 && c.delta == 0 ? EstimatorId::DMplus : EstimatorId::DM;
    };
    parallel_for(P * T, config.workers, [&](std::size_t task) {
        const std::size_t p = task / T, t = task % T;
        const TrialContext ctx(exp, exp.pairs[p], static_cast<Index>(t));
        for (std::size_t c = 0; c < C; ++c)
            values[task * C + c] = ctx.delta(exp.cells[c], baseline_for(exp.cells[c]));
    });
    DeltaResult out;
    out.reward_range = config.reward_range.value_or(
        config.env == EnvKind::sepsis ? 5.2 : exp.environment.reward_range);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> x;
        for (std::size_t task = 0; task < P * T; ++task) x.push_back(values[task * C + c]);
        CompensatedSum sum;
        for (double v : x) sum.add(v);
        const double mean = sum.value() / static_cast<double>(x.size());
        CompensatedSum dev;
        for (double v : x) dev.add((v - mean) * (v - mean));
        out.rows.push_back({to_string(config.env), exp.cells[c].eps, exp.cells[c].delta, mean,
                            dev.value() / static_cast<double>(x.size() - 1),
                            std::string(to_string(baseline_for(exp.cells[c]))),
                            static_cast<Index>(x.size())});
    }
    return out;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman needs paired samples");
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cfdr
