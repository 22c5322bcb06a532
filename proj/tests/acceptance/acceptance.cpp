// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfdr/environments.hpp"
#include "cfdr/harness.hpp"
#include "cfdr/oracle.hpp"
#include "cfdr/parallel.hpp"

using namespace cfdr;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::string> notes;
};

struct Options {
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string cli;
    std::filesystem::path scratch;
    std::vector<int> only;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const GridRow& lookup(const GridResult& g, const std::string& est, double eps, double delta,
                      const std::string& pi_b = "avg", const std::string& pi_e = "avg") {
    for (const auto& r : g.rows)
        if (r.estimator == est && r.eps == eps && r.delta == delta && r.pi_b == pi_b && r.pi_e == pi_e) return r;
    throw std::runtime_error("missing grid row " + est + " " + pi_b + " " + pi_e);
}

EvaluationProblem<double> problem_for(const Environment& e, Index pair) {
    const auto& p = e.suite.pairs.at(pair);
    return {e.env, p.pi_b, p.pi_e, e.coverage};
}

double range_of(const std::vector<double>& x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return *hi - *lo;
}

// 1
Outcome equal_weights_equivalence(const Options& o) {
    const auto envr = make_environment(EnvKind::two_context);
    Rng rng = make_rng(derive_seed(o.seed, "c1"));
    std::uniform_int_distribution<Index> pick(0, envr.suite.size() - 1);
    std::uniform_real_distribution<double> eps(-2, 2), delta(0, 4);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const auto p = problem_for(envr, pick(rng));
        const auto am = AnnotationModel<double>::uniform(2, 2, eps(rng), delta(rng), 1.0);
        const auto scheme = WeightScheme<double>::equal(am);
        const AugmentedBehaviorPolicy<double> plus(p.pi_b(), scheme);
        const auto s = derive_seed(o.seed, "c1", {std::uint64_t(i)});
        const auto d = sample_dataset(p, 100, derive_seed(s, "eval"));
        const auto aug = assign_weights(annotate(d, envr.env, am, derive_seed(s, "ann")), scheme);
        const auto model_data = sample_dataset(p, 100, derive_seed(s, "model"));
        const auto model = fit_tabular_mean(model_data);
        const auto model_plus = fit_tabular_mean(annotate(model_data, envr.env, am, derive_seed(s, "model-ann")));
        const double is_plus = estimate_is_plus(aug, p.pi_e(), plus).value;
        worst = std::max({worst, std::abs(is_plus - estimate_dm_is_plus(aug, model, p.pi_e(), plus).value),
                          std::abs(is_plus - estimate_dm_plus_is_plus(aug, model_plus, p.pi_e(), plus).value)});
    }
    return {worst <= 1e-10, fmt("max gap over 100 datasets %.3g (tol 1e-10)", worst), {}};
}

// 2 and 3 read one grid over bias levels in reward units.
GridResult bias_grid(const Options& o) {
    ExperimentConfig c;
    c.env = EnvKind::two_context;
    c.eps_grid = {0, 0.25, 0.5, 1.0};
    c.delta_grid = {0};
    c.grid_units = GridUnits::absolute;
    c.estimators = {EstimatorId::DMplus_IS, EstimatorId::DM_ISplus, EstimatorId::DMplus_ISplus};
    c.trials = 2000;
    c.bootstrap = 200;
    c.seed = derive_seed(o.seed, "c2");
    c.workers = o.workers;
    return run_grid(c);
}

Outcome unbiased_perfect(const GridResult& g) {
    const auto suite = policy_suite(EnvKind::two_context, 2);
    Outcome out{true, "", {}};
    double worst = 0;
    for (const char* est : {"DM+-IS", "DM-IS+", "DM+-IS+"})
        for (const auto& pair : suite.pairs) {
            const auto& r = lookup(g, est, 0, 0, pair.pi_b_id, pair.pi_e_id);
            const double z = std::abs(r.bias) / r.se_bias;
            worst = std::max(worst, z);
            if (z > 3) {
                out.pass = false;
                out.notes.push_back(fmt("%s %s->%s bias=%.4g se=%.3g", est, pair.pi_b_id.c_str(), pair.pi_e_id.c_str(),
                                        r.bias, r.se_bias));
            }
        }
    out.detail = fmt("27 (pair, estimator) cells, 2000 trials, worst |bias|/se = %.2f (tol 3)", worst);
    return out;
}

Outcome annotation_bias(const GridResult& g) {
    const auto envr = make_environment(EnvKind::two_context);
    Outcome out{true, "", {}};
    double worst_plus = 0, worst_dr = 0;
    for (double eps : {0.25, 0.5, 1.0}) {
        const auto am = AnnotationModel<double>::uniform(2, 2, eps, 0, 1.0);
        const auto scheme = WeightScheme<double>::equal(am);
        for (Index p = 0; p < envr.suite.size(); ++p) {
            const auto& pair = envr.suite.pairs[p];
            const double oracle = dm_is_plus_bias(problem_for(envr, p), scheme, am);
            const auto check = [&](const char* est, double target, double& worst) {
                const auto& r = lookup(g, est, eps, 0, pair.pi_b_id, pair.pi_e_id);
                const double z = std::abs(r.bias - target) / r.se_bias;
                worst = std::max(worst, z);
                if (z > 3) {
                    out.pass = false;
                    out.notes.push_back(fmt("%s eps=%.2f %s->%s bias=%.4g expected=%.4g se=%.3g", est, eps,
                                            pair.pi_b_id.c_str(), pair.pi_e_id.c_str(), r.bias, target, r.se_bias));
                }
            };
            check("DM-IS+", oracle, worst_plus);
            check("DM+-IS+", oracle, worst_plus);
            check("DM+-IS", 0.0, worst_dr);
        }
    }
    const auto am = AnnotationModel<double>::uniform(2, 2, 0.5, 0, 1.0);
    out.detail = fmt("worst z: DM-IS+/DM+-IS+ vs oracle %.2f, DM+-IS vs 0 %.2f (tol 3); oracle at [0.5,0.5], eps 0.5: %.4g",
                     worst_plus, worst_dr,
                     dm_is_plus_bias(problem_for(envr, 4), WeightScheme<double>::equal(am), am));
    return out;
}

bool covers_target(const Dataset<double>& d, const EvaluationProblem<double>& prob) {
    const auto counts = detail::factual_counts_of(d);
    for (Index s = 0; s < counts.rows(); ++s)
        for (Index a = 0; a < counts.cols(); ++a)
            if (prob.env().d0(s) > 0 && prob.pi_e()(s, a) > 0 && counts(s, a) == 0) return false;
    return true;
}

// 4
Outcome variance_closed_forms(const Options& o) {
    const auto envr = make_environment(EnvKind::two_context);
    const auto& env = envr.env;
    const Index n = 100, trials = 100000;
    MatrixX<double> offset(2, 2);
    offset << 0.3, -0.2, 0.1, 0.4;
    const MatrixX<double> frozen = env.mean_rewards() + offset;
    MatrixX<double> biased_offset(2, 2);
    biased_offset << 0.5, 0.5, -0.25, 0.75;
    const MatrixX<double> biased = env.mean_rewards() + biased_offset;
    const auto model = RewardModel<double>::fixed(frozen);
    const auto model_plus = RewardModel<double>::fixed(biased);
    Outcome out{true, "", {}};
    double worst = 0;
    std::string worst_name;
    const auto record = [&](const std::string& name, double closed, double empirical) {
        const double rel = std::abs(empirical - closed) / closed;
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
        if (rel > 0.05) {
            out.pass = false;
            out.notes.push_back(fmt("%s closed=%.6g empirical=%.6g rel=%.3f", name.c_str(), closed, empirical, rel));
        }
    };
    for (Index p = 0; p < envr.suite.size(); ++p) {
        const auto prob = problem_for(envr, p);
        const std::string tag = envr.suite.pairs[p].pi_b_id + "->" + envr.suite.pairs[p].pi_e_id;
        const auto seed = derive_seed(o.seed, "c4", {std::uint64_t(p)});
        std::vector<double> is(trials), dr(trials), dmp(trials), dm(trials), dm_any(trials);
        parallel_for(static_cast<std::size_t>(trials), o.workers, [&](std::size_t t) {
            const auto s = derive_seed(seed, "trial", {std::uint64_t(t)});
            const auto d = sample_dataset(prob, n, derive_seed(s, "eval"));
            is[t] = estimate_is(d, prob).value;
            dr[t] = estimate_dr(d, model, prob).value;
            dmp[t] = estimate_dm_plus_is(d, model_plus, prob).value;
            // The closed form conditions on every target cell being observed in the fit data.
            auto fit_data = sample_dataset(prob, n, derive_seed(s, "model"));
            dm_any[t] = estimate_dm(fit_tabular_mean(fit_data), env, prob.pi_e(), DmMode::sample_contexts, &d).value;
            for (std::uint64_t k = 1; !covers_target(fit_data, prob); ++k)
                fit_data = sample_dataset(prob, n, derive_seed(s, "model", {k}));
            dm[t] = estimate_dm(fit_tabular_mean(fit_data), env, prob.pi_e(), DmMode::sample_contexts, &d).value;
        });
        const auto var = [&](const std::vector<double>& x) { return summarize(x, seed, 0).variance; };
        const double N = static_cast<double>(n);
        record("is_variance " + tag, is_variance(prob).total, N * var(is));
        record("dr_variance " + tag, dr_variance(prob, frozen).total, N * var(dr));
        record("dm_plus_is_variance " + tag,
               dm_plus_is_variance(prob, RewardModelErrorProfile::frozen(env, biased)).total, N * var(dmp));
        record("dm_variance " + tag, dm_variance(prob, n).total, var(dm));
        const double any = var(dm_any), closed = dm_variance(prob, n).total;
        if (std::abs(any - closed) > 0.05 * closed)
            out.notes.push_back(fmt("dm_variance %s without conditioning on coverage: empirical=%.6g (rel %.3f)",
                                    tag.c_str(), any, std::abs(any - closed) / closed));
    }
    out.detail = fmt("36 checks (4 closed forms x 9 pairs), 1e5 trials each, worst relative error %.4f at %s (tol 0.05)",
                     worst, worst_name.c_str());
    return out;
}

// 5
Outcome jensen(const Options& o) {
    Rng rng = make_rng(derive_seed(o.seed, "c5"));
    std::uniform_int_distribution<int> size(2, 20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Outcome out{true, "", {}};
    int uniform_cases = 0;
    double min_gap = 1e300;
    for (int i = 0; i < 1000; ++i) {
        const int n = size(rng);
        VectorX<double> w(n);
        const bool flat = i % 10 == 0;
        for (int j = 0; j < n; ++j) w(j) = flat ? 1.0 : u(rng);
        w /= w.sum();
        const double gap = w.squaredNorm() - 1.0 / n;
        const bool uniform = (w.array() - 1.0 / n).abs().maxCoeff() <= 1e-12;
        const bool equality = std::abs(gap) <= 1e-12;
        if (gap < -1e-12 || equality != uniform) {
            out.pass = false;
            out.notes.push_back(fmt("n=%d gap=%.3g uniform=%d", n, gap, int(uniform)));
        }
        uniform_cases += uniform;
        if (!uniform) min_gap = std::min(min_gap, gap);
    }
    out.detail = fmt("1000 vectors (%d uniform), smallest non-uniform gap %.3g (tol 1e-12)", uniform_cases, min_gap);
    return out;
}

// 6
Outcome naive_dr(const Options& o) {
    ExperimentConfig c;
    c.env = EnvKind::two_context;
    c.eps_grid = {0};
    c.delta_grid = {0};
    c.estimators = {EstimatorId::NaiveDR, EstimatorId::DM_IS};
    c.trials = 100;
    c.seed = derive_seed(o.seed, "c6");
    c.workers = o.workers;
    const auto g = run_grid(c);
    const auto& naive = lookup(g, "NaiveDR", 0, 0);
    const auto& dr = lookup(g, "DM-IS", 0, 0);
    const bool absolute = std::abs(naive.rmse - 0.317) <= 0.05 && std::abs(dr.rmse - 0.108) <= 0.05;
    const double ratio = naive.rmse / dr.rmse;
    Outcome out{ratio > 2, fmt("NaiveDR rmse %.4f (target 0.317 +- 0.05), DM-IS rmse %.4f (target 0.108 +- 0.05), "
                               "absolute match %s, ratio %.3f (need > 2)",
                               naive.rmse, dr.rmse, absolute ? "yes" : "no", ratio),
                {}};
    out.notes.push_back(fmt("NaiveDR bias %.4f std %.4f; DM-IS bias %.4f std %.4f", naive.bias, naive.std, dr.bias, dr.std));
    return out;
}

// 7
Outcome bias_dominates(const Options& o) {
    ExperimentConfig c;
    c.env = EnvKind::two_context;
    c.estimators = {EstimatorId::ISplus, EstimatorId::DM_ISplus, EstimatorId::DMplus_ISplus};
    c.seed = derive_seed(o.seed, "c7");
    c.workers = o.workers;
    const auto g = run_grid(c);
    const auto exp = resolve(c);
    const double unit = exp.environment.env.mean_reward_std();
    Outcome out{true, "", {}};
    std::string summary;
    for (const char* est : {"IS+", "DM-IS+", "DM+-IS+"}) {
        std::vector<double> along_eps, along_delta, abs_eps;
        for (double e : c.eps_grid) {
            along_eps.push_back(lookup(g, est, e * unit, 0).rmse);
            abs_eps.push_back(std::abs(e));
        }
        for (double d : c.delta_grid) along_delta.push_back(lookup(g, est, 0, d * unit * unit).rmse);
        const double ratio = range_of(along_eps) / range_of(along_delta);
        if (!(ratio >= 3)) out.pass = false;
        summary += fmt("%s range ratio %.2f; ", est, ratio);
        if (std::string(est) == "DM-IS+") {
            const double rho = spearman(abs_eps, along_eps);
            if (!(rho >= 0.9)) out.pass = false;
            summary += fmt("DM-IS+ spearman %.3f; ", rho);
        }
    }
    out.detail = summary + "(need ratio >= 3, spearman >= 0.9)";
    return out;
}

// 8
Outcome robustness(const Options& o) {
    Outcome out{true, "", {}};
    std::string summary;
    for (EnvKind kind : all_env_kinds) {
        ExperimentConfig c;
        c.env = kind;
        c.misspecified = true;
        c.seed = derive_seed(o.seed, "c8", {std::uint64_t(kind)});
        c.workers = o.workers;
        c.estimators = {EstimatorId::IS,     EstimatorId::DM,        EstimatorId::DMplus,       EstimatorId::ISplus,
                        EstimatorId::DM_IS,  EstimatorId::DMplus_IS, EstimatorId::DM_ISplus,   EstimatorId::DMplus_ISplus};
        if (kind == EnvKind::sepsis) {
            c.trials = 50;
        } else {
            c.eps_grid = {*std::max_element(c.eps_grid.begin(), c.eps_grid.end())};
            c.delta_grid = {0};
        }
        const auto start = std::chrono::steady_clock::now();
        const auto g = run_grid(c);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const double eps = *std::max_element(c.eps_grid.begin(), c.eps_grid.end()) *
                           make_environment(kind).env.mean_reward_std();
        const double ours = lookup(g, "DM+-IS", eps, 0).rmse;
        double best = 1e300;
        std::string best_name;
        for (EstimatorId id : c.estimators) {
            if (id == EstimatorId::DMplus_IS) continue;
            const double r = lookup(g, std::string(to_string(id)), eps, 0).rmse;
            if (r < best) {
                best = r;
                best_name = std::string(to_string(id));
            }
        }
        const bool ok = ours <= 1.1 * best;
        out.pass = out.pass && ok;
        summary += fmt("%s %.4f vs %s %.4f (%s); ", to_string(kind).c_str(), ours, best_name.c_str(), best,
                       ok ? "ok" : "over");
        std::string line = to_string(kind) + fmt(" eps=%.3g rmse:", eps);
        for (EstimatorId id : c.estimators)
            line += fmt(" %s=%.4f", std::string(to_string(id)).c_str(), lookup(g, std::string(to_string(id)), eps, 0).rmse);
        out.notes.push_back(line);
        if (kind == EnvKind::sepsis) {
            const bool fast = seconds < 1800;
            out.pass = out.pass && fast;
            out.notes.push_back(fmt("full sepsis grid (%zu cells, 50 trials, N=700) took %.0f s (limit 1800)",
                                    resolve(c).cells.size(), seconds));
        }
    }
    out.detail = summary + "DM+-IS must be within 1.1x of the best";
    return out;
}

// 9
Outcome delta_trend(const Options& o) {
    ExperimentConfig c;
    c.env = EnvKind::sepsis;
    c.misspecified = true;
    c.eps_grid = {0, 0.25, 0.5, 1, 2};
    c.trials = 50;
    c.seed = derive_seed(o.seed, "c9");
    c.workers = o.workers;
    const auto d = delta_analysis(c);
    std::vector<double> eps, mag;
    double worst_zero = 0;
    for (const auto& r : d.rows) {
        eps.push_back(r.eps);
        mag.push_back(std::abs(r.mean_delta));
        if (r.eps == 0) worst_zero = std::max(worst_zero, std::abs(r.mean_delta));
    }
    const double rho = spearman(eps, mag);
    const double limit = 0.1 * d.reward_range;
    Outcome out{worst_zero <= limit && rho >= 0.8,
                fmt("max |mean delta| at eps 0 = %.4f (limit %.3f of range %.1f), spearman(eps, |mean delta|) = %.3f "
                    "(need >= 0.8)",
                    worst_zero, limit, d.reward_range, rho),
                {}};
    std::string line = "|mean delta| by eps (delta_G = 0):";
    for (const auto& r : d.rows)
        if (r.delta == 0) line += fmt(" %.3g:%.4f", r.eps, std::abs(r.mean_delta));
    out.notes.push_back(line);
    return out;
}

// 10
std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism(const Options& o) {
    if (o.cli.empty()) return {false, "no --cli binary given", {}};
    std::filesystem::create_directories(o.scratch);
    Outcome out{true, "", {}};
    int runs = 0;
    for (EnvKind kind : all_env_kinds) {
        const auto cfg = o.scratch / (to_string(kind) + ".json");
        {
            std::ofstream f(cfg);
            f << R"({"env": ")" << to_string(kind) << R"(", "trials": 4, "eps_grid": [0, -1, 2], "delta_grid": [0, 1],)"
              << R"( "bootstrap": 30, "misspecified": true)" << (kind == EnvKind::sepsis ? R"(, "pairs": [0, 5])" : "")
              << "}";
        }
        std::string reference;
        for (const auto& [workers, tag] : std::vector<std::pair<int, const char*>>{{1, "a"}, {1, "b"}, {2, "c"}, {4, "d"}}) {
            const auto dir = o.scratch / (to_string(kind) + "_" + tag);
            const std::string cmd = "\"" + o.cli + "\" run-grid --config \"" + cfg.string() + "\" --seed 17 --workers " +
                                    std::to_string(workers) + " --out \"" + dir.string() + "\" > /dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                out.pass = false;
                out.notes.push_back("command failed: " + cmd);
                continue;
            }
            ++runs;
            const auto bytes = read_file(dir / (to_string(kind) + "_grid.csv"));
            if (reference.empty()) reference = bytes;
            else if (bytes != reference) {
                out.pass = false;
                out.notes.push_back(to_string(kind) + ": output differs at workers=" + std::to_string(workers));
            }
        }
    }
    std::filesystem::remove_all(o.scratch);
    out.detail = fmt("%d run-grid invocations over 3 environments at workers 1, 1, 2, 4: %s", runs,
                     out.pass ? "byte-identical" : "mismatch");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    Options o;
    o.scratch = std::filesystem::temp_directory_path() / "cfdr_acceptance";
    app.add_option("--seed", o.seed, "Root seed");
    app.add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    app.add_option("--cli", o.cli, "Path to the cfdr binary");
    app.add_option("--scratch", o.scratch, "Scratch directory");
    app.add_option("--only", o.only, "Run only these criteria")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    int failed = 0, ran = 0;
    const auto selected = [&](int id) { return o.only.empty() || std::count(o.only.begin(), o.only.end(), id) > 0; };
    const auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
        if (!selected(id)) return;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = run();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what(), {}};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !r.pass;
        std::cout << (r.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << r.detail
                  << fmt(" [%.1fs]", seconds) << std::endl;
        for (const auto& n : r.notes) std::cout << "       " << n << '\n';
        std::cout.flush();
    };

    report(1, "equal-weights equivalence", [&] { return equal_weights_equivalence(o); });
    GridResult grid;
    report(2, "unbiased under perfect annotations", [&] {
        grid = bias_grid(o);
        return unbiased_perfect(grid);
    });
    report(3, "annotation bias closed form", [&] {
        if (!selected(2)) grid = bias_grid(o);
        return annotation_bias(grid);
    });
    report(4, "variance closed forms", [&] { return variance_closed_forms(o); });
    report(5, "squared weights bound", [&] { return jensen(o); });
    report(6, "naive DR bias", [&] { return naive_dr(o); });
    report(7, "bias dominates variance", [&] { return bias_dominates(o); });
    report(8, "DM+-IS robustness", [&] { return robustness(o); });
    report(9, "delta analysis", [&] { return delta_trend(o); });
    report(10, "determinism", [&] { return determinism(o); });
    std::cout << (ran - failed) << "/" << ran << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
