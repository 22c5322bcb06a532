#include "cfdr/environments.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace cfdr {

std::string to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::two_context: return "two_context";
        case EnvKind::heartsteps: return "heartsteps";
        case EnvKind::sepsis: return "sepsis";
    }
    return "?";
}

std::optional<EnvKind> env_kind_from_string(const std::string& name) {
    for (EnvKind k : all_env_kinds)
        if (to_string(k) == name) return k;
    if (name == "2-context" || name == "two-context") return EnvKind::two_context;
    return std::nullopt;
}

EnvSpec<double> build_two_context(const TwoContextConfig& cfg) {
    VectorX<double> d0 = VectorX<double>::Constant(2, 0.5);
    MatrixX<double> mean = MatrixX<double>::Zero(2, 2);
    mean(0, 0) = cfg.context1_means[0];
    mean(0, 1) = cfg.context1_means[1];
    MatrixX<double> sd = MatrixX<double>::Constant(2, 2, cfg.reward_std);
    EnvSpec<double> env("two_context", d0, mean, sd);
    return cfg.misspecify ? env.with_observation_noise(cfg.observation_noise) : env;
}

EnvSpec<double> build_heartsteps(const HeartstepsConfig& cfg) {
    if (cfg.bins < 1 || !(cfg.sqrt_steps_high > cfg.sqrt_steps_low) || !(cfg.d0_sd > 0))
        throw InvalidArgument("invalid heartsteps configuration");
    const Index S = cfg.bins, A = 2;
    const double width = (cfg.sqrt_steps_high - cfg.sqrt_steps_low) / static_cast<double>(S);
    VectorX<double> centers(S), d0(S);
    const auto cdf = [&](double x) {
        return 0.5 * std::erfc(-(x - cfg.d0_mean) / (cfg.d0_sd * std::sqrt(2.0)));
    };
    for (Index s = 0; s < S; ++s) {
        const double lo = cfg.sqrt_steps_low + width * static_cast<double>(s);
        centers(s) = lo + 0.5 * width;
        d0(s) = cdf(lo + width) - cdf(lo);
    }
    d0 /= d0.sum();

    FeatureMap<double> full{"well_specified", A, MatrixX<double>(S * A, 3)};
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            full.table.row(s * A + a) << cfg.decay, centers(s), a == 1 ? cfg.treatment_effect : 0.0;
    const Eigen::Vector3d theta(cfg.theta[0], cfg.theta[1], cfg.theta[2]);
    const VectorX<double> flat = full.table * theta;
    MatrixX<double> mean = Eigen::Map<const MatrixX<double>>(flat.data(), S, A);

    FeatureMap<double> partial{"misspecified", A, full.table.leftCols(2)};
    EnvSpec<double> env("heartsteps", d0, mean, MatrixX<double>::Constant(S, A, cfg.reward_std));
    env.add_feature_map(std::move(full)).add_feature_map(std::move(partial));
    env.set_context_records({"sqrt_steps"}, centers);
    return env;
}

namespace sepsis {

// Normal levels: hr 1 of {low, normal, high}, bp 1, o2 1 of {low, normal}, glucose 2 of 5.
Vitals decode(Index c) {
    if (c < 0 || c >= live_contexts) return {-1, -1, -1, -1, -1, -1, -1, -1};
    Vitals v{};
    v.vent = static_cast<int>(c % 2); c /= 2;
    v.vaso = static_cast<int>(c % 2); c /= 2;
    v.abx = static_cast<int>(c % 2); c /= 2;
    v.diabetic = static_cast<int>(c % 2); c /= 2;
    v.glucose = static_cast<int>(c % glucose_levels); c /= glucose_levels;
    v.o2 = static_cast<int>(c % o2_levels); c /= o2_levels;
    v.bp = static_cast<int>(c % bp_levels); c /= bp_levels;
    v.hr = static_cast<int>(c);
    return v;
}

Index encode(const Vitals& v) {
    Index c = v.hr;
    c = c * bp_levels + v.bp;
    c = c * o2_levels + v.o2;
    c = c * glucose_levels + v.glucose;
    c = c * 2 + v.diabetic;
    c = c * 2 + v.abx;
    c = c * 2 + v.vaso;
    c = c * 2 + v.vent;
    return c;
}

int abnormal_count(const Vitals& v) {
    if (v.hr < 0) return 0;
    return (v.hr != 1) + (v.bp != 1) + (v.o2 != 1) + (v.glucose != 2);
}

}  // namespace sepsis

EnvSpec<double> build_sepsis(const SepsisConfig& cfg) {
    using namespace sepsis;
    if (cfg.misspecified_width < 1) throw InvalidArgument("projection width must be positive");
    const Index S = context_count, A = action_count;
    VectorX<double> d0 = VectorX<double>::Zero(S);
    d0.head(live_contexts).setConstant(1.0 / static_cast<double>(cfg.absorbing_in_d0 ? S : live_contexts));
    if (cfg.absorbing_in_d0) d0.tail(S - live_contexts).setConstant(1.0 / static_cast<double>(S));

    MatrixX<double> mean = MatrixX<double>::Zero(S, A);
    MatrixX<double> records(S, 8);
    FeatureMap<double> well{"well_specified", A, MatrixX<double>::Zero(S * A, 2)};
    for (Index s = 0; s < S; ++s) {
        const Vitals v = decode(s);
        records.row(s) << v.hr, v.bp, v.o2, v.glucose, v.diabetic, v.abx, v.vaso, v.vent;
        if (s >= live_contexts) continue;  // absorbing: zero reward, zero features
        const int abnormal = abnormal_count(v);
        for (Index a = 0; a < A; ++a) {
            const double treated = a != 0 ? 1.0 : 0.0;
            well.table.row(s * A + a) << abnormal, treated;
            mean(s, a) = cfg.theta[0] * abnormal + cfg.theta[1] * treated;
        }
    }

    // One-hot(context) and one-hot(action) pushed through a fixed Gaussian projection.
    const Index width = cfg.misspecified_width;
    Rng rng = make_rng(cfg.projection_seed);
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixX<double> proj(S + A, width);
    for (Index r = 0; r < proj.rows(); ++r)
        for (Index c = 0; c < width; ++c) proj(r, c) = z(rng);
    FeatureMap<double> projected{"misspecified", A, MatrixX<double>(S * A, width)};
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            projected.table.row(s * A + a) = proj.row(s) + proj.row(S + a);

    EnvSpec<double> env("sepsis", d0, mean, MatrixX<double>::Constant(S, A, cfg.reward_std));
    env.add_feature_map(std::move(well)).add_feature_map(std::move(projected));
    env.set_context_records({"hr", "bp", "o2", "glucose", "diabetic", "abx", "vaso", "vent"},
                            std::move(records));
    return env;
}

namespace {

std::string label(const VectorX<double>& p) {
    std::ostringstream os;
    os << '[';
    for (Index i = 0; i < p.size(); ++i) os << (i ? "," : "") << p(i);
    os << ']';
    return os.str();
}

}  // namespace

PolicySuite policy_suite(EnvKind kind, Index context_count) {
    PolicySuite suite;
    if (kind == EnvKind::sepsis) {
        const double rows[6][8] = {
            {0.1, 0.1, 0.4, 0.3, 0.1, 0.0, 0.0, 0.0}, {0.1, 0.1, 0.4, 0.2, 0.1, 0.1, 0.0, 0.0},
            {0.1, 0.1, 0.4, 0.1, 0.1, 0.1, 0.0, 0.1}, {0.1, 0.1, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1},
            {0.2, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1}, {0.3, 0.1, 0.2, 0.0, 0.1, 0.1, 0.1, 0.1}};
        VectorX<double> target(8);
        target << 0.3, 0.2, 0.0, 0.0, 0.2, 0.1, 0.1, 0.1;
        const auto pi_e = Policy<double>::constant(context_count, target);
        for (int b = 0; b < 6; ++b) {
            const VectorX<double> p = Eigen::Map<const VectorX<double>>(rows[b], 8);
            suite.pairs.push_back({"pi_b" + std::to_string(b + 1), "pi_e",
                                   Policy<double>::constant(context_count, p), pi_e});
        }
        return suite;
    }
    const double base[3] = {0.1, 0.5, 0.9};
    for (double b : base)
        for (double e : base) {
            VectorX<double> pb(2), pe(2);
            pb << b, 1.0 - b;
            pe << e, 1.0 - e;
            suite.pairs.push_back({label(pb), label(pe), Policy<double>::constant(context_count, pb),
                                   Policy<double>::constant(context_count, pe)});
        }
    return suite;
}

Environment make_environment(EnvKind kind, const EnvConfigs& cfg) {
    using K = RewardModelSpec::Kind;
    switch (kind) {
        case EnvKind::two_context: {
            TwoContextConfig c = cfg.two_context;
            c.misspecify = false;
            auto env = build_two_context(c);
            auto suite = policy_suite(kind, env.context_count());
            const double range = env.mean_rewards().maxCoeff() - env.mean_rewards().minCoeff();
            return {kind, std::move(env), std::move(suite), {K::tabular_mean, "", 0.0},
                    {K::tabular_mean, "", c.observation_noise}, 100, 1.0,
                    AvailabilityMode::per_entry, CoverageMode::strict, range};
        }
        case EnvKind::heartsteps: {
            auto env = build_heartsteps(cfg.heartsteps);
            auto suite = policy_suite(kind, env.context_count());
            const double range = env.mean_rewards().maxCoeff() - env.mean_rewards().minCoeff();
            return {kind, std::move(env), std::move(suite), {K::linear, "well_specified", 0.0},
                    {K::linear, "misspecified", 0.0}, 200, 1.0, AvailabilityMode::per_entry,
                    CoverageMode::strict, range};
        }
        case EnvKind::sepsis: {
            auto env = build_sepsis(cfg.sepsis);
            auto suite = policy_suite(kind, env.context_count());
            const double range = env.mean_rewards().maxCoeff() - env.mean_rewards().minCoeff();
            return {kind, std::move(env), std::move(suite), {K::linear, "well_specified", 0.0},
                    {K::linear, "misspecified", 0.0}, 700, 0.125,
                    AvailabilityMode::one_per_sample, CoverageMode::permissive, range};
        }
    }
    throw InvalidArgument("unknown environment kind");
}

}  // namespace cfdr
