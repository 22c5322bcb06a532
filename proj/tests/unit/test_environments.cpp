#include <doctest.h>

#include <cmath>

#include "cfdr/environments.hpp"
#include "cfdr/estimators.hpp"
#include "helpers.hpp"

using namespace cfdr;
using testing::constant_policy;

TEST_CASE("two context bandit") {
    const auto env = build_two_context();
    CHECK(env.context_count() == 2);
    CHECK(env.action_count() == 2);
    CHECK(env.d0(0) == 0.5);
    CHECK(env.mean_reward(1, 0) == 0.0);
    CHECK(env.mean_reward(1, 1) == 0.0);
    for (double p : {0.1, 0.5, 0.9}) {
        const double expect = 0.5 * (p * env.mean_reward(0, 0) + (1 - p) * env.mean_reward(0, 1));
        CHECK(policy_value_exact(env, constant_policy(2, {p, 1 - p})) == doctest::Approx(expect));
    }
    Rng rng = make_rng(1);
    for (int i = 0; i < 100; ++i) CHECK(env.observe(i % 2, rng) == i % 2);

    TwoContextConfig cfg;
    cfg.misspecify = true;
    const auto noisy = build_two_context(cfg);
    CHECK(noisy.observation_noise() == 0.5);
    int flipped = 0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) flipped += noisy.observe(0, rng) != 0;
    // a random context is observed half the time, and it is the other one half of that
    CHECK(std::abs(flipped / double(n) - 0.25) <= 4 * std::sqrt(0.25 * 0.75 / n));

    const EvaluationProblem<double> p(env, constant_policy(2, {0.5, 0.5}), constant_policy(2, {0.5, 0.5}));
    const Index big = 200000;
    const double est = estimate_is(sample_dataset(p, big, 3), p).value;
    const double truth = policy_value_exact(env, p.pi_e());
    double second = 0;
    for (Index s = 0; s < 2; ++s)
        for (Index a = 0; a < 2; ++a)
            second += 0.25 * (std::pow(env.mean_reward(s, a), 2) + std::pow(env.reward_std(s, a), 2));
    CHECK(std::abs(est - truth) <= 3 * std::sqrt((second - truth * truth) / big));
}

TEST_CASE("heartsteps") {
    const HeartstepsConfig cfg;
    const auto env = build_heartsteps();
    CHECK(env.context_count() == 80);
    CHECK(env.action_count() == 2);
    CHECK(std::abs(env.d0().sum() - 1) <= 1e-12);
    const auto& phi = *env.feature_map("well_specified");
    const auto& partial = *env.feature_map("misspecified");
    CHECK(partial.dim() == 2);
    for (Index s = 0; s < 80; ++s) {
        const double prev = env.context_records()(s, 0);
        CHECK(phi(s, 0)(2) == 0.0);
        CHECK(env.mean_reward(s, 0) == doctest::Approx(-0.04 * cfg.decay + 0.9999 * prev).epsilon(1e-14));
        CHECK(env.mean_reward(s, 1) - env.mean_reward(s, 0) == doctest::Approx(0.3 * phi(s, 1)(2)).epsilon(1e-12));
        CHECK(partial(s, 1) == phi(s, 1).head(2));
    }
    HeartstepsConfig selector;
    selector.theta = {0.0, 1.0, 0.0};
    const auto sel = build_heartsteps(selector);
    for (Index s = 0; s < 80; ++s)
        for (Index a = 0; a < 2; ++a) CHECK(sel.mean_reward(s, a) == sel.context_records()(s, 0));
}

TEST_CASE("sepsis") {
    const auto env = build_sepsis();
    CHECK(env.context_count() == 1442);
    CHECK(env.action_count() == 8);
    CHECK(std::abs(env.d0().sum() - 1) <= 1e-12);
    CHECK(env.d0(1440) == 0.0);

    sepsis::Vitals normal{1, 1, 1, 2, 0, 0, 0, 0};
    const Index s0 = sepsis::encode(normal);
    CHECK(sepsis::abnormal_count(normal) == 0);
    CHECK(env.mean_reward(s0, 0) == 0.0);

    sepsis::Vitals sick{0, 2, 0, 4, 1, 1, 0, 0};
    const Index s1 = sepsis::encode(sick);
    CHECK(sepsis::abnormal_count(sick) == 4);
    for (Index a = 1; a < 8; ++a) CHECK(env.mean_reward(s1, a) == -5.0);
    CHECK(env.mean_reward(s1, 0) == -4.0);

    for (Index s = 0; s < sepsis::live_contexts; ++s) CHECK(sepsis::encode(sepsis::decode(s)) == s);
    CHECK(env.mean_rewards().maxCoeff() - env.mean_rewards().minCoeff() == 5.0);
    CHECK(env.feature_map("misspecified")->dim() == 168);
    CHECK(env.feature_map("well_specified")->dim() == 2);

    SepsisConfig with_absorbing;
    with_absorbing.absorbing_in_d0 = true;
    CHECK(build_sepsis(with_absorbing).d0(1441) == doctest::Approx(1.0 / 1442));
}

TEST_CASE("policy suites") {
    CHECK(policy_suite(EnvKind::two_context, 2).size() == 9);
    CHECK(policy_suite(EnvKind::heartsteps, 80).size() == 9);
    const auto sepsis = policy_suite(EnvKind::sepsis, 1442);
    CHECK(sepsis.size() == 6);
    for (const auto& pair : sepsis.pairs) {
        CHECK(std::abs(pair.pi_b.row(0).sum() - 1) <= 1e-12);
        CHECK(pair.pi_e(0, 2) == 0.0);
    }
    CHECK(policy_suite(EnvKind::two_context, 2).pairs[1].pi_b_id == "[0.1,0.9]");
    CHECK(policy_suite(EnvKind::two_context, 2).pairs[1].pi_e_id == "[0.5,0.5]");
}

TEST_CASE("environment registry") {
    for (EnvKind k : all_env_kinds) {
        CHECK(env_kind_from_string(to_string(k)) == k);
        const auto e = make_environment(k);
        CHECK((e.env.reward_stds().array() >= 0).all());
        CHECK(std::abs(e.env.d0().sum() - 1) <= 1e-12);
        CHECK(e.reward_range > 0);
    }
    CHECK(make_environment(EnvKind::two_context).default_n == 100);
    CHECK(make_environment(EnvKind::heartsteps).default_n == 200);
    CHECK(make_environment(EnvKind::sepsis).default_n == 700);
    CHECK(make_environment(EnvKind::sepsis).reward_range == 5.0);
    CHECK_FALSE(env_kind_from_string("mujoco"));
}
