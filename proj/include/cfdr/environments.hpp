#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfdr/annotations.hpp"
#include "cfdr/core.hpp"

namespace cfdr {

enum class EnvKind { two_context, heartsteps, sepsis };

std::string to_string(EnvKind kind);
std::optional<EnvKind> env_kind_from_string(const std::string& name);
inline constexpr std::array<EnvKind, 3> all_env_kinds{EnvKind::two_context, EnvKind::heartsteps,
                                                      EnvKind::sepsis};

struct TwoContextConfig {
    std::array<double, 2> context1_means{0.5, 1.5};  // context 2 is always zero
    double reward_std = 0.5;
    bool misspecify = false;
    double observation_noise = 0.5;  // share of training samples that see a random context
};

struct HeartstepsConfig {
    std::array<double, 3> theta{-0.04, 0.9999, 0.3};
    double decay = 1.0;            // first feature coordinate
    double treatment_effect = 1.0; // third coordinate when the notification is sent
    int bins = 80;
    double sqrt_steps_low = 20.0;
    double sqrt_steps_high = 100.0;
    double d0_mean = 60.0;
    double d0_sd = 15.0;
    double reward_std = 1.0;
};

struct SepsisConfig {
    std::array<double, 2> theta{-1.0, -1.0};  // on [#abnormal vitals, on treatment]
    double reward_std = 1.0;
    int misspecified_width = 168;
    std::uint64_t projection_seed = 0x5e9515;
    bool absorbing_in_d0 = false;
};

/// Context layout: hr(3) x bp(3) x o2(2) x glucose(5) x diabetic(2) x abx x vaso x vent,
/// followed by two absorbing contexts.
namespace sepsis {
inline constexpr int hr_levels = 3, bp_levels = 3, o2_levels = 2, glucose_levels = 5;
inline constexpr Index live_contexts = 1440;
inline constexpr Index context_count = 1442;
inline constexpr Index action_count = 8;
struct Vitals {
    int hr, bp, o2, glucose, diabetic, abx, vaso, vent;
};
Vitals decode(Index context);
Index encode(const Vitals& v);
int abnormal_count(const Vitals& v);
}  // namespace sepsis

EnvSpec<double> build_two_context(const TwoContextConfig& cfg = {});
EnvSpec<double> build_heartsteps(const HeartstepsConfig& cfg = {});
EnvSpec<double> build_sepsis(const SepsisConfig& cfg = {});

struct PolicyPair {
    std::string pi_b_id;
    std::string pi_e_id;
    Policy<double> pi_b;
    Policy<double> pi_e;
};

struct PolicySuite {
    std::vector<PolicyPair> pairs;
    Index size() const { return static_cast<Index>(pairs.size()); }
};

PolicySuite policy_suite(EnvKind kind, Index context_count);

/// How R-hat is fitted for one environment: tabular means or OLS on a named feature map,
/// optionally on training data whose contexts are corrupted.
struct RewardModelSpec {
    enum class Kind { tabular_mean, linear } kind = Kind::tabular_mean;
    std::string feature_map;
    double observation_noise = 0.0;
};

/// Everything the harness needs for one environment.
struct Environment {
    EnvKind kind;
    EnvSpec<double> env;
    PolicySuite suite;
    RewardModelSpec well_specified;
    RewardModelSpec misspecified;
    Index default_n;
    double availability;
    AvailabilityMode availability_mode;
    CoverageMode coverage;
    double reward_range;
};

struct EnvConfigs {
    TwoContextConfig two_context;
    HeartstepsConfig heartsteps;
    SepsisConfig sepsis;
};

Environment make_environment(EnvKind kind, const EnvConfigs& cfg = {});

}  // namespace cfdr
