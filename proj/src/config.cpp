#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cfdr/harness.hpp"

namespace cfdr {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (eps_grid.empty() || delta_grid.empty()) throw ConfigError("grids must be nonempty");
    for (double d : delta_grid)
        if (!(d >= 0)) throw ConfigError("delta_grid entries must be nonnegative");
    for (double e : eps_grid)
        if (!std::isfinite(e)) throw ConfigError("eps_grid entries must be finite");
    if (trials < 2) throw ConfigError("trials must be at least 2");
    if (bootstrap < 0) throw ConfigError("bootstrap must be nonnegative");
    if (n && *n < 1) throw ConfigError("n must be at least 1");
    if (availability && !(*availability >= 0 && *availability <= 1))
        throw ConfigError("availability must lie in [0, 1]");
    if (estimators.empty()) throw ConfigError("estimators must be nonempty");
    if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
    if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
    if (reward_range && !(*reward_range > 0)) throw ConfigError("reward_range must be positive");
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& out) {
    if (!obj.contains(key)) return;
    T v{};
    read(obj, key, v);
    out = v;
}

template <typename T, std::size_t N>
void read_array(const json& obj, const char* key, std::array<T, N>& out) {
    if (!obj.contains(key)) return;
    std::vector<T> v;
    read(obj, key, v);
    if (v.size() != N) throw ConfigError(std::string("'") + key + "' needs " + std::to_string(N) + " entries");
    std::copy(v.begin(), v.end(), out.begin());
}

std::string lower_name(const json& obj, const char* key) {
    std::string s;
    read(obj, key, s);
    return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(root,
                   {"env", "n", "availability", "availability_mode", "coverage", "misspecified",
                    "pooling", "eps_grid", "delta_grid", "grid_units", "estimators", "pairs", "trials",
                    "bootstrap", "seed", "dm_mode", "ground_truth", "mc_samples", "workers",
                    "reward_range", "out", "format", "two_context", "heartsteps", "sepsis"},
                   "config");
    ExperimentConfig c;
    if (root.contains("env")) {
        const auto kind = env_kind_from_string(lower_name(root, "env"));
        if (!kind) throw ConfigError("unknown env '" + root["env"].dump() + "'");
        c.env = *kind;
    }
    read_opt(root, "n", c.n);
    read_opt(root, "availability", c.availability);
    if (root.contains("availability_mode")) {
        const auto m = lower_name(root, "availability_mode");
        if (m == "per_entry") c.availability_mode = AvailabilityMode::per_entry;
        else if (m == "one_per_sample") c.availability_mode = AvailabilityMode::one_per_sample;
        else throw ConfigError("availability_mode must be per_entry or one_per_sample");
    }
    if (root.contains("coverage")) {
        const auto m = lower_name(root, "coverage");
        if (m == "strict") c.coverage = CoverageMode::strict;
        else if (m == "permissive") c.coverage = CoverageMode::permissive;
        else throw ConfigError("coverage must be strict or permissive");
    }
    read(root, "misspecified", c.misspecified);
    if (root.contains("pooling")) {
        const auto m = lower_name(root, "pooling");
        if (m == "unweighted") c.pooling = Pooling::unweighted;
        else if (m == "weighted") c.pooling = Pooling::weighted;
        else throw ConfigError("pooling must be unweighted or weighted");
    }
    read(root, "eps_grid", c.eps_grid);
    read(root, "delta_grid", c.delta_grid);
    if (root.contains("grid_units")) {
        const auto m = lower_name(root, "grid_units");
        if (m == "scaled") c.grid_units = GridUnits::scaled;
        else if (m == "absolute") c.grid_units = GridUnits::absolute;
        else throw ConfigError("grid_units must be scaled or absolute");
    }
    if (root.contains("estimators")) {
        std::vector<std::string> names;
        read(root, "estimators", names);
        c.estimators.clear();
        for (const auto& n : names) {
            const auto id = estimator_from_string(n);
            if (!id) throw ConfigError("unknown estimator '" + n + "'");
            c.estimators.push_back(*id);
        }
    }
    read(root, "pairs", c.pairs);
    read(root, "trials", c.trials);
    read(root, "bootstrap", c.bootstrap);
    read(root, "seed", c.seed);
    if (root.contains("dm_mode")) {
        const auto m = lower_name(root, "dm_mode");
        if (m == "exact") c.dm_mode = DmMode::exact_d0;
        else if (m == "sample") c.dm_mode = DmMode::sample_contexts;
        else throw ConfigError("dm_mode must be exact or sample");
    }
    if (root.contains("ground_truth")) {
        const auto m = lower_name(root, "ground_truth");
        if (m == "exact") c.ground_truth = GroundTruth::exact;
        else if (m == "monte_carlo") c.ground_truth = GroundTruth::monte_carlo;
        else throw ConfigError("ground_truth must be exact or monte_carlo");
    }
    read(root, "mc_samples", c.mc_samples);
    read(root, "workers", c.workers);
    read_opt(root, "reward_range", c.reward_range);
    read(root, "out", c.out);
    read(root, "format", c.format);

    if (root.contains("two_context")) {
        const auto& o = root["two_context"];
        reject_unknown(o, {"context1_means", "reward_std", "observation_noise"}, "two_context");
        auto& t = c.env_configs.two_context;
        read_array(o, "context1_means", t.context1_means);
        read(o, "reward_std", t.reward_std);
        read(o, "observation_noise", t.observation_noise);
    }
    if (root.contains("heartsteps")) {
        const auto& o = root["heartsteps"];
        reject_unknown(o, {"theta", "decay", "treatment_effect", "bins", "sqrt_steps_low",
                           "sqrt_steps_high", "d0_mean", "d0_sd", "reward_std"},
                       "heartsteps");
        auto& h = c.env_configs.heartsteps;
        read_array(o, "theta", h.theta);
        read(o, "decay", h.decay);
        read(o, "treatment_effect", h.treatment_effect);
        read(o, "bins", h.bins);
        read(o, "sqrt_steps_low", h.sqrt_steps_low);
        read(o, "sqrt_steps_high", h.sqrt_steps_high);
        read(o, "d0_mean", h.d0_mean);
        read(o, "d0_sd", h.d0_sd);
        read(o, "reward_std", h.reward_std);
    }
    if (root.contains("sepsis")) {
        const auto& o = root["sepsis"];
        reject_unknown(o, {"theta", "reward_std", "misspecified_width", "projection_seed", "absorbing_in_d0"},
                       "sepsis");
        auto& s = c.env_configs.sepsis;
        read_array(o, "theta", s.theta);
        read(o, "reward_std", s.reward_std);
        read(o, "misspecified_width", s.misspecified_width);
        read(o, "projection_seed", s.projection_seed);
        read(o, "absorbing_in_d0", s.absorbing_in_d0);
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["env"] = to_string(c.env);
    if (c.n) j["n"] = *c.n;
    if (c.availability) j["availability"] = *c.availability;
    if (c.availability_mode)
        j["availability_mode"] = *c.availability_mode == AvailabilityMode::per_entry ? "per_entry" : "one_per_sample";
    if (c.coverage) j["coverage"] = *c.coverage == CoverageMode::strict ? "strict" : "permissive";
    j["misspecified"] = c.misspecified;
    j["pooling"] = c.pooling == Pooling::unweighted ? "unweighted" : "weighted";
    j["eps_grid"] = c.eps_grid;
    j["delta_grid"] = c.delta_grid;
    j["grid_units"] = c.grid_units == GridUnits::scaled ? "scaled" : "absolute";
    std::vector<std::string> names;
    for (EstimatorId id : c.estimators) names.emplace_back(to_string(id));
    j["estimators"] = names;
    if (!c.pairs.empty()) j["pairs"] = c.pairs;
    j["trials"] = c.trials;
    j["bootstrap"] = c.bootstrap;
    j["seed"] = c.seed;
    j["dm_mode"] = c.dm_mode == DmMode::exact_d0 ? "exact" : "sample";
    j["ground_truth"] = c.ground_truth == GroundTruth::exact ? "exact" : "monte_carlo";
    j["mc_samples"] = c.mc_samples;
    j["workers"] = c.workers;
    if (c.reward_range) j["reward_range"] = *c.reward_range;
    j["out"] = c.out;
    j["format"] = c.format;
    const auto& t = c.env_configs.two_context;
    j["two_context"] = {{"context1_means", t.context1_means}, {"reward_std", t.reward_std},
                        {"observation_noise", t.observation_noise}};
    const auto& h = c.env_configs.heartsteps;
    j["heartsteps"] = {{"theta", h.theta},           {"decay", h.decay},
                       {"treatment_effect", h.treatment_effect}, {"bins", h.bins},
                       {"sqrt_steps_low", h.sqrt_steps_low},     {"sqrt_steps_high", h.sqrt_steps_high},
                       {"d0_mean", h.d0_mean},       {"d0_sd", h.d0_sd},
                       {"reward_std", h.reward_std}};
    const auto& s = c.env_configs.sepsis;
    j["sepsis"] = {{"theta", s.theta}, {"reward_std", s.reward_std},
                   {"misspecified_width", s.misspecified_width},
                   {"projection_seed", s.projection_seed}, {"absorbing_in_d0", s.absorbing_in_d0}};
    return j.dump(2);
}

}  // namespace cfdr
