#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cfdr/annotations.hpp"
#include "cfdr/environments.hpp"
#include "cfdr/estimators.hpp"
#include "cfdr/reward_model.hpp"

namespace cfdr {

enum class GridUnits { scaled, absolute };
enum class GroundTruth { exact, monte_carlo };
enum class Pooling { unweighted, weighted };

struct ExperimentConfig {
    EnvKind env = EnvKind::two_context;
    EnvConfigs env_configs;
    std::optional<Index> n;                       ///< per-environment default when unset
    std::optional<double> availability;
    std::optional<AvailabilityMode> availability_mode;
    std::optional<CoverageMode> coverage;
    bool misspecified = false;
    Pooling pooling = Pooling::unweighted;
    /// Multiples of the mean reward std (bias) and its square (variance) unless absolute.
    std::vector<double> eps_grid{0, 0.25, -0.25, 0.5, -0.5, 1, -1, 2, -2};
    std::vector<double> delta_grid{0, 0.5, 1, 2, 4};
    GridUnits grid_units = GridUnits::scaled;
    std::vector<EstimatorId> estimators{all_estimators.begin(), all_estimators.end()};
    std::vector<Index> pairs;                     ///< empty = whole suite
    Index trials = 100;
    Index bootstrap = 200;
    std::uint64_t seed = 0;
    DmMode dm_mode = DmMode::exact_d0;
    GroundTruth ground_truth = GroundTruth::exact;
    Index mc_samples = 1000;
    unsigned workers = 0;
    std::optional<double> reward_range;           ///< delta analysis scale
    std::string out = "results";
    std::string format = "csv";

    void validate() const;
};

/// One (eps_G, Delta_G) cell in reward units.
struct Cell {
    double eps = 0;
    double delta = 0;
};

/// The experiment with environment, suite and grid resolved.
struct ResolvedExperiment {
    ExperimentConfig config;
    Environment environment;
    std::vector<Index> pairs;
    std::vector<Cell> cells;
    Index n = 0;
    double availability = 1;
    AvailabilityMode availability_mode = AvailabilityMode::per_entry;
    CoverageMode coverage = CoverageMode::strict;

    const RewardModelSpec& model_spec() const {
        return config.misspecified ? environment.misspecified : environment.well_specified;
    }
};

ResolvedExperiment resolve(const ExperimentConfig& config);

/// Estimate or the message of the error that prevented it.
using TrialValue = std::variant<Estimate<double>, std::string>;
using TrialResult = std::map<EstimatorId, TrialValue>;

/// Data and models shared by every cell of one (policy pair, trial).
class TrialContext {
public:
    TrialContext(const ResolvedExperiment& exp, Index pair, Index trial);

    TrialResult evaluate(const Cell& cell, const std::vector<EstimatorId>& estimators) const;

    /// DM^+-IS with the configured model minus the well-specified baseline.
    double delta(const Cell& cell, EstimatorId baseline) const;

    const EvaluationProblem<double>& problem() const { return problem_; }
    const Dataset<double>& eval_data() const { return eval_; }
    const Dataset<double>& model_data() const { return model_data_; }

private:
    struct Augmented {
        AugmentedDataset<double> eval;
        AugmentedDataset<double> model;
    };
    Augmented augment(const Cell& cell) const;
    RewardModel<double> fit(const RewardModelSpec& spec, const AugmentedDataset<double>* aug) const;
    Dataset<double> observed(const Dataset<double>& d, double noise) const;
    AugmentedDataset<double> observed(const AugmentedDataset<double>& d, double noise) const;

    const ResolvedExperiment* exp_;
    Index pair_;
    Index trial_;
    EvaluationProblem<double> problem_;
    WeightScheme<double> scheme_;
    AugmentedBehaviorPolicy<double> plus_;
    Dataset<double> eval_;
    Dataset<double> model_data_;
    std::vector<double> observe_u_;        ///< per model-data sample: corruption draw
    std::vector<Index> observe_context_;   ///< per model-data sample: replacement context
    RewardModel<double> model_;            ///< R-hat on factual model data
};

TrialResult run_trial(const ResolvedExperiment& exp, Index pair, const Cell& cell, Index trial);

struct GridRow {
    std::string env;
    std::string pi_b;
    std::string pi_e;
    std::string estimator;
    double eps = 0;
    double delta = 0;
    double rmse = 0;
    double bias = 0;
    double std = 0;
    double se_rmse = 0;
    double se_bias = 0;
    double se_std = 0;
    Index trials = 0;

    bool operator==(const GridRow&) const = default;
};

struct GridResult {
    std::vector<GridRow> rows;
    std::vector<std::string> failures;  ///< one line per (pair, cell, estimator) with errors

    /// Row for the averaged suite ("avg") when pi_b is not given.
    const GridRow* find(const std::string& estimator, double eps, double delta,
                        const std::string& pi_b = "avg") const;
};

/// Ground truth v(pi_e) for one pair.
double ground_truth(const ResolvedExperiment& exp, Index pair);

GridResult run_grid(const ExperimentConfig& config);

struct DeltaRow {
    std::string env;
    double eps = 0;
    double delta = 0;
    double mean_delta = 0;
    double var_delta = 0;
    std::string baseline;
    Index samples = 0;
};

struct DeltaResult {
    std::vector<DeltaRow> rows;
    double reward_range = 0;
};

DeltaResult delta_analysis(const ExperimentConfig& config);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Configuration I/O.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& config);

// Result I/O: CSV columns in GridRow field order; JSON array of row objects.
std::string grid_to_csv(const GridResult& result);
std::string grid_to_json(const GridResult& result);
GridResult grid_from_csv(const std::string& text);
GridResult grid_from_json(const std::string& text);
std::string delta_to_csv(const DeltaResult& result);
void export_grid(const GridResult& result, const std::string& path, const std::string& format);
void export_delta(const DeltaResult& result, const std::string& path);
GridResult import_grid(const std::string& path);

/// 17 significant digits, so parse_double(format_double(v)) == v.
std::string format_double(double v);
double parse_double(const std::string& text);

}  // namespace cfdr
