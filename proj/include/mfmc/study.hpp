#pragma once

#include <cstdint>
#include <limits>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfmc/allocation.hpp"
#include "mfmc/estimators.hpp"
#include "mfmc/hierarchy.hpp"
#include "mfmc/pilot.hpp"
#include "mfmc/regression.hpp"
#include "mfmc/sampling.hpp"

namespace mfmc {

enum class EstimatorMode { linear, nonlinear };

std::string to_string(EstimatorMode mode);
EstimatorMode estimator_mode_from_string(const std::string& s);

struct PipelineSettings {
  Index pilot_size = 100;
  /// Regression training samples for nonlinear mode. 0 splits pilot_size evenly between
  /// training and correlation estimation.
  Index training_size = 0;
  bool fold_pilot_cost = false;
  CostConvention sobol_cost = CostConvention::per_evaluation;
  /// |Omega_j| per output component; empty uses the hierarchy's weights.
  std::vector<double> output_weights;
  /// Weights over the d indices of a Sobol family; empty means uniform.
  std::vector<double> index_weights;
  unsigned jobs = 1;
};

/// Everything the estimation phase needs from the pilot phase.
struct PilotResult {
  std::string statistic;
  EstimatorMode mode = EstimatorMode::linear;
  PilotStats stats;
  AggregatedStats aggregated;
  std::optional<Bridge> bridge;
  /// Sobol families only: per-model alpha of the variance statistic, used to normalize.
  RowMatrix variance_alpha;
  double cost = 0.0;
  Index correlation_rows = 0;
  Index training_rows = 0;
};

/// Costs per nested sample row as charged by the allocation for this statistic.
CostModel effective_costs(const ModelHierarchy& hierarchy, const std::string& statistic,
                          const PipelineSettings& settings);

PilotResult run_pilot(const ModelHierarchy& hierarchy, const std::string& statistic, EstimatorMode mode,
                      std::uint64_t seed, const PipelineSettings& settings);

/// Allocates `budget` (absolute cost units) from the pilot, evaluates fresh nested samples
/// drawn from `seed`, and combines them.
EstimateReport estimate_with_pilot(const ModelHierarchy& hierarchy, const PilotResult& pilot, double budget,
                                   std::uint64_t seed, const PipelineSettings& settings);

struct PipelineRun {
  PilotResult pilot;
  EstimateReport report;
};

PipelineRun run_pipeline(const ModelHierarchy& hierarchy, const std::string& statistic, EstimatorMode mode,
                         double budget, std::uint64_t seed, const PipelineSettings& settings);

/// Seed of replicate r under a study seed.
std::uint64_t replicate_seed(std::uint64_t seed, Index replicate);

/// Plain Monte Carlo reference values of the high-fidelity model from `samples` draws.
nlohmann::json make_reference(const ModelHierarchy& hierarchy, const std::vector<std::string>& statistics,
                              Index samples, std::uint64_t seed, unsigned jobs = 1);

struct StudyConfig {
  std::string hierarchy = "ishigami";
  Index field_points = 16;
  std::vector<double> costs;  // empty: hierarchy defaults
  std::vector<std::string> statistics{"expectation"};
  std::vector<std::string> modes{"linear"};
  Index pilot_size = 100;
  Index training_size = 0;
  std::vector<double> budgets;
  std::string budget_unit = "hf";  // "hf": multiples of w_1; "absolute": cost units
  std::optional<double> tolerance;
  Index replicates = 100;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::vector<double> output_weights;
  std::vector<double> index_weights;
  bool fold_pilot_cost = false;
  std::string sobol_cost = "per-evaluation";
  unsigned jobs = 1;
  std::string reference_file;
};

nlohmann::json to_json(const StudyConfig& config);
StudyConfig study_config_from_json(const nlohmann::json& j);
StudyConfig load_study_config(const std::filesystem::path& path);
/// "key=value"; the value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(StudyConfig& config, const std::string& assignment);
/// Throws std::invalid_argument naming the problem.
void validate(const StudyConfig& config);

ModelHierarchy make_hierarchy(const StudyConfig& config);
PipelineSettings make_settings(const StudyConfig& config);

/// Reference values for a statistic: analytic when available, otherwise from the config's
/// reference file. nullopt when neither exists.
std::optional<std::vector<double>> reference_values(const ModelHierarchy& hierarchy, const StudyConfig& config,
                                                    const std::string& statistic);

struct ReplicateRecord {
  Index replicate = 0;
  double budget_p = 0.0;
  EstimateReport report;
  /// Reported values: normalized indices for Sobol families, raw values otherwise.
  std::vector<double> values;
  /// Predicted MSE on the scale of `values`.
  double predicted_mse = 0.0;
  PilotStats pilot;
  std::vector<double> rho_bar_sq;
};

struct StudyCell {
  std::string statistic;
  std::string mode;
  Index budget_index = 0;
  std::vector<ReplicateRecord> records;  // ordered by replicate
};

struct StudyResults {
  StudyConfig config;
  std::vector<StudyCell> cells;
};

StudyResults compute_study(const StudyConfig& config);

struct CellSummary {
  std::vector<double> mean;
  std::vector<double> standard_error;
  std::optional<std::vector<double>> reference;
  double empirical_mse = std::numeric_limits<double>::quiet_NaN();
  double relative_mse = std::numeric_limits<double>::quiet_NaN();
  double predicted_mse = 0.0;
  double total_realized_cost = 0.0;
  double total_pilot_cost = 0.0;
  double mean_budget_p = 0.0;
};

CellSummary summarize(const StudyCell& cell, const ModelHierarchy& hierarchy, const StudyConfig& config);

/// Writes allocation.txt, allocation.csv, estimates_<mode>.csv and summary.json.
void write_study_outputs(const StudyResults& results);
/// Writes sweep.csv; requires references for every statistic.
void write_sweep_csv(const StudyResults& results);

StudyResults run_study(const StudyConfig& config);
StudyResults replicate_sweep(const StudyConfig& config);

/// Allocation table (model, m_k, alpha_k, rho_k) averaged over the cell's replicates.
std::string allocation_table(const StudyCell& cell, const ModelHierarchy& hierarchy);

/// printf("%.17g") formatting used for every float written to CSV.
std::string format_double(double v);

}  // namespace mfmc
