#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfmc/allocation.hpp"
#include "mfmc/regression.hpp"
#include "mfmc/sampling.hpp"
#include "mfmc/statistic.hpp"

namespace mfmc {

struct EstimateReport {
  std::string statistic;
  std::vector<double> values;
  /// Sobol families: indices divided by the multifidelity variance estimate.
  std::vector<double> normalized;
  double predicted_mse = 0.0;
  double realized_cost = 0.0;
  double pilot_cost = 0.0;
  Index pilot_size = 0;
  std::uint64_t seed = 0;
  AllocationPlan plan;
};

nlohmann::json to_json(const EstimateReport& report);

/// Telescoping control-variate estimate of the mean of every output component.
EstimateReport mfmc_expectation(const NestedEvaluations& evals, const AllocationPlan& plan,
                                CostConvention convention = CostConvention::per_evaluation);

/// Generic multifidelity estimate q_h = q^(1)_{m_1} + sum_i alpha_i (q^(i)_{m_i} - q^(i)_{m_prev}),
/// where m_prev is the count of the previous model kept in the plan. With a bridge, the
/// low-fidelity outputs pass through g_i before the statistic is applied.
EstimateReport mfmc_statistic(const NestedEvaluations& evals, const AllocationPlan& plan,
                              const StatisticPlugin& stat, const Bridge* bridge = nullptr,
                              CostConvention convention = CostConvention::per_evaluation);

/// Expectation with the regression bridge: raw high-fidelity mean plus g-mapped corrections.
EstimateReport mfmc_nonlinear(const NestedEvaluations& evals, const AllocationPlan& plan,
                              const Bridge& bridge,
                              CostConvention convention = CostConvention::per_evaluation);

/// (1/(m-1)) sum (psi_i - mean)^2. Throws std::invalid_argument for fewer than 2 samples.
double single_level_variance(std::span<const double> samples);

struct SobolIndexEstimate {
  double main = 0.0;   // V_j
  double total = 0.0;  // T_j
  double variance = 0.0;
  double normalized_main = 0.0;
  double normalized_total = 0.0;
};

/// Single-level main and total effect of one coordinate from evaluations on s, s' and y^j.
SobolIndexEstimate sobol_single_level(std::span<const double> on_base,
                                      std::span<const double> on_second,
                                      std::span<const double> on_mixed);

}  // namespace mfmc
