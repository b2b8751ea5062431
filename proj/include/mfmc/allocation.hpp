#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "mfmc/pilot.hpp"
#include "mfmc/types.hpp"

namespace mfmc {

/// Per-evaluation cost of every model; w[0] is the reference unit.
struct CostModel {
  std::vector<double> w;

  explicit CostModel(std::vector<double> costs);
  Index models() const noexcept { return static_cast<Index>(w.size()); }
  CostModel scaled(double factor) const;
};

/// Output-weighted aggregation of per-component moments:
///   sigma_bar_sq   = sum_j sigma_1(x_j)^2 |Omega_j|
///   rho_bar_sq[i]  = sum_j rho_{1,i}(x_j)^2 sigma_1(x_j)^2 |Omega_j| / sigma_bar_sq
/// Degenerate components are left out.
struct AggregatedStats {
  double sigma_bar_sq = 0.0;
  std::vector<double> rho_bar_sq;
  PilotStats source;
  std::vector<double> weights;

  Index models() const noexcept { return static_cast<Index>(rho_bar_sq.size()); }
};

/// Empty `weights` means all ones. Throws DegenerateStatsError when no component has
/// high-fidelity variance.
AggregatedStats aggregate_vector_stats(const PilotStats& stats, std::span<const double> weights = {});

struct AllocationOptions {
  /// Lower bound on m_1 (2 for statistics such as the variance).
  Index min_high_fidelity_samples = 1;
};

struct AllocationPlan {
  std::vector<Index> m;         // 0 for models left out
  std::vector<bool> retained;
  RowMatrix alpha;              // K x C; row 0 is 1, dropped rows are 0
  std::vector<double> r;        // real ratios m_i / m_1 over retained models
  std::vector<double> m_real;   // continuous optimum before rounding
  double budget = 0.0;
  double budget_used = 0.0;
  double predicted_mse = 0.0;

  Index models() const noexcept { return static_cast<Index>(m.size()); }
  std::vector<Index> retained_indices() const;
};

nlohmann::json to_json(const AllocationPlan& plan);
AllocationPlan allocation_plan_from_json(const nlohmann::json& j);

/// Keeps model 0 and a subsequence of the rest along which rho^2 strictly decreases and
/// the cost-ratio conditions hold, so that every optimal ratio r_i is real and increasing.
/// A model that is both costlier and no better correlated than a later one is dropped; on
/// equal rho^2 the cheaper model stays.
std::vector<bool> admissible_models(std::span<const double> rho_sq, std::span<const double> costs);

/// Admissible subset (always containing model 0) with the smallest variance-reduction
/// ratio; models that would raise the error above plain Monte Carlo are left out.
std::vector<bool> select_models(std::span<const double> rho_sq, std::span<const double> costs);

/// Minimizes the predicted MSE under sum_i w_i m_i <= budget. Throws BudgetError when the
/// budget cannot buy the minimum number of high-fidelity samples.
AllocationPlan optimal_allocation(const AggregatedStats& stats, const CostModel& costs, double budget,
                                  const AllocationOptions& options = {});

/// Scalar or vector stats with the given output weights (all ones when empty).
AllocationPlan optimal_allocation(const PilotStats& stats, const CostModel& costs, double budget,
                                  const AllocationOptions& options = {},
                                  std::span<const double> weights = {});

/// Weighted MSE of the estimator for the plan's m and alpha (any alpha, not only optimal).
double predicted_mse(const AllocationPlan& plan, const PilotStats& stats,
                     std::span<const double> weights = {});
double predicted_mse(const AllocationPlan& plan, const AggregatedStats& stats);

/// MSE with optimal alpha as a function of the counts alone, over the models with m > 0.
double optimal_alpha_mse(std::span<const Index> m, const AggregatedStats& stats);

/// (sum_i sqrt((w_i / w_1)(rho^2_i - rho^2_{i+1})))^2 over the given models (all when the
/// mask is empty). Requires rho^2 nonincreasing over them.
double variance_reduction_ratio(const AggregatedStats& stats, const CostModel& costs,
                                const std::vector<bool>& models = {});
double variance_reduction_ratio(const PilotStats& stats, const CostModel& costs);

/// Budget at which the optimal estimator reaches integrated MSE epsilon^2, computed over the
/// selected models. Includes the w_1 factor so that K = 1 gives w_1 sigma^2 / epsilon^2.
double budget_for_tolerance(const AggregatedStats& stats, const CostModel& costs, double epsilon);

}  // namespace mfmc
