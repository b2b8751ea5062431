#pragma once

#include <functional>
#include <span>
#include <string>

#include "mfmc/types.hpp"

namespace mfmc {

/// Evaluation blocks of one model: {values} for plain statistics, {s, s', y^1..y^d} for
/// Sobol families. Each block has one row per nested sample.
using ModelBlocks = std::span<const RowMatrix>;

/// A single-level statistic and its per-sample contribution q.
///
/// `estimate(blocks, m)` is the single-level estimator on the first m rows; it must be
/// invariant under permutations of those rows. `contributions(blocks, n)` returns the n x c
/// matrix of per-sample values q whose sample moments drive the allocation.
struct StatisticPlugin {
  std::string label;
  Index min_samples = 1;
  Index blocks = 1;
  std::function<RowVector(ModelBlocks, Index)> estimate;
  std::function<RowMatrix(ModelBlocks, Index)> contributions;
};

StatisticPlugin expectation_statistic();

/// Unbiased variance; contribution q = (psi - pilot mean)^2 with each model's own mean.
StatisticPlugin variance_statistic();

/// Unnormalized main-effect indices V_1..V_d of output component `component`.
/// Contribution: (psi(s) - c)(psi(y^j) - c) with c the mean over s and s'.
StatisticPlugin sobol_main_statistic(Index dimension, Index component = 0);

/// Unnormalized total-effect indices T_1..T_d; contribution 0.5 (psi(s') - psi(y^j))^2.
StatisticPlugin sobol_total_statistic(Index dimension, Index component = 0);

/// "expectation", "variance", "sobol-main", "sobol-total". Throws std::invalid_argument
/// with "unknown statistic" otherwise.
StatisticPlugin statistic_by_name(const std::string& name, Index dimension);

bool is_sobol_statistic(const std::string& name);

}  // namespace mfmc
