#pragma once

#include <functional>
#include <span>

#include "mfmc/types.hpp"

namespace mfmc {

/// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values);

/// Column means over the first `rows` rows of `m`, each computed by pairwise summation.
RowVector prefix_column_mean(const RowMatrix& m, Index rows);

/// Unbiased column variances over the first `rows` rows (two-pass, pairwise sums).
RowVector prefix_column_variance(const RowMatrix& m, Index rows);

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index is visited once;
/// the first exception thrown by any worker is rethrown on the caller's thread.
void parallel_for(Index n, unsigned jobs, const std::function<void(Index)>& body);

}  // namespace mfmc
