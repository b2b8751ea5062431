#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfmc/regression.hpp"
#include "mfmc/sampling.hpp"
#include "mfmc/statistic.hpp"
#include "mfmc/types.hpp"

namespace mfmc {

enum class StatsKind { raw, q_transformed, g_transformed };

std::string to_string(StatsKind kind);
StatsKind stats_kind_from_string(const std::string& s);

/// Per-model, per-component standard deviations and correlations with the high-fidelity
/// model. Row 0 is the high-fidelity model (rho == 1). A component whose high-fidelity
/// deviation is zero is flagged degenerate; its low-fidelity correlations are NaN.
struct PilotStats {
  StatsKind kind = StatsKind::raw;
  std::string statistic = "expectation";
  Index pilot_size = 0;
  RowMatrix sigma;  // K x C
  RowMatrix rho;    // K x C
  std::vector<bool> degenerate;

  Index models() const noexcept { return sigma.rows(); }
  Index components() const noexcept { return sigma.cols(); }

  /// Builds stats from known moments (e.g. closed forms). Clamps rho to [-1, 1], forces
  /// row 0 of rho to 1 and flags degenerate components.
  static PilotStats from_moments(RowMatrix sigma, RowMatrix rho, StatsKind kind = StatsKind::raw,
                                 std::string statistic = "expectation", Index pilot_size = 0);
};

/// Sample deviations of values[i] and sample correlations of values[i] with values[0], all
/// over the same rows. The common core of every estimate_*_stats variant.
PilotStats stats_from_samples(std::span<const RowMatrix> values, StatsKind kind,
                              std::string statistic);

/// Raw sigma_i and rho_{1,i} from the first N rows of every model (N >= 3).
PilotStats estimate_moment_stats(const NestedEvaluations& evals, Index n);

/// sigma^q and rho^q from per-sample contributions q(psi^(i)(s_n)) on the first N rows.
PilotStats estimate_q_stats(const NestedEvaluations& evals, const StatisticPlugin& stat, Index n);

/// sigma^g and rho^g: the high-fidelity row keeps raw outputs, low-fidelity rows are mapped
/// through g_i before the statistic's contributions are taken. `g` must be fitted on
/// samples disjoint from these N rows.
PilotStats estimate_g_stats(const NestedEvaluations& evals, const Bridge& g, Index n,
                            const StatisticPlugin& stat = expectation_statistic());

nlohmann::json to_json(const PilotStats& stats);
PilotStats pilot_stats_from_json(const nlohmann::json& j);

}  // namespace mfmc
