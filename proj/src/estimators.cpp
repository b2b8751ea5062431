#include "mfmc/estimators.hpp"

#include <cmath>

#include "mfmc/numeric.hpp"

namespace mfmc {

namespace {

void check_consistency(const NestedEvaluations& evals, const AllocationPlan& plan, const StatisticPlugin& stat) {
  if (evals.models() != plan.models()) {
    throw std::invalid_argument("estimator: plan has " + std::to_string(plan.models()) +
                                " models, evaluations have " + std::to_string(evals.models()));
  }
  if (evals.blocks() < stat.blocks) {
    throw std::invalid_argument("estimator: " + stat.label + " needs " + std::to_string(stat.blocks) +
                                " evaluation blocks");
  }
  validate_counts(plan.m, plan.models());
  if (plan.alpha.rows() != plan.models()) throw std::invalid_argument("estimator: alpha has wrong row count");
  for (Index i = 0; i < plan.models(); ++i) {
    const auto need = plan.m[static_cast<std::size_t>(i)];
    if (need > evals.m[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("estimator: model " + std::to_string(i) + " has " +
                                  std::to_string(evals.m[static_cast<std::size_t>(i)]) +
                                  " evaluations, plan needs " + std::to_string(need));
    }
  }
  if (plan.m[0] < stat.min_samples) {
    throw std::invalid_argument("estimator: " + stat.label + " needs at least " +
                                std::to_string(stat.min_samples) + " samples per prefix, m_1 = " +
                                std::to_string(plan.m[0]));
  }
}

double plan_cost(const NestedEvaluations& evals, const AllocationPlan& plan, CostConvention convention) {
  const double per_row = convention == CostConvention::per_evaluation ? static_cast<double>(evals.blocks()) : 1.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < plan.m.size(); ++i) {
    cost += evals.costs[i] * static_cast<double>(plan.m[i]) * per_row;
  }
  return cost;
}

RowVector alpha_row(const AllocationPlan& plan, Index model, Index components) {
  if (plan.alpha.cols() == components) return plan.alpha.row(model);
  if (plan.alpha.cols() == 1) return RowVector::Constant(components, plan.alpha(model, 0));
  throw std::invalid_argument("estimator: alpha has " + std::to_string(plan.alpha.cols()) +
                              " columns for " + std::to_string(components) + " statistic components");
}

}  // namespace

EstimateReport mfmc_statistic(const NestedEvaluations& evals, const AllocationPlan& plan,
                              const StatisticPlugin& stat, const Bridge* bridge, CostConvention convention) {
  check_consistency(evals, plan, stat);
  if (bridge && bridge->models() != evals.models()) {
    throw std::invalid_argument("estimator: bridge covers " + std::to_string(bridge->models()) + " models");
  }
  const auto model_blocks = [&](Index i) {
    const auto& raw = evals.outputs[static_cast<std::size_t>(i)];
    const Index rows = plan.m[static_cast<std::size_t>(i)];
    std::vector<RowMatrix> out;
    out.reserve(raw.size());
    for (const auto& b : raw) out.push_back(bridge ? bridge->apply(i, b, rows) : RowMatrix(b.topRows(rows)));
    return out;
  };

  const auto high = model_blocks(0);
  RowVector value = stat.estimate(high, plan.m[0]);
  Index prev = plan.m[0];
  for (Index i = 1; i < plan.models(); ++i) {
    const Index mi = plan.m[static_cast<std::size_t>(i)];
    if (mi == 0) continue;
    const auto blocks = model_blocks(i);
    const RowVector diff = stat.estimate(blocks, mi) - stat.estimate(blocks, prev);
    value += alpha_row(plan, i, diff.size()).cwiseProduct(diff);
    prev = mi;
  }

  EstimateReport report;
  report.statistic = stat.label;
  report.values.assign(value.begin(), value.end());
  report.predicted_mse = plan.predicted_mse;
  report.realized_cost = plan_cost(evals, plan, convention);
  report.plan = plan;
  return report;
}

EstimateReport mfmc_expectation(const NestedEvaluations& evals, const AllocationPlan& plan,
                                CostConvention convention) {
  return mfmc_statistic(evals, plan, expectation_statistic(), nullptr, convention);
}

EstimateReport mfmc_nonlinear(const NestedEvaluations& evals, const AllocationPlan& plan, const Bridge& bridge,
                              CostConvention convention) {
  return mfmc_statistic(evals, plan, expectation_statistic(), &bridge, convention);
}

double single_level_variance(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("single_level_variance: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  const double mean = pairwise_sum(samples) / n;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sq[i] = (samples[i] - mean) * (samples[i] - mean);
  return pairwise_sum(sq) / (n - 1.0);
}

SobolIndexEstimate sobol_single_level(std::span<const double> on_base, std::span<const double> on_second,
                                      std::span<const double> on_mixed) {
  const auto m = on_base.size();
  if (on_second.size() != m || on_mixed.size() != m) {
    throw std::invalid_argument("sobol_single_level: blocks differ in length");
  }
  if (m < 2) throw std::invalid_argument("sobol_single_level: need at least 2 samples");
  const double md = static_cast<double>(m);
  const double mean = pairwise_sum(on_base) / md;
  const double mean2 = pairwise_sum(on_second) / md;
  const double var = single_level_variance(on_base);
  const double var2 = single_level_variance(on_second);

  std::vector<double> prod(m), jansen(m);
  for (std::size_t i = 0; i < m; ++i) {
    prod[i] = on_base[i] * on_mixed[i];
    const double d = on_second[i] - on_mixed[i];
    jansen[i] = d * d;
  }
  const double centre = 0.5 * (mean + mean2);
  SobolIndexEstimate out;
  out.main = 2.0 / (2.0 * md - 1.0) * (pairwise_sum(prod) - md * centre * centre + 0.25 * (var + var2));
  out.total = pairwise_sum(jansen) / (2.0 * md);
  out.variance = var;
  out.normalized_main = var > 0.0 ? out.main / var : std::numeric_limits<double>::quiet_NaN();
  out.normalized_total = var > 0.0 ? out.total / var : std::numeric_limits<double>::quiet_NaN();
  return out;
}

nlohmann::json to_json(const EstimateReport& report) {
  nlohmann::json j{{"statistic", report.statistic},
                   {"values", report.values},
                   {"predicted_mse", report.predicted_mse},
                   {"realized_cost", report.realized_cost},
                   {"pilot_cost", report.pilot_cost},
                   {"pilot_size", report.pilot_size},
                   {"seed", report.seed},
                   {"plan", to_json(report.plan)}};
  if (!report.normalized.empty()) j["normalized"] = report.normalized;
  return j;
}

}  // namespace mfmc
