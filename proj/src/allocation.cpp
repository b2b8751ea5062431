#include "mfmc/allocation.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numeric>

namespace mfmc {

namespace {

// Floor on 1 - rho^2 of the first low-fidelity model so that perfectly correlated models
// give huge but finite ratios.
constexpr double kMinDecorrelation = 1e-14;
constexpr double kBudgetSlack = 1e-12;

std::vector<double> unit_weights_if_empty(std::span<const double> weights, Index n) {
  if (weights.empty()) return std::vector<double>(static_cast<std::size_t>(n), 1.0);
  if (static_cast<Index>(weights.size()) != n) {
    throw std::invalid_argument("output weights: expected " + std::to_string(n) + " entries");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("output weights must be strictly positive");
  }
  return {weights.begin(), weights.end()};
}

double plan_cost(std::span<const Index> m, std::span<const double> w) {
  double c = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) c += w[i] * static_cast<double>(m[i]);
  return c;
}

}  // namespace

CostModel::CostModel(std::vector<double> costs) : w(std::move(costs)) {
  if (w.empty()) throw std::invalid_argument("cost model needs at least one model");
  for (double c : w) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("model costs must be positive");
  }
}

CostModel CostModel::scaled(double factor) const {
  std::vector<double> out = w;
  for (double& c : out) c *= factor;
  return CostModel(std::move(out));
}

AggregatedStats aggregate_vector_stats(const PilotStats& stats, std::span<const double> weights) {
  const auto w = unit_weights_if_empty(weights, stats.components());
  AggregatedStats agg;
  agg.source = stats;
  agg.weights = w;
  agg.rho_bar_sq.assign(static_cast<std::size_t>(stats.models()), 0.0);
  std::vector<double> s1(static_cast<std::size_t>(stats.components()), 0.0);
  for (Index j = 0; j < stats.components(); ++j) {
    if (stats.degenerate[static_cast<std::size_t>(j)]) continue;
    s1[static_cast<std::size_t>(j)] = stats.sigma(0, j) * stats.sigma(0, j) * w[static_cast<std::size_t>(j)];
    agg.sigma_bar_sq += s1[static_cast<std::size_t>(j)];
  }
  if (!(agg.sigma_bar_sq > 0.0)) {
    throw DegenerateStatsError("all output components have zero high-fidelity variance");
  }
  // Weighting by shares keeps a single component's rho^2 bit-exact.
  for (Index j = 0; j < stats.components(); ++j) {
    const double share = s1[static_cast<std::size_t>(j)] / agg.sigma_bar_sq;
    if (share == 0.0) continue;
    for (Index i = 0; i < stats.models(); ++i) {
      agg.rho_bar_sq[static_cast<std::size_t>(i)] += stats.rho(i, j) * stats.rho(i, j) * share;
    }
  }
  for (auto& r : agg.rho_bar_sq) r = std::clamp(r, 0.0, 1.0);
  agg.rho_bar_sq[0] = 1.0;
  return agg;
}

std::vector<Index> AllocationPlan::retained_indices() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < retained.size(); ++i) {
    if (retained[i]) out.push_back(static_cast<Index>(i));
  }
  return out;
}

std::vector<bool> admissible_models(std::span<const double> rho_sq, std::span<const double> costs) {
  if (rho_sq.size() != costs.size() || rho_sq.empty()) {
    throw std::invalid_argument("admissible_models: rho^2 and costs must have one entry per model");
  }
  std::vector<std::size_t> kept{0};
  for (std::size_t i = 1; i < rho_sq.size(); ++i) {
    if (!(rho_sq[i] > 0.0)) continue;
    while (kept.size() > 1 && rho_sq[i] >= rho_sq[kept.back()] && costs[i] <= costs[kept.back()]) {
      kept.pop_back();
    }
    if (kept.size() > 1 && rho_sq[i] >= rho_sq[kept.back()]) continue;
    kept.push_back(i);
  }
  // Cost-ratio conditions; drop the offending model until all hold.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 1; k < kept.size(); ++k) {
      const double prev = rho_sq[kept[k - 1]];
      const double cur = std::min(rho_sq[kept[k]], 1.0);
      const double next = k + 1 < kept.size() ? rho_sq[kept[k + 1]] : 0.0;
      const double lhs = costs[kept[k - 1]] / costs[kept[k]];
      const double gap = cur - next;
      const double rhs = gap > 0.0 ? (prev - cur) / gap : std::numeric_limits<double>::infinity();
      if (!(lhs > rhs)) {
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(k));
        changed = true;
        break;
      }
    }
  }
  std::vector<bool> mask(rho_sq.size(), false);
  for (auto i : kept) mask[i] = true;
  return mask;
}

std::vector<bool> select_models(std::span<const double> rho_sq, std::span<const double> costs) {
  const auto admissible = admissible_models(rho_sq, costs);
  std::vector<std::size_t> pool;
  for (std::size_t i = 1; i < admissible.size(); ++i) {
    if (admissible[i]) pool.push_back(i);
  }
  if (pool.size() > 20) return admissible;

  auto ratio = [&](const std::vector<std::size_t>& seq) {
    double sum = 0.0;
    for (std::size_t p = 0; p < seq.size(); ++p) {
      const double cur = std::min(rho_sq[seq[p]], 1.0);
      const double next = p + 1 < seq.size() ? rho_sq[seq[p + 1]] : 0.0;
      sum += std::sqrt(costs[seq[p]] / costs[0] * (cur - next));
    }
    return sum * sum;
  };
  std::vector<bool> best(rho_sq.size(), false);
  best[0] = true;
  double best_ratio = 1.0;
  for (std::uint64_t bits = 1; bits < (std::uint64_t{1} << pool.size()); ++bits) {
    std::vector<std::size_t> seq{0};
    std::vector<double> r{rho_sq[0]}, w{costs[0]};
    for (std::size_t b = 0; b < pool.size(); ++b) {
      if (!(bits >> b & 1U)) continue;
      seq.push_back(pool[b]);
      r.push_back(rho_sq[pool[b]]);
      w.push_back(costs[pool[b]]);
    }
    const auto mask = admissible_models(r, w);
    if (std::find(mask.begin(), mask.end(), false) != mask.end()) continue;
    const double v = ratio(seq);
    if (v < best_ratio) {
      best_ratio = v;
      std::fill(best.begin(), best.end(), false);
      for (auto i : seq) best[i] = true;
    }
  }
  return best;
}

double optimal_alpha_mse(std::span<const Index> m, const AggregatedStats& stats) {
  if (m.empty() || m[0] < 1) throw std::invalid_argument("predicted MSE: m_1 must be >= 1");
  double mse = 1.0 / static_cast<double>(m[0]);
  Index prev = m[0];
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    mse -= (1.0 / static_cast<double>(prev) - 1.0 / static_cast<double>(m[i])) * stats.rho_bar_sq[i];
    prev = m[i];
  }
  return stats.sigma_bar_sq * mse;
}

namespace {

// Floors the continuous optimum, repairs ordering and budget, then spends what is left on
// the unit increments with the best MSE decrease per unit cost.
std::vector<Index> round_allocation(const std::vector<double>& m_real, std::vector<bool>& retained,
                                    const AggregatedStats& stats, const CostModel& costs,
                                    double budget, Index min_first) {
  const auto k = m_real.size();
  const auto& w = costs.w;
  const double limit = budget * (1.0 + kBudgetSlack);
  std::vector<Index> m(k, 0);
  Index prev = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!retained[i]) continue;
    m[i] = static_cast<Index>(std::floor(m_real[i]));
    if (i == 0) m[i] = std::max(m[i], min_first);
    m[i] = std::max(m[i], prev);
    prev = m[i];
  }
  auto drop_flat_levels = [&] {
    Index p = m[0];
    for (std::size_t i = 1; i < k; ++i) {
      if (!retained[i]) continue;
      if (m[i] <= p) {
        retained[i] = false;
        m[i] = 0;
      } else {
        p = m[i];
      }
    }
  };
  drop_flat_levels();

  while (plan_cost(m, w) > limit) {
    std::size_t last = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (retained[i]) last = i;
    }
    if (last == 0) throw BudgetError("budget cannot cover the minimum high-fidelity samples");
    Index before = m[0];
    for (std::size_t i = 1; i < last; ++i) {
      if (retained[i]) before = m[i];
    }
    const double excess = plan_cost(m, w) - budget;
    const auto cut = static_cast<Index>(std::ceil(excess / w[last]));
    if (m[last] - cut > before) {
      m[last] -= cut;
    } else {
      retained[last] = false;
      m[last] = 0;
    }
  }

  for (;;) {
    const double left = budget - plan_cost(m, w);
    const double base = optimal_alpha_mse(m, stats);
    double best_gain = 0.0;
    std::size_t best = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (!retained[i] || w[i] > left * (1.0 + kBudgetSlack)) continue;
      std::size_t next = k;
      for (std::size_t n = i + 1; n < k; ++n) {
        if (retained[n]) {
          next = n;
          break;
        }
      }
      if (next < k && m[i] + 1 >= m[next]) continue;
      ++m[i];
      const double gain = (base - optimal_alpha_mse(m, stats)) / w[i];
      --m[i];
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best == k) break;
    ++m[best];
  }
  return m;
}

}  // namespace

AllocationPlan optimal_allocation(const AggregatedStats& stats, const CostModel& costs, double budget,
                                  const AllocationOptions& options) {
  const auto k = static_cast<std::size_t>(stats.models());
  if (static_cast<std::size_t>(costs.models()) != k) {
    throw std::invalid_argument("allocation: cost model and stats disagree on the number of models");
  }
  const Index min_first = std::max<Index>(1, options.min_high_fidelity_samples);
  const auto& w = costs.w;
  if (!(budget >= w[0] * static_cast<double>(min_first))) {
    throw BudgetError("budget " + std::to_string(budget) + " is below the cost of " +
                      std::to_string(min_first) + " high-fidelity sample(s)");
  }

  AllocationPlan plan;
  plan.budget = budget;
  plan.retained = select_models(stats.rho_bar_sq, w);
  std::vector<std::size_t> seq;
  for (std::size_t i = 0; i < k; ++i) {
    if (plan.retained[i]) seq.push_back(i);
  }

  plan.r.assign(k, 0.0);
  plan.r[0] = 1.0;
  if (seq.size() > 1) {
    const double decorrelation = std::max(1.0 - std::min(stats.rho_bar_sq[seq[1]], 1.0), kMinDecorrelation);
    for (std::size_t p = 1; p < seq.size(); ++p) {
      const double cur = std::min(stats.rho_bar_sq[seq[p]], 1.0);
      const double next = p + 1 < seq.size() ? stats.rho_bar_sq[seq[p + 1]] : 0.0;
      plan.r[seq[p]] = std::sqrt(w[0] * (cur - next) / (w[seq[p]] * decorrelation));
    }
  }
  double weighted = 0.0;
  for (auto i : seq) weighted += w[i] * plan.r[i];
  plan.m_real.assign(k, 0.0);
  for (auto i : seq) plan.m_real[i] = budget * plan.r[i] / weighted;

  plan.m = round_allocation(plan.m_real, plan.retained, stats, costs, budget, min_first);
  plan.budget_used = plan_cost(plan.m, w);

  const PilotStats& src = stats.source;
  plan.alpha = RowMatrix::Zero(static_cast<Index>(k), src.components());
  plan.alpha.row(0).setOnes();
  for (std::size_t i = 1; i < k; ++i) {
    if (!plan.retained[i]) continue;
    for (Index j = 0; j < src.components(); ++j) {
      const double si = src.sigma(static_cast<Index>(i), j);
      if (src.degenerate[static_cast<std::size_t>(j)] || si == 0.0) continue;
      plan.alpha(static_cast<Index>(i), j) = src.rho(static_cast<Index>(i), j) * src.sigma(0, j) / si;
    }
  }
  plan.predicted_mse = predicted_mse(plan, src, stats.weights);
  return plan;
}

AllocationPlan optimal_allocation(const PilotStats& stats, const CostModel& costs, double budget,
                                  const AllocationOptions& options, std::span<const double> weights) {
  return optimal_allocation(aggregate_vector_stats(stats, weights), costs, budget, options);
}

double predicted_mse(const AllocationPlan& plan, const PilotStats& stats, std::span<const double> weights) {
  const auto w = unit_weights_if_empty(weights, stats.components());
  if (plan.models() != stats.models() || plan.alpha.rows() != stats.models() ||
      plan.alpha.cols() != stats.components()) {
    throw std::invalid_argument("predicted MSE: plan and stats dimensions differ");
  }
  if (plan.m.empty() || plan.m[0] < 1) throw std::invalid_argument("predicted MSE: m_1 must be >= 1");
  double total = 0.0;
  for (Index j = 0; j < stats.components(); ++j) {
    const double s1 = stats.sigma(0, j);
    double e = s1 * s1 / static_cast<double>(plan.m[0]);
    Index prev = plan.m[0];
    for (Index i = 1; i < plan.models(); ++i) {
      const Index mi = plan.m[static_cast<std::size_t>(i)];
      if (mi == 0) continue;
      const double a = plan.alpha(i, j);
      const double si = stats.sigma(i, j);
      const double rho = std::isnan(stats.rho(i, j)) ? 0.0 : stats.rho(i, j);
      e += (1.0 / static_cast<double>(prev) - 1.0 / static_cast<double>(mi)) *
           (a * a * si * si - 2.0 * a * rho * s1 * si);
      prev = mi;
    }
    total += w[static_cast<std::size_t>(j)] * e;
  }
  return total;
}

double predicted_mse(const AllocationPlan& plan, const AggregatedStats& stats) {
  return predicted_mse(plan, stats.source, stats.weights);
}

double variance_reduction_ratio(const AggregatedStats& stats, const CostModel& costs,
                                const std::vector<bool>& models) {
  const auto k = static_cast<std::size_t>(stats.models());
  if (static_cast<std::size_t>(costs.models()) != k) {
    throw std::invalid_argument("variance reduction: cost model and stats disagree on K");
  }
  std::vector<std::size_t> seq;
  for (std::size_t i = 0; i < k; ++i) {
    if (models.empty() || models.at(i)) seq.push_back(i);
  }
  if (seq.empty() || seq[0] != 0) throw std::invalid_argument("variance reduction: model 1 is required");
  double sum = 0.0;
  for (std::size_t p = 0; p < seq.size(); ++p) {
    const double cur = stats.rho_bar_sq[seq[p]];
    const double next = p + 1 < seq.size() ? stats.rho_bar_sq[seq[p + 1]] : 0.0;
    if (cur < next) throw std::invalid_argument("variance reduction: rho^2 must be nonincreasing");
    sum += std::sqrt(costs.w[seq[p]] / costs.w[0] * (cur - next));
  }
  return sum * sum;
}

double variance_reduction_ratio(const PilotStats& stats, const CostModel& costs) {
  return variance_reduction_ratio(aggregate_vector_stats(stats), costs);
}

double budget_for_tolerance(const AggregatedStats& stats, const CostModel& costs, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("budget_for_tolerance: epsilon must be positive");
  const auto mask = select_models(stats.rho_bar_sq, costs.w);
  return costs.w[0] * stats.sigma_bar_sq / (epsilon * epsilon) *
         variance_reduction_ratio(stats, costs, mask);
}

nlohmann::json to_json(const AllocationPlan& plan) {
  nlohmann::json alpha = nlohmann::json::array();
  for (Index i = 0; i < plan.alpha.rows(); ++i) {
    std::vector<double> row(plan.alpha.row(i).begin(), plan.alpha.row(i).end());
    alpha.push_back(row);
  }
  return {{"m", plan.m},
          {"alpha", alpha},
          {"retained", plan.retained},
          {"r", plan.r},
          {"m_real", plan.m_real},
          {"budget", plan.budget},
          {"budget_used", plan.budget_used},
          {"predicted_mse", plan.predicted_mse}};
}

AllocationPlan allocation_plan_from_json(const nlohmann::json& j) {
  AllocationPlan plan;
  plan.m = j.at("m").get<std::vector<Index>>();
  plan.retained = j.at("retained").get<std::vector<bool>>();
  plan.r = j.value("r", std::vector<double>{});
  plan.m_real = j.value("m_real", std::vector<double>{});
  plan.budget = j.value("budget", 0.0);
  plan.budget_used = j.value("budget_used", 0.0);
  plan.predicted_mse = j.value("predicted_mse", 0.0);
  const auto& alpha = j.at("alpha");
  const auto rows = static_cast<Index>(alpha.size());
  const auto cols = rows ? static_cast<Index>(alpha.at(0).size()) : 0;
  plan.alpha.resize(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      plan.alpha(r, c) = alpha.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  if (plan.m.size() != plan.retained.size() || plan.alpha.rows() != static_cast<Index>(plan.m.size())) {
    throw std::invalid_argument("allocation plan json: inconsistent sizes");
  }
  validate_counts(plan.m, static_cast<Index>(plan.m.size()));
  return plan;
}

}  // namespace mfmc
