#include "mfmc/pilot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfmc/numeric.hpp"

namespace mfmc {

std::string to_string(StatsKind kind) {
  switch (kind) {
    case StatsKind::raw: return "raw";
    case StatsKind::q_transformed: return "q-transformed";
    case StatsKind::g_transformed: return "g-transformed";
  }
  return "raw";
}

StatsKind stats_kind_from_string(const std::string& s) {
  if (s == "raw") return StatsKind::raw;
  if (s == "q-transformed") return StatsKind::q_transformed;
  if (s == "g-transformed") return StatsKind::g_transformed;
  throw std::invalid_argument("unknown stats kind '" + s + "'");
}

PilotStats PilotStats::from_moments(RowMatrix sigma, RowMatrix rho, StatsKind kind,
                                    std::string statistic, Index pilot_size) {
  if (sigma.rows() != rho.rows() || sigma.cols() != rho.cols() || sigma.rows() < 1 ||
      sigma.cols() < 1) {
    throw std::invalid_argument("pilot stats: sigma and rho must be K x C with K, C >= 1");
  }
  if ((sigma.array() < 0.0).any()) throw std::invalid_argument("pilot stats: negative sigma");
  PilotStats s;
  s.kind = kind;
  s.statistic = std::move(statistic);
  s.pilot_size = pilot_size;
  s.sigma = std::move(sigma);
  s.rho = std::move(rho);
  s.degenerate.assign(static_cast<std::size_t>(s.sigma.cols()), false);
  for (Index j = 0; j < s.sigma.cols(); ++j) {
    s.rho(0, j) = 1.0;
    const bool degenerate = s.sigma(0, j) == 0.0;
    s.degenerate[static_cast<std::size_t>(j)] = degenerate;
    for (Index i = 1; i < s.sigma.rows(); ++i) {
      if (degenerate) {
        s.rho(i, j) = std::numeric_limits<double>::quiet_NaN();
      } else if (s.sigma(i, j) == 0.0 || std::isnan(s.rho(i, j))) {
        s.rho(i, j) = 0.0;
      } else {
        s.rho(i, j) = std::clamp(s.rho(i, j), -1.0, 1.0);
      }
    }
  }
  return s;
}

PilotStats stats_from_samples(std::span<const RowMatrix> values, StatsKind kind,
                              std::string statistic) {
  if (values.empty()) throw std::invalid_argument("pilot stats: no models");
  const Index n = values[0].rows();
  const Index c = values[0].cols();
  if (n < 3) throw std::invalid_argument("pilot stats: need at least 3 pilot samples");
  for (const auto& v : values) {
    if (v.rows() != n || v.cols() != c) throw std::invalid_argument("pilot stats: shape mismatch");
  }
  const auto k = static_cast<Index>(values.size());
  RowMatrix sigma(k, c), rho(k, c);
  std::vector<double> buffer(static_cast<std::size_t>(n));
  const double dof = static_cast<double>(n - 1);

  std::vector<RowVector> means;
  for (const auto& v : values) means.push_back(prefix_column_mean(v, n));

  auto centered_product_sum = [&](Index a, Index b, Index j) {
    for (Index r = 0; r < n; ++r) {
      buffer[static_cast<std::size_t>(r)] =
          (values[static_cast<std::size_t>(a)](r, j) - means[static_cast<std::size_t>(a)](j)) *
          (values[static_cast<std::size_t>(b)](r, j) - means[static_cast<std::size_t>(b)](j));
    }
    return pairwise_sum(buffer);
  };

  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < k; ++i) sigma(i, j) = std::sqrt(centered_product_sum(i, i, j) / dof);
    rho(0, j) = 1.0;
    for (Index i = 1; i < k; ++i) {
      const double denom = sigma(0, j) * sigma(i, j) * dof;
      rho(i, j) = denom > 0.0 ? centered_product_sum(0, i, j) / denom
                              : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return PilotStats::from_moments(std::move(sigma), std::move(rho), kind, std::move(statistic), n);
}

namespace {

void check_pilot(const NestedEvaluations& evals, Index n, Index blocks) {
  if (n < 3) throw std::invalid_argument("pilot: N must be at least 3");
  for (Index i = 0; i < evals.models(); ++i) {
    if (evals.m[static_cast<std::size_t>(i)] < n) {
      throw std::invalid_argument("pilot: every model must be evaluated on the N pilot inputs");
    }
  }
  if (evals.blocks() < blocks) {
    throw std::invalid_argument("pilot: statistic needs " + std::to_string(blocks) + " evaluation blocks");
  }
}

std::vector<RowMatrix> prefix_blocks(const std::vector<RowMatrix>& blocks, Index n) {
  std::vector<RowMatrix> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.topRows(n));
  return out;
}

}  // namespace

PilotStats estimate_moment_stats(const NestedEvaluations& evals, Index n) {
  check_pilot(evals, n, 1);
  std::vector<RowMatrix> values;
  for (Index i = 0; i < evals.models(); ++i) values.push_back(evals.values(i).topRows(n));
  return stats_from_samples(values, StatsKind::raw, "expectation");
}

PilotStats estimate_q_stats(const NestedEvaluations& evals, const StatisticPlugin& stat, Index n) {
  check_pilot(evals, n, stat.blocks);
  std::vector<RowMatrix> values;
  for (Index i = 0; i < evals.models(); ++i) {
    const auto blocks = prefix_blocks(evals.outputs[static_cast<std::size_t>(i)], n);
    values.push_back(stat.contributions(blocks, n));
  }
  return stats_from_samples(values, StatsKind::q_transformed, stat.label);
}

PilotStats estimate_g_stats(const NestedEvaluations& evals, const Bridge& g, Index n,
                            const StatisticPlugin& stat) {
  check_pilot(evals, n, stat.blocks);
  if (g.models() != evals.models()) throw std::invalid_argument("pilot: bridge/model count mismatch");
  std::vector<RowMatrix> values;
  for (Index i = 0; i < evals.models(); ++i) {
    std::vector<RowMatrix> blocks;
    for (const auto& b : evals.outputs[static_cast<std::size_t>(i)]) blocks.push_back(g.apply(i, b, n));
    values.push_back(stat.contributions(blocks, n));
  }
  return stats_from_samples(values, StatsKind::g_transformed, stat.label);
}

namespace {

nlohmann::json matrix_to_json(const RowMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

RowMatrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
  RowMatrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (static_cast<Index>(j.at(static_cast<std::size_t>(r)).size()) != cols) {
      throw std::invalid_argument("pilot stats json: ragged matrix");
    }
    for (Index c = 0; c < cols; ++c) {
      const auto& v = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      m(r, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const PilotStats& stats) {
  return {{"kind", to_string(stats.kind)},
          {"statistic", stats.statistic},
          {"N", stats.pilot_size},
          {"sigma", matrix_to_json(stats.sigma)},
          {"rho", matrix_to_json(stats.rho)},
          {"degenerate", stats.degenerate}};
}

PilotStats pilot_stats_from_json(const nlohmann::json& j) {
  return PilotStats::from_moments(matrix_from_json(j.at("sigma")), matrix_from_json(j.at("rho")),
                                  stats_kind_from_string(j.value("kind", std::string("raw"))),
                                  j.value("statistic", std::string("expectation")),
                                  j.value("N", Index{0}));
}

}  // namespace mfmc
