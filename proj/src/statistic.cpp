#include "mfmc/statistic.hpp"

#include <vector>

#include "mfmc/estimators.hpp"
#include "mfmc/numeric.hpp"

namespace mfmc {

namespace {

std::vector<double> column_prefix(const RowMatrix& m, Index column, Index rows) {
  if (rows > m.rows()) throw std::invalid_argument("statistic: block has too few rows");
  if (column >= m.cols()) throw std::invalid_argument("statistic: output component out of range");
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = m(r, column);
  return out;
}

void require_blocks(ModelBlocks blocks, Index needed, const std::string& label) {
  if (static_cast<Index>(blocks.size()) < needed) {
    throw std::invalid_argument(label + ": needs " + std::to_string(needed) + " evaluation blocks, got " +
                                std::to_string(blocks.size()));
  }
}

}  // namespace

StatisticPlugin expectation_statistic() {
  StatisticPlugin p;
  p.label = "expectation";
  p.min_samples = 1;
  p.blocks = 1;
  p.estimate = [](ModelBlocks b, Index m) { return prefix_column_mean(b[0], m); };
  p.contributions = [](ModelBlocks b, Index n) -> RowMatrix { return b[0].topRows(n); };
  return p;
}

StatisticPlugin variance_statistic() {
  StatisticPlugin p;
  p.label = "variance";
  p.min_samples = 2;
  p.blocks = 1;
  p.estimate = [](ModelBlocks b, Index m) { return prefix_column_variance(b[0], m); };
  p.contributions = [](ModelBlocks b, Index n) -> RowMatrix {
    const RowVector mean = prefix_column_mean(b[0], n);
    RowMatrix q = b[0].topRows(n).rowwise() - mean;
    return q.array().square().matrix();
  };
  return p;
}

StatisticPlugin sobol_main_statistic(Index dimension, Index component) {
  StatisticPlugin p;
  p.label = "sobol-main";
  p.min_samples = 2;
  p.blocks = dimension + 2;
  p.estimate = [dimension, component](ModelBlocks b, Index m) {
    require_blocks(b, dimension + 2, "sobol-main");
    const auto s = column_prefix(b[0], component, m);
    const auto s2 = column_prefix(b[1], component, m);
    RowVector out(dimension);
    for (Index j = 0; j < dimension; ++j) {
      out(j) = sobol_single_level(s, s2, column_prefix(b[2 + j], component, m)).main;
    }
    return out;
  };
  p.contributions = [dimension, component](ModelBlocks b, Index n) {
    require_blocks(b, dimension + 2, "sobol-main");
    const double c = 0.5 * (prefix_column_mean(b[0], n)(component) + prefix_column_mean(b[1], n)(component));
    RowMatrix q(n, dimension);
    for (Index j = 0; j < dimension; ++j) {
      for (Index r = 0; r < n; ++r) q(r, j) = (b[0](r, component) - c) * (b[2 + j](r, component) - c);
    }
    return q;
  };
  return p;
}

StatisticPlugin sobol_total_statistic(Index dimension, Index component) {
  StatisticPlugin p;
  p.label = "sobol-total";
  p.min_samples = 2;
  p.blocks = dimension + 2;
  p.estimate = [dimension, component](ModelBlocks b, Index m) {
    require_blocks(b, dimension + 2, "sobol-total");
    const auto s = column_prefix(b[0], component, m);
    const auto s2 = column_prefix(b[1], component, m);
    RowVector out(dimension);
    for (Index j = 0; j < dimension; ++j) {
      out(j) = sobol_single_level(s, s2, column_prefix(b[2 + j], component, m)).total;
    }
    return out;
  };
  p.contributions = [dimension, component](ModelBlocks b, Index n) {
    require_blocks(b, dimension + 2, "sobol-total");
    RowMatrix q(n, dimension);
    for (Index j = 0; j < dimension; ++j) {
      for (Index r = 0; r < n; ++r) {
        const double d = b[1](r, component) - b[2 + j](r, component);
        q(r, j) = 0.5 * d * d;
      }
    }
    return q;
  };
  return p;
}

bool is_sobol_statistic(const std::string& name) {
  return name == "sobol-main" || name == "sobol-total";
}

StatisticPlugin statistic_by_name(const std::string& name, Index dimension) {
  if (name == "expectation") return expectation_statistic();
  if (name == "variance") return variance_statistic();
  if (name == "sobol-main") return sobol_main_statistic(dimension);
  if (name == "sobol-total") return sobol_total_statistic(dimension);
  throw std::invalid_argument("unknown statistic '" + name + "'");
}

}  // namespace mfmc
