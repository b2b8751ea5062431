#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mfmc {

using Index = Eigen::Index;

/// Row-major dense matrix; rows are samples, columns are inputs or output components.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model produced a non-finite value, or threw, while being evaluated.
class EvaluationError : public Error {
 public:
  static constexpr Index kUnknown = -1;

  EvaluationError(const std::string& what, Index model_index, Index sample_index)
      : Error(what), model_index_(model_index), sample_index_(sample_index) {}

  Index model_index() const noexcept { return model_index_; }
  Index sample_index() const noexcept { return sample_index_; }

 private:
  Index model_index_;
  Index sample_index_;
};

/// Every output component has zero high-fidelity variance; nothing to allocate for.
class DegenerateStatsError : public Error {
 public:
  using Error::Error;
};

/// The budget cannot pay for the minimum number of high-fidelity samples.
class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfmc
