#include "mfmc/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mfmc {

namespace {

constexpr Index kPairwiseBlock = 64;

double pairwise_strided(const double* data, Index n, Index stride) {
  if (n <= kPairwiseBlock) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += data[i * stride];
    return s;
  }
  const Index half = n / 2;
  return pairwise_strided(data, half, stride) +
         pairwise_strided(data + half * stride, n - half, stride);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise_strided(values.data(), static_cast<Index>(values.size()), 1);
}

RowVector prefix_column_mean(const RowMatrix& m, Index rows) {
  if (rows < 1 || rows > m.rows()) throw std::invalid_argument("prefix_column_mean: bad row count");
  RowVector out(m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    out(j) = pairwise_strided(m.data() + j, rows, m.cols()) / static_cast<double>(rows);
  }
  return out;
}

RowVector prefix_column_variance(const RowMatrix& m, Index rows) {
  if (rows < 2 || rows > m.rows()) {
    throw std::invalid_argument("prefix_column_variance: need at least 2 rows");
  }
  const RowVector mean = prefix_column_mean(m, rows);
  std::vector<double> sq(static_cast<std::size_t>(rows));
  RowVector out(m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < rows; ++i) {
      const double d = m(i, j) - mean(j);
      sq[static_cast<std::size_t>(i)] = d * d;
    }
    out(j) = pairwise_sum(sq) / static_cast<double>(rows - 1);
  }
  return out;
}

void parallel_for(Index n, unsigned jobs, const std::function<void(Index)>& body) {
  if (n <= 0) return;
  const auto workers = static_cast<Index>(std::max(1u, jobs));
  if (workers == 1 || n == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  const Index count = std::min(workers, n);
  pool.reserve(static_cast<std::size_t>(count));
  for (Index t = 0; t < count; ++t) pool.emplace_back(work);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mfmc
