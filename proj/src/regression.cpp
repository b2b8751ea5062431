#include "mfmc/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mfmc {

namespace {

double squared_exponential(double a, double b, double length) {
  const double d = (a - b) / length;
  return std::exp(-0.5 * d * d);
}

Eigen::MatrixXd correlation_matrix(std::span<const double> x, double length, double ratio) {
  const auto n = static_cast<Index>(x.size());
  Eigen::MatrixXd r(n, n);
  for (Index i = 0; i < n; ++i) {
    r(i, i) = 1.0 + ratio;
    for (Index k = 0; k < i; ++k) {
      r(i, k) = r(k, i) = squared_exponential(x[static_cast<std::size_t>(i)],
                                              x[static_cast<std::size_t>(k)], length);
    }
  }
  return r;
}

void check_pairs(std::span<const double> x, std::span<const double> y, std::size_t minimum) {
  if (x.size() != y.size()) throw std::invalid_argument("regression: x and y differ in length");
  if (x.size() < minimum) {
    throw std::invalid_argument("regression: need at least " + std::to_string(minimum) + " pairs");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw std::invalid_argument("regression: non-finite training pair");
    }
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo)) throw std::invalid_argument("regression: all training inputs are identical");
}

}  // namespace

PiecewiseLinear1D PiecewiseLinear1D::fit(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y, 2);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  PiecewiseLinear1D out;
  for (std::size_t k = 0; k < order.size();) {
    const double xv = x[order[k]];
    double sum = 0.0;
    std::size_t count = 0;
    for (; k < order.size() && x[order[k]] == xv; ++k, ++count) sum += y[order[k]];
    out.x_.push_back(xv);
    out.y_.push_back(sum / static_cast<double>(count));
  }
  return out;
}

Prediction PiecewiseLinear1D::predict(double x) const {
  if (!fitted()) throw Error("piecewise-linear regressor used before fitting");
  if (x <= x_.front()) return {y_.front(), 0.0};
  if (x >= x_.back()) return {y_.back(), 0.0};
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const auto k = static_cast<std::size_t>(it - x_.begin());
  const double t = (x - x_[k - 1]) / (x_[k] - x_[k - 1]);
  return {y_[k - 1] + t * (y_[k] - y_[k - 1]), 0.0};
}

nlohmann::json PiecewiseLinear1D::to_json() const {
  return {{"type", "piecewise-linear"}, {"x", x_}, {"y", y_}};
}

GaussianProcess1D GaussianProcess1D::with_hyperparameters(std::span<const double> x,
                                                          std::span<const double> y,
                                                          const GpHyperparameters& hyper) {
  check_pairs(x, y, 1);
  if (!(hyper.length_scale > 0.0) || hyper.signal_variance < 0.0 || hyper.nugget_variance < 0.0) {
    throw std::invalid_argument("regression: invalid hyperparameters");
  }
  GaussianProcess1D gp;
  gp.x_.assign(x.begin(), x.end());
  gp.y_.assign(y.begin(), y.end());
  gp.prior_mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  gp.hyper_ = hyper;
  const auto n = static_cast<Index>(x.size());
  Eigen::VectorXd centered(n);
  for (Index i = 0; i < n; ++i) centered(i) = y[static_cast<std::size_t>(i)] - gp.prior_mean_;

  if (hyper.signal_variance == 0.0) {
    // Degenerate prior: the process is the constant prior mean.
    gp.constant_ = true;
    gp.fitted_ = true;
    return gp;
  }
  Eigen::MatrixXd k = correlation_matrix(x, hyper.length_scale, 0.0) * hyper.signal_variance;
  k.diagonal().array() += hyper.nugget_variance;
  gp.factor_.compute(k);
  if (gp.factor_.info() != Eigen::Success) {
    throw Error("regression: kernel matrix is not positive definite");
  }
  gp.weights_ = gp.factor_.solve(centered);
  const Eigen::MatrixXd l = gp.factor_.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  gp.log_likelihood_ = -0.5 * centered.dot(gp.weights_) - 0.5 * log_det -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  gp.fitted_ = true;
  return gp;
}

GaussianProcess1D GaussianProcess1D::fit(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y, 5);
  const auto n = static_cast<double>(x.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double target_var = 0.0;
  for (double v : y) target_var += (v - mean) * (v - mean);
  target_var /= n;
  if (target_var == 0.0) return with_hyperparameters(x, y, {1.0, 0.0, 0.0});

  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  Eigen::VectorXd centered(static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < y.size(); ++i) centered(static_cast<Index>(i)) = y[i] - mean;

  // Profile likelihood: for fixed length scale and nugget ratio the optimal signal
  // variance is y' R^{-1} y / n.
  double best_score = -std::numeric_limits<double>::infinity();
  GpHyperparameters best{range, target_var, 1e-2 * target_var};
  const double log_lo = std::log(kLengthGridLow), log_hi = std::log(kLengthGridHigh);
  for (int a = 0; a < kLengthGridPoints; ++a) {
    const double length =
        range * std::exp(log_lo + (log_hi - log_lo) * a / (kLengthGridPoints - 1));
    for (double ratio : kNuggetRatios) {
      Eigen::LLT<Eigen::MatrixXd> llt(correlation_matrix(x, length, ratio));
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd w = llt.solve(centered);
      const double quad = centered.dot(w);
      if (!(quad > 0.0)) continue;
      const double signal = quad / n;
      const Eigen::MatrixXd l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      const double score = -0.5 * n * std::log(signal) - 0.5 * log_det;
      if (score > best_score) {
        best_score = score;
        best = {length, signal, ratio * signal};
      }
    }
  }
  return with_hyperparameters(x, y, best);
}

void GaussianProcess1D::check_fitted() const {
  if (!fitted_) throw Error("Gaussian-process regressor used before fitting");
}

double GaussianProcess1D::predict_mean(double x) const {
  check_fitted();
  if (constant_) return prior_mean_;
  double acc = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    acc += squared_exponential(x, x_[i], hyper_.length_scale) * weights_(static_cast<Index>(i));
  }
  return prior_mean_ + hyper_.signal_variance * acc;
}

Prediction GaussianProcess1D::predict(double x) const {
  check_fitted();
  if (constant_) return {prior_mean_, 0.0};
  const auto n = static_cast<Index>(x_.size());
  Eigen::VectorXd k(n);
  for (Index i = 0; i < n; ++i) {
    k(i) = hyper_.signal_variance *
           squared_exponential(x, x_[static_cast<std::size_t>(i)], hyper_.length_scale);
  }
  const double mean = prior_mean_ + k.dot(weights_);
  const double variance = hyper_.signal_variance - k.dot(factor_.solve(k));
  return {mean, std::max(0.0, variance)};
}

nlohmann::json GaussianProcess1D::to_json() const {
  check_fitted();
  return {{"type", "gaussian-process"},
          {"kernel", "squared-exponential"},
          {"x", x_},
          {"y", y_},
          {"length_scale", hyper_.length_scale},
          {"signal_variance", hyper_.signal_variance},
          {"nugget_variance", hyper_.nugget_variance},
          {"prior_mean", prior_mean_},
          {"log_marginal_likelihood", log_likelihood_}};
}

GaussianProcess1D GaussianProcess1D::from_json(const nlohmann::json& j) {
  if (j.at("type") != "gaussian-process") throw std::invalid_argument("not a Gaussian-process model");
  const auto x = j.at("x").get<std::vector<double>>();
  const auto y = j.at("y").get<std::vector<double>>();
  return with_hyperparameters(x, y,
                              {j.at("length_scale").get<double>(), j.at("signal_variance").get<double>(),
                               j.at("nugget_variance").get<double>()});
}

GaussianProcess1D fit_regressor(std::span<const double> low, std::span<const double> high) {
  return GaussianProcess1D::fit(low, high);
}

Prediction predict(const Regressor1D& regressor, double x) { return regressor.predict(x); }

RowMatrix Bridge::apply(Index model, const RowMatrix& values, Index rows) const {
  if (rows > values.rows()) throw std::invalid_argument("bridge: not enough rows");
  RowMatrix out = values.topRows(rows);
  if (model == 0) return out;
  if (model >= models()) throw std::invalid_argument("bridge: no maps for model " + std::to_string(model));
  const auto& per_component = maps[static_cast<std::size_t>(model)];
  if (static_cast<Index>(per_component.size()) != values.cols()) {
    throw std::invalid_argument("bridge: component count mismatch for model " + std::to_string(model));
  }
  for (Index j = 0; j < values.cols(); ++j) {
    const auto& g = per_component[static_cast<std::size_t>(j)];
    if (!g || !g->fitted()) throw Error("bridge: unfitted regressor for model " + std::to_string(model));
    for (Index r = 0; r < rows; ++r) out(r, j) = g->predict_mean(values(r, j));
  }
  return out;
}

Bridge fit_bridge(std::span<const RowMatrix> outputs) {
  if (outputs.empty()) throw std::invalid_argument("fit_bridge: no model outputs");
  const RowMatrix& high = outputs[0];
  Bridge bridge;
  bridge.maps.resize(outputs.size());
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    const RowMatrix& low = outputs[i];
    if (low.rows() != high.rows() || low.cols() != high.cols()) {
      throw std::invalid_argument("fit_bridge: training outputs differ in shape");
    }
    for (Index j = 0; j < high.cols(); ++j) {
      const Eigen::VectorXd x = low.col(j);
      const Eigen::VectorXd y = high.col(j);
      bridge.maps[i].push_back(std::make_shared<GaussianProcess1D>(GaussianProcess1D::fit(
          std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
          std::span<const double>(y.data(), static_cast<std::size_t>(y.size())))));
    }
  }
  return bridge;
}

Bridge identity_bridge(Index models, Index components) {
  Bridge bridge;
  bridge.maps.resize(static_cast<std::size_t>(models));
  const auto id = std::make_shared<IdentityMap>();
  for (Index i = 1; i < models; ++i) {
    bridge.maps[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(components), id);
  }
  return bridge;
}

nlohmann::json to_json(const Bridge& bridge) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& per_model : bridge.maps) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& g : per_model) row.push_back(g ? g->to_json() : nlohmann::json());
    out.push_back(row);
  }
  return out;
}

}  // namespace mfmc
