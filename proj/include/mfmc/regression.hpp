#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "mfmc/types.hpp"

namespace mfmc {

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// One-dimensional map from a low-fidelity output value to a predicted high-fidelity value.
class Regressor1D {
 public:
  virtual ~Regressor1D() = default;

  virtual bool fitted() const noexcept = 0;
  /// Throws Error when not fitted.
  virtual Prediction predict(double x) const = 0;
  virtual double predict_mean(double x) const { return predict(x).mean; }
  virtual nlohmann::json to_json() const = 0;
};

class IdentityMap final : public Regressor1D {
 public:
  bool fitted() const noexcept override { return true; }
  Prediction predict(double x) const override { return {x, 0.0}; }
  double predict_mean(double x) const override { return x; }
  nlohmann::json to_json() const override { return {{"type", "identity"}}; }
};

/// Linear interpolation between sorted training inputs, constant beyond them.
/// Duplicate inputs are averaged.
class PiecewiseLinear1D final : public Regressor1D {
 public:
  PiecewiseLinear1D() = default;
  static PiecewiseLinear1D fit(std::span<const double> x, std::span<const double> y);

  bool fitted() const noexcept override { return !x_.empty(); }
  Prediction predict(double x) const override;
  nlohmann::json to_json() const override;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

struct GpHyperparameters {
  double length_scale = 1.0;
  double signal_variance = 1.0;
  double nugget_variance = 0.0;
};

/// Gaussian-process regression with a squared-exponential kernel, constant prior mean equal
/// to the training-target mean, and hyperparameters chosen by maximizing the marginal
/// likelihood over a fixed log grid.
class GaussianProcess1D final : public Regressor1D {
 public:
  static constexpr int kLengthGridPoints = 20;
  static constexpr double kLengthGridLow = 0.01;
  static constexpr double kLengthGridHigh = 10.0;
  static constexpr double kNuggetRatios[4] = {1e-8, 1e-6, 1e-4, 1e-2};

  GaussianProcess1D() = default;  // unfitted

  /// Needs at least 5 pairs and at least two distinct inputs.
  static GaussianProcess1D fit(std::span<const double> x, std::span<const double> y);
  /// Conditions on the data with fixed hyperparameters; throws Error if the kernel matrix
  /// is not positive definite.
  static GaussianProcess1D with_hyperparameters(std::span<const double> x,
                                                std::span<const double> y,
                                                const GpHyperparameters& hyper);
  static GaussianProcess1D from_json(const nlohmann::json& j);

  bool fitted() const noexcept override { return fitted_; }
  Prediction predict(double x) const override;
  double predict_mean(double x) const override;
  nlohmann::json to_json() const override;

  const GpHyperparameters& hyperparameters() const noexcept { return hyper_; }
  double prior_mean() const noexcept { return prior_mean_; }
  double log_marginal_likelihood() const noexcept { return log_likelihood_; }

 private:
  void check_fitted() const;

  bool fitted_ = false;
  bool constant_ = false;
  std::vector<double> x_;
  std::vector<double> y_;
  double prior_mean_ = 0.0;
  GpHyperparameters hyper_;
  double log_likelihood_ = 0.0;
  Eigen::VectorXd weights_;  // K^{-1} (y - prior_mean)
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

/// Fits the default regressor (Gaussian process) to paired (low, high) values.
GaussianProcess1D fit_regressor(std::span<const double> low, std::span<const double> high);

Prediction predict(const Regressor1D& regressor, double x);

/// Per-model, per-component regression maps g_i. Model 0 (high fidelity) is never mapped.
struct Bridge {
  /// maps[i][j] maps component j of model i; maps[0] is empty.
  std::vector<std::vector<std::shared_ptr<const Regressor1D>>> maps;

  Index models() const noexcept { return static_cast<Index>(maps.size()); }
  /// First `rows` rows of `values` with g applied columnwise for model i (identity for i == 0).
  RowMatrix apply(Index model, const RowMatrix& values, Index rows) const;
};

/// One Gaussian process per (low-fidelity model, component), trained on pairs
/// (outputs[i](n, j), outputs[0](n, j)).
Bridge fit_bridge(std::span<const RowMatrix> outputs);

Bridge identity_bridge(Index models, Index components);

nlohmann::json to_json(const Bridge& bridge);

}  // namespace mfmc
