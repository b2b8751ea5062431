#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfmc/types.hpp"

namespace mfmc {

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;
};

struct Normal {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Marginal distribution of one input coordinate. Coordinates are independent.
using Marginal = std::variant<Uniform, Normal>;

/// Writes the model output for one input. Must be deterministic and safe to call
/// concurrently.
using Evaluator = std::function<void(std::span<const double> input, std::span<double> output)>;

class Model {
 public:
  Model(std::string label, double cost, Index input_dimension, Index output_length,
        Evaluator evaluator);

  const std::string& label() const noexcept { return label_; }
  double cost() const noexcept { return cost_; }
  Index input_dimension() const noexcept { return input_dimension_; }
  Index output_length() const noexcept { return output_length_; }

  /// Unchecked evaluation into caller storage; no finiteness check.
  void evaluate_into(std::span<const double> input, std::span<double> output) const {
    evaluator_(input, output);
  }

  Model with_cost(double cost) const;

 private:
  std::string label_;
  double cost_;
  Index input_dimension_;
  Index output_length_;
  Evaluator evaluator_;
};

/// Checked single evaluation. Throws std::invalid_argument on a wrong input length and
/// EvaluationError if any output entry is not finite.
std::vector<double> evaluate(const Model& model, std::span<const double> input);

/// Ordered models; index 0 is the high-fidelity model, the last index the cheapest.
/// Immutable after construction.
class ModelHierarchy {
 public:
  ModelHierarchy(std::string name, std::vector<Model> models, std::vector<Marginal> inputs,
                 std::vector<double> output_weights = {},
                 std::vector<double> output_coordinates = {});

  const std::string& name() const noexcept { return name_; }
  Index size() const noexcept { return static_cast<Index>(models_.size()); }
  Index input_dimension() const noexcept { return static_cast<Index>(inputs_.size()); }
  Index output_length() const noexcept { return output_length_; }

  const Model& model(Index i) const { return models_.at(static_cast<std::size_t>(i)); }
  const std::vector<Model>& models() const noexcept { return models_; }
  const std::vector<Marginal>& inputs() const noexcept { return inputs_; }
  const std::vector<double>& output_weights() const noexcept { return output_weights_; }
  /// Spatial location x_j of each output component, when the output is a field.
  const std::vector<double>& output_coordinates() const noexcept { return output_coordinates_; }
  std::vector<double> costs() const;

  ModelHierarchy with_costs(std::span<const double> costs) const;
  ModelHierarchy with_output_weights(std::vector<double> weights) const;

 private:
  std::string name_;
  std::vector<Model> models_;
  std::vector<Marginal> inputs_;
  Index output_length_ = 0;
  std::vector<double> output_weights_;
  std::vector<double> output_coordinates_;
};

inline const std::vector<double> kBenchmarkCosts{1.0, 0.05, 0.001};

/// Ishigami function (a = 5, b = 0.1) with two cheaper variants, z_i ~ U(-pi, pi).
ModelHierarchy ishigami_hierarchy(std::span<const double> costs = kBenchmarkCosts);

/// High-fidelity quintic term in z_3 with cubic and linear low-fidelity replacements.
ModelHierarchy quintic_hierarchy(std::span<const double> costs = kBenchmarkCosts);

/// Closed-form Gaussian field hierarchy on the grid x_j = j / n_points, s ~ N(0, I_3):
///   psi1 = s1 sin(pi x) + s2 cos(pi x) + 0.1 s3 x
///   psi2 = s1 sin(pi x) + s2 cos(pi x)
///   psi3 = s1 sin(pi x)
ModelHierarchy synthetic_field_hierarchy(Index n_points,
                                         std::span<const double> costs = kBenchmarkCosts);

/// "ishigami", "quintic" or "synthetic-field". Throws std::invalid_argument otherwise.
ModelHierarchy hierarchy_by_name(const std::string& name, std::span<const double> costs = {},
                                 Index field_points = 16);

/// Exact per-component moments of the synthetic field at coordinate x.
struct FieldMoments {
  double sigma1_sq;
  double rho12;
  double rho13;
};
FieldMoments synthetic_field_moments(double x);

/// Exact statistic values for a built-in hierarchy's high-fidelity model, when known.
/// `statistic` is "expectation", "variance", "sobol-main" or "sobol-total" (normalized
/// indices). Returns nullopt when no closed form is available.
std::optional<std::vector<double>> analytic_reference(const ModelHierarchy& hierarchy,
                                                      const std::string& statistic);

}  // namespace mfmc
