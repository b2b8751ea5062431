#include "mfmc/hierarchy.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace mfmc {

Model::Model(std::string label, double cost, Index input_dimension, Index output_length,
             Evaluator evaluator)
    : label_(std::move(label)),
      cost_(cost),
      input_dimension_(input_dimension),
      output_length_(output_length),
      evaluator_(std::move(evaluator)) {
  if (!(cost_ > 0.0) || !std::isfinite(cost_)) {
    throw std::invalid_argument("model '" + label_ + "': cost must be positive and finite");
  }
  if (input_dimension_ < 1 || output_length_ < 1) {
    throw std::invalid_argument("model '" + label_ + "': dimensions must be positive");
  }
  if (!evaluator_) throw std::invalid_argument("model '" + label_ + "': empty evaluator");
}

Model Model::with_cost(double cost) const {
  return Model(label_, cost, input_dimension_, output_length_, evaluator_);
}

std::vector<double> evaluate(const Model& model, std::span<const double> input) {
  if (static_cast<Index>(input.size()) != model.input_dimension()) {
    throw std::invalid_argument("evaluate: input has length " + std::to_string(input.size()) +
                                ", model '" + model.label() + "' expects " +
                                std::to_string(model.input_dimension()));
  }
  std::vector<double> out(static_cast<std::size_t>(model.output_length()));
  model.evaluate_into(input, out);
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw EvaluationError("model '" + model.label() + "' produced a non-finite output",
                            EvaluationError::kUnknown, EvaluationError::kUnknown);
    }
  }
  return out;
}

ModelHierarchy::ModelHierarchy(std::string name, std::vector<Model> models,
                               std::vector<Marginal> inputs, std::vector<double> output_weights,
                               std::vector<double> output_coordinates)
    : name_(std::move(name)),
      models_(std::move(models)),
      inputs_(std::move(inputs)),
      output_weights_(std::move(output_weights)),
      output_coordinates_(std::move(output_coordinates)) {
  if (models_.empty()) throw std::invalid_argument("hierarchy needs at least one model");
  if (inputs_.empty()) throw std::invalid_argument("hierarchy needs at least one input");
  output_length_ = models_.front().output_length();
  for (const auto& m : models_) {
    if (m.input_dimension() != input_dimension() || m.output_length() != output_length_) {
      throw std::invalid_argument("hierarchy '" + name_ +
                                  "': models disagree on input or output dimension");
    }
  }
  for (const auto& marginal : inputs_) {
    const bool ok = std::visit(
        [](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Uniform>) return d.lower < d.upper;
          else return d.stddev > 0.0;
        },
        marginal);
    if (!ok) throw std::invalid_argument("hierarchy '" + name_ + "': invalid input marginal");
  }
  if (output_weights_.empty()) output_weights_.assign(static_cast<std::size_t>(output_length_), 1.0);
  if (static_cast<Index>(output_weights_.size()) != output_length_) {
    throw std::invalid_argument("output weights must have one entry per output component");
  }
  for (double w : output_weights_) {
    if (!(w > 0.0)) throw std::invalid_argument("output weights must be strictly positive");
  }
  if (!output_coordinates_.empty() &&
      static_cast<Index>(output_coordinates_.size()) != output_length_) {
    throw std::invalid_argument("output coordinates must have one entry per output component");
  }
}

std::vector<double> ModelHierarchy::costs() const {
  std::vector<double> w;
  w.reserve(models_.size());
  for (const auto& m : models_) w.push_back(m.cost());
  return w;
}

ModelHierarchy ModelHierarchy::with_costs(std::span<const double> costs) const {
  if (static_cast<Index>(costs.size()) != size()) {
    throw std::invalid_argument("with_costs: need one cost per model");
  }
  std::vector<Model> models;
  models.reserve(models_.size());
  for (std::size_t i = 0; i < models_.size(); ++i) models.push_back(models_[i].with_cost(costs[i]));
  return ModelHierarchy(name_, std::move(models), inputs_, output_weights_, output_coordinates_);
}

ModelHierarchy ModelHierarchy::with_output_weights(std::vector<double> weights) const {
  return ModelHierarchy(name_, models_, inputs_, std::move(weights), output_coordinates_);
}

namespace {

constexpr double kPi = std::numbers::pi;

void check_costs(std::span<const double> costs, std::size_t k) {
  if (costs.size() != k) {
    throw std::invalid_argument("expected " + std::to_string(k) + " model costs");
  }
}

std::vector<Marginal> symmetric_uniform(Index d) {
  return std::vector<Marginal>(static_cast<std::size_t>(d), Uniform{-kPi, kPi});
}

Model scalar_model(std::string label, double cost, double (*f)(double, double, double)) {
  return Model(std::move(label), cost, 3, 1,
               [f](std::span<const double> z, std::span<double> out) { out[0] = f(z[0], z[1], z[2]); });
}

double sq(double x) { return x * x; }

double ishigami1(double z1, double z2, double z3) {
  return std::sin(z1) + 5.0 * sq(std::sin(z2)) + 0.1 * std::pow(z3, 4) * std::sin(z1);
}
double ishigami2(double z1, double z2, double z3) {
  return std::sin(z1) + 4.75 * sq(std::sin(z2)) + 0.1 * std::pow(z3, 4) * std::sin(z1);
}
double ishigami3(double z1, double z2, double z3) {
  return std::sin(z1) + 3.0 * sq(std::sin(z2)) + 0.9 * z3 * z3 * std::sin(z1);
}

double quintic1(double z1, double z2, double z3) {
  return std::sin(z1) + sq(std::sin(z2)) + 0.1 * std::pow(z3, 5);
}
double quintic2(double z1, double z2, double z3) {
  return std::sin(z1) + sq(std::sin(z2)) + 2.0 * z3 * z3 * z3;
}
double quintic3(double z1, double z2, double z3) {
  return std::sin(z1) + sq(std::sin(z2)) + 20.0 * z3;
}

}  // namespace

ModelHierarchy ishigami_hierarchy(std::span<const double> costs) {
  check_costs(costs, 3);
  std::vector<Model> models{scalar_model("ishigami-f1", costs[0], ishigami1),
                            scalar_model("ishigami-f2", costs[1], ishigami2),
                            scalar_model("ishigami-f3", costs[2], ishigami3)};
  return ModelHierarchy("ishigami", std::move(models), symmetric_uniform(3));
}

ModelHierarchy quintic_hierarchy(std::span<const double> costs) {
  check_costs(costs, 3);
  std::vector<Model> models{scalar_model("quintic-f1", costs[0], quintic1),
                            scalar_model("quintic-f2", costs[1], quintic2),
                            scalar_model("quintic-f3", costs[2], quintic3)};
  return ModelHierarchy("quintic", std::move(models), symmetric_uniform(3));
}

ModelHierarchy synthetic_field_hierarchy(Index n_points, std::span<const double> costs) {
  if (n_points < 1) throw std::invalid_argument("synthetic field needs at least one grid point");
  check_costs(costs, 3);
  std::vector<double> x(static_cast<std::size_t>(n_points));
  std::vector<double> sin_x(x.size()), cos_x(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = static_cast<double>(j + 1) / static_cast<double>(n_points);
    sin_x[j] = std::sin(kPi * x[j]);
    cos_x[j] = std::cos(kPi * x[j]);
  }
  // terms: how many of (sin, cos, linear) each level keeps
  auto field = [=](int terms) {
    return [=](std::span<const double> s, std::span<double> out) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        double v = s[0] * sin_x[j];
        if (terms >= 2) v += s[1] * cos_x[j];
        if (terms >= 3) v += 0.1 * s[2] * x[j];
        out[j] = v;
      }
    };
  };
  std::vector<Model> models{Model("field-f1", costs[0], 3, n_points, field(3)),
                            Model("field-f2", costs[1], 3, n_points, field(2)),
                            Model("field-f3", costs[2], 3, n_points, field(1))};
  return ModelHierarchy("synthetic-field", std::move(models),
                        std::vector<Marginal>(3, Normal{0.0, 1.0}), {}, std::move(x));
}

ModelHierarchy hierarchy_by_name(const std::string& name, std::span<const double> costs,
                                 Index field_points) {
  const std::span<const double> w = costs.empty() ? std::span<const double>(kBenchmarkCosts) : costs;
  if (name == "ishigami") return ishigami_hierarchy(w);
  if (name == "quintic") return quintic_hierarchy(w);
  if (name == "synthetic-field") return synthetic_field_hierarchy(field_points, w);
  throw std::invalid_argument("unknown hierarchy '" + name + "'");
}

FieldMoments synthetic_field_moments(double x) {
  const double var1 = 1.0 + 0.01 * x * x;
  const double root = std::sqrt(var1);
  return {var1, 1.0 / root, std::abs(std::sin(kPi * x)) / root};
}

namespace {

// Main-effect and total-effect variances plus total variance of an additive-or-not
// three-input function, in closed form.
struct SobolParts {
  double mean;
  double variance;
  std::vector<double> main;
  std::vector<double> total;
};

SobolParts ishigami_parts() {
  constexpr double a = 5.0, b = 0.1;
  const double pi4 = std::pow(kPi, 4), pi8 = std::pow(kPi, 8);
  const double v1 = 0.5 * sq(1.0 + b * pi4 / 5.0);
  const double v2 = a * a / 8.0;
  const double v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
  const double total = v1 + v2 + v13;
  return {a / 2.0, total, {v1, v2, 0.0}, {v1 + v13, v2, v13}};
}

SobolParts quintic_parts() {
  const double v1 = 0.5, v2 = 0.125, v3 = 0.01 * std::pow(kPi, 10) / 11.0;
  return {0.5, v1 + v2 + v3, {v1, v2, v3}, {v1, v2, v3}};
}

}  // namespace

std::optional<std::vector<double>> analytic_reference(const ModelHierarchy& hierarchy,
                                                      const std::string& statistic) {
  const auto& name = hierarchy.name();
  if (name == "ishigami" || name == "quintic") {
    const SobolParts p = name == "ishigami" ? ishigami_parts() : quintic_parts();
    if (statistic == "expectation") return std::vector<double>{p.mean};
    if (statistic == "variance") return std::vector<double>{p.variance};
    const auto& parts = statistic == "sobol-main" ? p.main : p.total;
    if (statistic == "sobol-main" || statistic == "sobol-total") {
      std::vector<double> out;
      for (double v : parts) out.push_back(v / p.variance);
      return out;
    }
    return std::nullopt;
  }
  if (name == "synthetic-field") {
    const auto& x = hierarchy.output_coordinates();
    if (statistic == "expectation") return std::vector<double>(x.size(), 0.0);
    if (statistic == "variance") {
      std::vector<double> out;
      for (double xj : x) out.push_back(synthetic_field_moments(xj).sigma1_sq);
      return out;
    }
  }
  return std::nullopt;
}

}  // namespace mfmc
