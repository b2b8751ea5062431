#include <cmath>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "mfmc/hierarchy.hpp"
#include "mfmc/sampling.hpp"
#include "oracles.hpp"

using namespace mfmc;
using std::numbers::pi;

namespace {

double eval1(const ModelHierarchy& h, Index i, std::vector<double> z) { return evaluate(h.model(i), z).at(0); }

}  // namespace

TEST_CASE("ishigami point values") {
  const auto h = ishigami_hierarchy();
  CHECK(eval1(h, 0, {0, 0, 0}) == 0.0);
  CHECK(eval1(h, 0, {pi / 2, 0, 0}) == doctest::Approx(1.0).epsilon(1e-15));

  const auto x = draw_inputs(h, 50, 3).inputs;
  for (Index r = 0; r < x.rows(); ++r) {
    std::vector<double> z(x.row(r).begin(), x.row(r).end());
    const double s2 = std::sin(z[1]);
    CHECK(eval1(h, 0, z) - eval1(h, 1, z) == doctest::Approx(0.25 * s2 * s2).epsilon(1e-12));
  }
}

TEST_CASE("quintic point values") {
  const auto h = quintic_hierarchy();
  CHECK(eval1(h, 2, {0, 0, 1}) == doctest::Approx(20.0));
  CHECK(eval1(h, 0, {0, 0, pi}) == doctest::Approx(std::pow(pi, 5) / 10.0));
  CHECK(std::pow(pi, 5) / 10.0 == doctest::Approx(30.60).epsilon(1e-3));
}

TEST_CASE("benchmark shapes and default costs") {
  for (const auto& h : {ishigami_hierarchy(), quintic_hierarchy()}) {
    CHECK(h.size() == 3);
    CHECK(h.input_dimension() == 3);
    CHECK(h.output_length() == 1);
    CHECK(h.costs() == std::vector<double>{1.0, 0.05, 0.001});
    CHECK(h.output_weights() == std::vector<double>{1.0});
  }
  const std::vector<double> w{2.0, 0.5, 0.1};
  CHECK(ishigami_hierarchy(w).costs() == w);
  CHECK(hierarchy_by_name("quintic", w).costs() == w);
  CHECK_THROWS_WITH_AS(hierarchy_by_name("rosenbrock"), doctest::Contains("unknown hierarchy"), std::invalid_argument);
  CHECK_THROWS(ishigami_hierarchy(std::vector<double>{1.0, -1.0, 0.1}));
}

TEST_CASE("ishigami analytic moments match quadrature") {
  const auto q = oracle::ishigami_anova();
  const auto h = ishigami_hierarchy();
  CHECK(q.mean == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(q.variance == doctest::Approx(10.845).epsilon(1e-4));
  CHECK(analytic_reference(h, "expectation")->at(0) == doctest::Approx(q.mean).epsilon(1e-10));
  CHECK(analytic_reference(h, "variance")->at(0) == doctest::Approx(q.variance).epsilon(1e-10));

  const auto main = *analytic_reference(h, "sobol-main");
  const auto total = *analytic_reference(h, "sobol-total");
  for (int j = 0; j < 3; ++j) {
    CHECK(main[static_cast<std::size_t>(j)] == doctest::Approx(q.main[j] / q.variance).epsilon(1e-9).scale(1.0));
    CHECK(total[static_cast<std::size_t>(j)] == doctest::Approx(q.total[j] / q.variance).epsilon(1e-9).scale(1.0));
  }
  CHECK(main[0] == doctest::Approx(0.401).epsilon(0.0025));
  CHECK(main[1] == doctest::Approx(0.288).epsilon(0.0025));
  CHECK(total[0] == doctest::Approx(0.712).epsilon(0.0025));
  CHECK(total[2] == doctest::Approx(0.311).epsilon(0.0025));
}

TEST_CASE("quintic analytic moments match quadrature") {
  const auto q = oracle::quintic_moments();
  const auto h = quintic_hierarchy();
  CHECK(q.mean == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(analytic_reference(h, "expectation")->at(0) == doctest::Approx(q.mean).epsilon(1e-10));
  CHECK(analytic_reference(h, "variance")->at(0) == doctest::Approx(q.variance).epsilon(1e-10));
  CHECK(q.rho12 == doctest::Approx(0.974).epsilon(1e-3));
  // Exact raw correlation of the linear model; pilot estimates scatter around it.
  CHECK(q.rho13 == doctest::Approx(0.8193).epsilon(1e-3));
  CHECK(q.rho13 <= 0.92);
}

TEST_CASE("synthetic field closed forms") {
  const auto m1 = synthetic_field_moments(1.0);
  CHECK(m1.sigma1_sq == doctest::Approx(1.01));
  CHECK(synthetic_field_moments(0.0).rho12 == 1.0);
  CHECK(synthetic_field_moments(0.5).rho13 == doctest::Approx(1.0 / std::sqrt(1.0025)).epsilon(1e-14));
  CHECK(synthetic_field_moments(0.5).rho13 == doctest::Approx(0.99875).epsilon(1e-5));

  const auto h = synthetic_field_hierarchy(8);
  CHECK(h.output_length() == 8);
  REQUIRE(h.output_coordinates().size() == 8);
  CHECK(h.output_coordinates().front() == doctest::Approx(0.125));
  CHECK(h.output_coordinates().back() == doctest::Approx(1.0));
  const std::vector<double> s{0.3, -1.2, 2.0};
  const auto y1 = evaluate(h.model(0), s);
  const auto y2 = evaluate(h.model(1), s);
  const auto y3 = evaluate(h.model(2), s);
  for (std::size_t j = 0; j < 8; ++j) {
    const double x = h.output_coordinates()[j];
    CHECK(y3[j] == doctest::Approx(s[0] * std::sin(pi * x)));
    CHECK(y2[j] == doctest::Approx(s[0] * std::sin(pi * x) + s[1] * std::cos(pi * x)));
    CHECK(y1[j] == doctest::Approx(y2[j] + 0.1 * s[2] * x));
  }
  CHECK_THROWS(synthetic_field_hierarchy(0));
}

TEST_CASE("evaluation is deterministic and checks its input") {
  const auto h = ishigami_hierarchy();
  const std::vector<double> z{0.1, -2.0, 3.0};
  CHECK(evaluate(h.model(0), z) == evaluate(h.model(0), z));
  CHECK_THROWS_AS(evaluate(h.model(0), std::vector<double>{1.0, 2.0}), std::invalid_argument);

  const Model bad("bad", 1.0, 1, 1, [](std::span<const double> s, std::span<double> out) { out[0] = std::log(s[0]); });
  CHECK_THROWS_AS(evaluate(bad, std::vector<double>{-1.0}), EvaluationError);
}

TEST_CASE("ishigami plain Monte Carlo over 1e6 samples") {
  const auto h = ishigami_hierarchy();
  const Index n = 1000000;
  std::vector<Index> m{n, 0, 0};
  const auto evals = evaluate_nested(h, draw_inputs(h, n, 2024), m);
  const auto& y = evals.values(0);
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(n - 1);
  CHECK(std::abs(mean - 2.5) < 0.02);
  CHECK(std::abs(var - 10.845) < 0.1);
}
