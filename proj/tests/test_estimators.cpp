#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "mfmc/allocation.hpp"
#include "mfmc/estimators.hpp"
#include "mfmc/hierarchy.hpp"
#include "mfmc/sampling.hpp"
#include "mfmc/statistic.hpp"
#include "oracles.hpp"

using namespace mfmc;

namespace {

AllocationPlan make_plan(std::vector<Index> m, std::vector<double> alpha) {
  AllocationPlan p;
  p.m = std::move(m);
  p.retained.assign(p.m.size(), true);
  p.alpha = RowMatrix(static_cast<Index>(alpha.size()), 1);
  for (std::size_t i = 0; i < alpha.size(); ++i) p.alpha(static_cast<Index>(i), 0) = alpha[i];
  return p;
}

std::vector<double> col(const RowMatrix& m, Index rows) {
  std::vector<double> v(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) v[static_cast<std::size_t>(r)] = m(r, 0);
  return v;
}

// Applies the same row permutation, restricted to each prefix segment, to every model/block.
NestedEvaluations permute_segments(const NestedEvaluations& e, const std::vector<Index>& m, std::uint64_t seed) {
  std::vector<Index> cuts{0};
  for (Index v : m) {
    if (v > cuts.back()) cuts.push_back(v);
  }
  std::vector<Index> perm(static_cast<std::size_t>(cuts.back()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 1; s < cuts.size(); ++s) std::shuffle(perm.begin() + cuts[s - 1], perm.begin() + cuts[s], rng);
  NestedEvaluations out = e;
  for (auto& model : out.outputs) {
    for (auto& block : model) {
      RowMatrix copy = block;
      for (Index r = 0; r < block.rows(); ++r) block.row(r) = copy.row(perm[static_cast<std::size_t>(r)]);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("hand-evaluated two-level estimate") {
  NestedEvaluations e;
  e.outputs = {{RowMatrix::Constant(1, 1, 2.0)}, {(RowMatrix(2, 1) << 1.0, 3.0).finished()}};
  e.m = {1, 2};
  e.costs = {1.0, 0.1};
  const auto r = mfmc_expectation(e, make_plan({1, 2}, {1.0, 1.0}));
  CHECK(r.values.at(0) == doctest::Approx(3.0));
  CHECK(r.realized_cost == doctest::Approx(1.2));
}

TEST_CASE("zero coefficients give the plain high-fidelity mean") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{20, 200, 2000};
  const auto e = evaluate_nested(h, draw_inputs(h, 2000, 4), m);
  const auto r = mfmc_expectation(e, make_plan(m, {1.0, 0.0, 0.0}));
  CHECK(r.values.at(0) == doctest::Approx(e.values(0).mean()).epsilon(1e-14));
}

TEST_CASE("equal counts contribute nothing whatever the coefficient") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{30, 30, 300};
  const auto e = evaluate_nested(h, draw_inputs(h, 300, 5), m);
  for (const auto& stat : {expectation_statistic(), variance_statistic()}) {
    const auto a = mfmc_statistic(e, make_plan(m, {1.0, 0.0, 0.8}), stat);
    const auto b = mfmc_statistic(e, make_plan(m, {1.0, 123.0, 0.8}), stat);
    CHECK(a.values.at(0) == b.values.at(0));
  }
}

TEST_CASE("plug-in expectation and the identity bridge agree with the direct estimator") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{10, 100, 1000};
  const auto e = evaluate_nested(h, draw_inputs(h, 1000, 6), m);
  const auto plan = make_plan(m, {1.0, 1.01, 0.88});
  const auto direct = mfmc_expectation(e, plan);
  CHECK(mfmc_statistic(e, plan, expectation_statistic()).values == direct.values);
  CHECK(mfmc_nonlinear(e, plan, identity_bridge(3, 1)).values.at(0) == doctest::Approx(direct.values.at(0)).epsilon(1e-14));
}

TEST_CASE("single model reduces to the single-level statistic") {
  const auto h = ishigami_hierarchy();
  const ModelHierarchy one("one", {h.model(0)}, h.inputs());
  const std::vector<Index> m{50};
  const auto e = evaluate_nested(one, draw_inputs(one, 50, 7), m);
  const auto v = mfmc_statistic(e, make_plan(m, {1.0}), variance_statistic());
  CHECK(v.values.at(0) == doctest::Approx(single_level_variance(col(e.values(0), 50))).epsilon(1e-13));
}

TEST_CASE("single-level variance") {
  CHECK(single_level_variance(std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
  CHECK(single_level_variance(std::vector<double>(7, 4.5)) == 0.0);
  CHECK_THROWS(single_level_variance(std::vector<double>{1.0}));

  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{1000000, 0, 0};
  const auto e = evaluate_nested(h, draw_inputs(h, 1000000, 99), m);
  CHECK(std::abs(single_level_variance(col(e.values(0), 1000000)) - 10.845) < 0.1);
}

TEST_CASE("estimates do not depend on the order within each prefix") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{12, 90, 700};
  const auto plan = make_plan(m, {1.0, 1.01, 0.9});
  const auto e = evaluate_nested(h, draw_inputs(h, 700, 8), m);
  const auto p = permute_segments(e, m, 3);
  for (const auto& stat : {expectation_statistic(), variance_statistic()}) {
    const double a = mfmc_statistic(e, plan, stat).values.at(0);
    const double b = mfmc_statistic(p, plan, stat).values.at(0);
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  }
  const auto sb = evaluate_nested(h, build_sobol_block(h, 700, 8), m);
  const auto sp = permute_segments(sb, m, 4);
  for (const auto& stat : {sobol_main_statistic(3), sobol_total_statistic(3)}) {
    const auto a = mfmc_statistic(sb, plan, stat).values;
    const auto b = mfmc_statistic(sp, plan, stat).values;
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-10 * std::max(1.0, std::abs(a[j])));
  }
}

TEST_CASE("statistic prerequisites are enforced") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{1, 10, 100};
  const auto e = evaluate_nested(h, draw_inputs(h, 100, 1), m);
  CHECK_THROWS(mfmc_statistic(e, make_plan(m, {1, 1, 1}), variance_statistic()));
  CHECK_THROWS(mfmc_statistic(e, make_plan({2, 10, 100}, {1, 1, 1}), expectation_statistic()));
  CHECK_THROWS(mfmc_statistic(e, make_plan(m, {1, 1, 1}), sobol_main_statistic(3)));
  CHECK_THROWS(mfmc_statistic(e, make_plan({1, 10}, {1, 1}), expectation_statistic()));
  CHECK_THROWS_WITH(statistic_by_name("kurtosis", 3), doctest::Contains("unknown statistic"));
}

TEST_CASE("total effect of an inactive coordinate is exactly zero") {
  const auto h = quintic_hierarchy();  // f is additive, every coordinate active
  const Model partial("partial", 1.0, 3, 1, [](std::span<const double> s, std::span<double> out) {
    out[0] = std::sin(s[0]) + s[1] * s[1];
  });
  const ModelHierarchy g("partial", {partial}, h.inputs());
  const auto block = build_sobol_block(g, 500, 2);
  const std::vector<Index> m{500};
  const auto e = evaluate_nested(g, block, m);
  const auto r = sobol_single_level(col(e.values(0, 0), 500), col(e.values(0, 1), 500), col(e.values(0, 4), 500));
  CHECK(r.total == 0.0);
  CHECK(r.normalized_total == 0.0);
}

TEST_CASE("main effect of a purely additive coordinate tends to one") {
  const Model linear("linear", 1.0, 3, 1, [](std::span<const double> s, std::span<double> out) { out[0] = s[1]; });
  const ModelHierarchy g("linear", {linear}, ishigami_hierarchy().inputs());
  const Index n = 200000;
  const auto e = evaluate_nested(g, build_sobol_block(g, n, 3), std::vector<Index>{n});
  const auto r = sobol_single_level(col(e.values(0, 0), n), col(e.values(0, 1), n), col(e.values(0, 3), n));
  CHECK(r.normalized_main == doctest::Approx(1.0).epsilon(0.01));
  CHECK(r.normalized_total == doctest::Approx(1.0).epsilon(0.01));
  const auto other = sobol_single_level(col(e.values(0, 0), n), col(e.values(0, 1), n), col(e.values(0, 2), n));
  CHECK(std::abs(other.normalized_main) < 0.01);
  CHECK(other.total == 0.0);
}

TEST_CASE("literal main-effect display is consistent on an additive model") {
  // psi = z_1 + 2 z_2 with z ~ U(-pi, pi): V_1 = pi^2 / 3. The display has expectation
  // 2m/(2m-1) V_1, so the replicate mean at m = 40 sits 1.3% above V_1.
  const Model additive("additive", 1.0, 3, 1, [](std::span<const double> s, std::span<double> out) {
    out[0] = s[0] + 2.0 * s[1];
  });
  const ModelHierarchy g("additive", {additive}, ishigami_hierarchy().inputs());
  const Index m = 40;
  const int replicates = 4000;
  std::vector<double> v(replicates);
  for (int r = 0; r < replicates; ++r) {
    const auto e = evaluate_nested(g, build_sobol_block(g, m, derive_seed(5, r)), std::vector<Index>{m});
    v[static_cast<std::size_t>(r)] = sobol_single_level(col(e.values(0, 0), m), col(e.values(0, 1), m), col(e.values(0, 2), m)).main;
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / replicates;
  const double se = std::sqrt(single_level_variance(v) / replicates);
  const double exact = oracle::kPi * oracle::kPi / 3.0;
  const double md = static_cast<double>(m);
  CHECK(std::abs(mean - 2.0 * md / (2.0 * md - 1.0) * exact) < 4.0 * se);
}

TEST_CASE("multifidelity sobol plug-in with one model matches the single-level display") {
  const auto h = ishigami_hierarchy();
  const ModelHierarchy one("one", {h.model(0)}, h.inputs());
  const Index n = 300;
  const auto e = evaluate_nested(one, build_sobol_block(one, n, 12), std::vector<Index>{n});
  const auto main = mfmc_statistic(e, make_plan({n}, {1.0}), sobol_main_statistic(3)).values;
  const auto total = mfmc_statistic(e, make_plan({n}, {1.0}), sobol_total_statistic(3)).values;
  for (Index j = 0; j < 3; ++j) {
    const auto s = sobol_single_level(col(e.values(0, 0), n), col(e.values(0, 1), n), col(e.values(0, 2 + j), n));
    CHECK(main[static_cast<std::size_t>(j)] == doctest::Approx(s.main).epsilon(1e-12));
    CHECK(total[static_cast<std::size_t>(j)] == doctest::Approx(s.total).epsilon(1e-12));
  }
}

TEST_CASE("report serializes its plan and values") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{5, 50, 500};
  const auto e = evaluate_nested(h, draw_inputs(h, 500, 2), m);
  auto r = mfmc_expectation(e, make_plan(m, {1.0, 1.0, 0.9}));
  r.seed = 42;
  const auto j = to_json(r);
  CHECK(j.at("statistic") == "expectation");
  CHECK(j.at("seed") == 42);
  CHECK(j.at("plan").at("m") == std::vector<Index>{5, 50, 500});
  CHECK(j.at("realized_cost").get<double>() == doctest::Approx(5 + 2.5 + 0.5));
}
