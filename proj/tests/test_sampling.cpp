#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include <doctest.h>

#include "mfmc/hierarchy.hpp"
#include "mfmc/numeric.hpp"
#include "mfmc/sampling.hpp"

using namespace mfmc;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::generate({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draws are prefixes of longer draws") {
  const auto h = ishigami_hierarchy();
  const auto a = draw_inputs(h, 5, 7);
  const auto b = draw_inputs(h, 9, 7);
  CHECK(a.inputs == b.inputs.topRows(5));
  CHECK(draw_inputs(h, 4, 7, streams::kEstimation, 5).inputs == b.inputs.bottomRows(4));
  CHECK(draw_inputs(h, 5, 8).inputs.row(0) != a.inputs.row(0));
  CHECK(draw_inputs(h, 5, 7, streams::kPilot).inputs.row(0) != a.inputs.row(0));
  CHECK_THROWS(draw_inputs(h, 0, 7));
}

TEST_CASE("input marginals have the declared moments") {
  const Index n = 1000000;
  const auto u = draw_inputs(ishigami_hierarchy(), n, 11).inputs;
  for (Index c = 0; c < 3; ++c) {
    CHECK(std::abs(u.col(c).mean()) < 0.01);
    CHECK(u.col(c).minCoeff() > -std::numbers::pi);
    CHECK(u.col(c).maxCoeff() < std::numbers::pi);
  }
  const auto g = draw_inputs(synthetic_field_hierarchy(4), 200000, 11).inputs;
  for (Index c = 0; c < 3; ++c) {
    const double mean = g.col(c).mean();
    const double var = (g.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
  }
}

TEST_CASE("sobol blocks follow the swap rule") {
  const auto h = ishigami_hierarchy();
  const auto block = build_sobol_block(h, 6, 5);
  CHECK(block.block_count() == 5);
  REQUIRE(block.mixed.size() == 3);
  for (Index i = 0; i < 6; ++i) {
    CHECK(block.mixed[0](i, 0) == block.base.inputs(i, 0));
    CHECK(block.mixed[0](i, 1) == block.second.inputs(i, 1));
    CHECK(block.mixed[0](i, 2) == block.second.inputs(i, 2));
  }
  CHECK(block.base.inputs != block.second.inputs);

  const auto same = make_sobol_block(block.second, block.second);
  for (const auto& y : same.mixed) CHECK(y == block.second.inputs);
  CHECK_THROWS(build_sobol_block(h, 1, 5));

  std::vector<Index> m{6, 6, 6};
  const auto evals = evaluate_nested(h, block, m);
  CHECK(evals.blocks() == 5);
  CHECK(evals.realized_cost(CostConvention::per_evaluation) == doctest::Approx(5 * 6 * 1.051));
  CHECK(evals.realized_cost(CostConvention::per_sample) == doctest::Approx(6 * 1.051));
}

TEST_CASE("nested evaluation contract") {
  const auto h = synthetic_field_hierarchy(4);
  const std::vector<Index> m{2, 5, 5};
  const auto samples = draw_inputs(h, 5, 3);
  const auto evals = evaluate_nested(h, samples, m);
  CHECK(evals.values(0).rows() == 2);
  CHECK(evals.values(1).rows() == 5);
  CHECK(evals.values(0).cols() == 4);
  CHECK(evals.inputs.topRows(5) == samples.inputs);
  // Rows shared between levels come from the same inputs.
  const auto direct = evaluate(h.model(1), std::vector<double>(samples.inputs.row(1).begin(), samples.inputs.row(1).end()));
  for (Index j = 0; j < 4; ++j) CHECK(evals.values(1)(1, j) == direct[static_cast<std::size_t>(j)]);

  const auto ish = ishigami_hierarchy();
  const std::vector<Index> table{7, 461, 9633};
  const auto big = evaluate_nested(ish, draw_inputs(ish, 9633, 1), table);
  CHECK(big.realized_cost() == doctest::Approx(39.683).epsilon(1e-12));
}

TEST_CASE("equal counts make the telescoping term vanish") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{3, 3};
  const auto two = ModelHierarchy("pair", {h.model(0), h.model(1)}, h.inputs());
  const auto evals = evaluate_nested(two, draw_inputs(two, 3, 9), m);
  const auto& y = evals.values(1);
  CHECK(prefix_column_mean(y, m[1])(0) - prefix_column_mean(y, m[0])(0) == 0.0);
}

TEST_CASE("count vectors are validated") {
  CHECK_NOTHROW(validate_counts(std::vector<Index>{1, 1, 4}, 3));
  CHECK_NOTHROW(validate_counts(std::vector<Index>{3, 8, 0}, 3));
  CHECK_NOTHROW(validate_counts(std::vector<Index>{3, 0, 8}, 3));
  CHECK_THROWS(validate_counts(std::vector<Index>{0, 4, 8}, 3));
  CHECK_THROWS(validate_counts(std::vector<Index>{5, 4, 8}, 3));
  CHECK_THROWS(validate_counts(std::vector<Index>{1, 4}, 3));
  CHECK_THROWS(validate_counts(std::vector<Index>{4, 0, 3}, 3));
}

TEST_CASE("evaluation failures carry model and sample index") {
  const auto base = ishigami_hierarchy();
  const Model flaky("flaky", 0.1, 3, 1, [](std::span<const double> s, std::span<double> out) {
    out[0] = s[0] > 2.5 ? std::numeric_limits<double>::quiet_NaN() : s[0];
  });
  const ModelHierarchy h("flaky", {base.model(0), flaky}, base.inputs());
  const auto samples = draw_inputs(h, 200, 4);
  Index first = -1;
  for (Index r = 0; r < samples.rows() && first < 0; ++r) {
    if (samples.inputs(r, 0) > 2.5) first = r;
  }
  REQUIRE(first >= 0);
  const std::vector<Index> m{10, 200};
  try {
    evaluate_nested(h, samples, m);
    FAIL("expected an evaluation error");
  } catch (const EvaluationError& e) {
    CHECK(e.model_index() == 1);
    CHECK(e.sample_index() == first);
  }
}

TEST_CASE("results do not depend on the worker count") {
  const auto h = ishigami_hierarchy();
  const std::vector<Index> m{100, 3000, 9000};
  const auto samples = draw_inputs(h, 9000, 21);
  EvaluationOptions one, many;
  many.jobs = 4;
  const auto a = evaluate_nested(h, samples, m, one);
  const auto b = evaluate_nested(h, samples, m, many);
  for (Index i = 0; i < 3; ++i) CHECK(a.values(i) == b.values(i));
}

TEST_CASE("evaluation cache round-trips exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "mfmc_cache_test";
  std::filesystem::remove_all(dir);
  const EvaluationCache cache(dir);
  const auto h = ishigami_hierarchy();
  const auto samples = draw_inputs(h, 500, 6);
  EvaluationOptions opts;
  opts.cache = &cache;
  const std::vector<Index> small{10, 100, 300};
  const std::vector<Index> large{20, 200, 500};
  const auto first = evaluate_nested(h, samples, small, opts);
  const auto second = evaluate_nested(h, samples, large, opts);
  const auto plain = evaluate_nested(h, samples, large);
  for (Index i = 0; i < 3; ++i) CHECK(second.values(i) == plain.values(i));

  const EvaluationCache::Key key{"ishigami", 6, streams::kEstimation, 0, 2, 0};
  const auto stored = cache.load(key);
  REQUIRE(stored.has_value());
  CHECK(stored->rows() == 500);
  CHECK(*stored == plain.values(2));
  std::filesystem::remove_all(dir);
}

TEST_CASE("shared inputs decorrelate the nested correction term") {
  // Over many replicates at m = (10, 40), the low-fidelity correction mean_10 - mean_40 is
  // uncorrelated with the low-fidelity mean on all 40 rows.
  const auto h = ishigami_hierarchy();
  const ModelHierarchy two("pair", {h.model(0), h.model(2)}, h.inputs());
  const std::vector<Index> m{10, 40};
  const int replicates = 5000;
  std::vector<double> a(replicates), b(replicates);
  for (int r = 0; r < replicates; ++r) {
    const auto evals = evaluate_nested(two, draw_inputs(two, 40, derive_seed(77, r)), m);
    a[r] = evals.values(1).mean();
    b[r] = evals.values(1).topRows(10).mean() - evals.values(1).mean();
  }
  double ma = 0, mb = 0;
  for (int r = 0; r < replicates; ++r) {
    ma += a[r] / replicates;
    mb += b[r] / replicates;
  }
  std::vector<double> prod(replicates);
  for (int r = 0; r < replicates; ++r) prod[r] = (a[r] - ma) * (b[r] - mb);
  double mp = 0, vp = 0;
  for (double p : prod) mp += p / replicates;
  for (double p : prod) vp += (p - mp) * (p - mp) / (replicates - 1);
  const double se = std::sqrt(vp / replicates);
  CHECK(std::abs(mp) < 3.0 * se);
}
