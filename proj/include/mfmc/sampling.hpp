#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfmc/hierarchy.hpp"
#include "mfmc/types.hpp"

namespace mfmc {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless: every
/// output block is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;
  static Counter generate(Counter counter, Key key) noexcept;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Well-known stream ids. Different streams under the same seed are independent.
namespace streams {
inline constexpr std::uint32_t kEstimation = 0;
inline constexpr std::uint32_t kEstimationSecond = 1;
inline constexpr std::uint32_t kPilot = 2;
inline constexpr std::uint32_t kPilotSecond = 3;
}  // namespace streams

struct SampleSet {
  RowMatrix inputs;  // m x d
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  std::vector<Marginal> distribution;

  Index rows() const noexcept { return inputs.rows(); }
};

/// Draws m rows. Row r depends only on (seed, stream, r), so a smaller draw is always a
/// prefix of a larger one with the same seed and stream. `first_row` starts the draw
/// further along the sequence, for streaming large sets in chunks.
SampleSet draw_inputs(const ModelHierarchy& hierarchy, Index m, std::uint64_t seed,
                      std::uint32_t stream = streams::kEstimation, Index first_row = 0);

/// Base set s, second set s', and the d mixed sets y^j (rows of s' with coordinate j taken
/// from s).
struct SobolSampleBlock {
  SampleSet base;
  SampleSet second;
  std::vector<RowMatrix> mixed;

  Index rows() const noexcept { return base.rows(); }
  Index dimension() const noexcept { return base.inputs.cols(); }
  /// Blocks in evaluation order: s, s', y^1, ..., y^d.
  Index block_count() const noexcept { return 2 + dimension(); }
};

SobolSampleBlock build_sobol_block(const ModelHierarchy& hierarchy, Index m, std::uint64_t seed,
                                   std::uint32_t base_stream = streams::kEstimation,
                                   std::uint32_t second_stream = streams::kEstimationSecond);

/// Builds the mixed sets for given s and s' (which must have equal shape).
SobolSampleBlock make_sobol_block(SampleSet base, SampleSet second);

/// How evaluations on paired/mixed blocks are charged. per_evaluation charges every model
/// call; per_sample charges one call per nested sample row regardless of block count.
enum class CostConvention { per_evaluation, per_sample };

/// Model outputs on nested prefixes of a shared input sequence. outputs[i][b] holds model
/// i's values on block b, with m[i] rows. m[i] == 0 marks a model left out of the plan.
struct NestedEvaluations {
  std::vector<std::vector<RowMatrix>> outputs;
  std::vector<Index> m;
  std::vector<double> costs;
  RowMatrix inputs;  // base-block inputs actually used (max m rows)

  Index models() const noexcept { return static_cast<Index>(m.size()); }
  Index blocks() const noexcept { return outputs.empty() ? 0 : static_cast<Index>(outputs[0].size()); }
  Index components() const;
  const RowMatrix& values(Index model, Index block = 0) const;
  double realized_cost(CostConvention convention = CostConvention::per_evaluation) const;
};

/// Validates an evaluation-count vector: m[0] >= 1 and nondecreasing over the nonzero
/// entries. Zeros mark models left out. Throws std::invalid_argument.
void validate_counts(std::span<const Index> m, Index models);

/// On-disk store of model outputs keyed by (hierarchy, seed, stream, block, model, row).
/// One file per (hierarchy, seed, stream, block, model) holding a row prefix.
class EvaluationCache {
 public:
  struct Key {
    std::string hierarchy;
    std::uint64_t seed = 0;
    std::uint32_t stream = 0;
    Index block = 0;
    Index model = 0;
    /// Identifies the paired set for mixed Sobol blocks; 0 for plain sets.
    std::uint64_t partner = 0;
  };

  explicit EvaluationCache(std::filesystem::path directory);

  /// Cached rows for `key` (possibly fewer than requested), or nullopt if nothing stored.
  std::optional<RowMatrix> load(const Key& key) const;
  /// Stores `values`, replacing any shorter prefix already on disk.
  void store(const Key& key, const RowMatrix& values) const;
  std::filesystem::path path_for(const Key& key) const;

 private:
  std::filesystem::path directory_;
};

struct EvaluationOptions {
  unsigned jobs = 1;
  const EvaluationCache* cache = nullptr;
};

/// Model i evaluated on the first m[i] rows of `samples`.
NestedEvaluations evaluate_nested(const ModelHierarchy& hierarchy, const SampleSet& samples,
                                  std::span<const Index> m, const EvaluationOptions& options = {});

/// Model i evaluated on the first m[i] rows of every block of `block`.
NestedEvaluations evaluate_nested(const ModelHierarchy& hierarchy, const SobolSampleBlock& block,
                                  std::span<const Index> m, const EvaluationOptions& options = {});

/// Rows [begin, begin + count) of every model and block; all models must cover them.
NestedEvaluations slice_rows(const NestedEvaluations& evals, Index begin, Index count);

}  // namespace mfmc
