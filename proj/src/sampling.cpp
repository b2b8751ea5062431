#include "mfmc/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "mfmc/numeric.hpp"

namespace mfmc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform on the open interval (0, 1).
inline double unit_open(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double draw_coordinate(const Marginal& marginal, const Philox4x32::Counter& words) {
  return std::visit(
      [&](const auto& dist) {
        using T = std::decay_t<decltype(dist)>;
        const double u1 = unit_open(words[0], words[1]);
        if constexpr (std::is_same_v<T, Uniform>) {
          return dist.lower + (dist.upper - dist.lower) * u1;
        } else {
          const double u2 = unit_open(words[2], words[3]);
          const double z =
              std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
          return dist.mean + dist.stddev * z;
        }
      },
      marginal);
}

constexpr char kCacheMagic[8] = {'M', 'F', 'M', 'C', 'E', 'V', 'C', '1'};
constexpr Index kChunkRows = 2048;

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SampleSet draw_inputs(const ModelHierarchy& hierarchy, Index m, std::uint64_t seed,
                      std::uint32_t stream, Index first_row) {
  if (m < 1) throw std::invalid_argument("draw_inputs: m must be positive");
  if (first_row < 0) throw std::invalid_argument("draw_inputs: first_row must be nonnegative");
  const Index d = hierarchy.input_dimension();
  SampleSet set{RowMatrix(m, d), seed, stream, hierarchy.inputs()};
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (Index r = 0; r < m; ++r) {
    const auto row = static_cast<std::uint64_t>(first_row + r);
    for (Index c = 0; c < d; ++c) {
      const Philox4x32::Counter ctr{static_cast<std::uint32_t>(row),
                                    static_cast<std::uint32_t>(row >> 32),
                                    static_cast<std::uint32_t>(c), stream};
      set.inputs(r, c) = draw_coordinate(set.distribution[static_cast<std::size_t>(c)],
                                         Philox4x32::generate(ctr, key));
    }
  }
  return set;
}

SobolSampleBlock make_sobol_block(SampleSet base, SampleSet second) {
  if (base.inputs.rows() != second.inputs.rows() || base.inputs.cols() != second.inputs.cols()) {
    throw std::invalid_argument("make_sobol_block: base and second sets differ in shape");
  }
  SobolSampleBlock block{std::move(base), std::move(second), {}};
  const Index d = block.dimension();
  block.mixed.reserve(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    RowMatrix y = block.second.inputs;
    y.col(j) = block.base.inputs.col(j);
    block.mixed.push_back(std::move(y));
  }
  return block;
}

SobolSampleBlock build_sobol_block(const ModelHierarchy& hierarchy, Index m, std::uint64_t seed,
                                   std::uint32_t base_stream, std::uint32_t second_stream) {
  if (m < 2) throw std::invalid_argument("build_sobol_block: m must be at least 2");
  if (base_stream == second_stream) {
    throw std::invalid_argument("build_sobol_block: s and s' need distinct streams");
  }
  return make_sobol_block(draw_inputs(hierarchy, m, seed, base_stream),
                          draw_inputs(hierarchy, m, seed, second_stream));
}

Index NestedEvaluations::components() const {
  return outputs.empty() || outputs[0].empty() ? 0 : outputs[0][0].cols();
}

const RowMatrix& NestedEvaluations::values(Index model, Index block) const {
  return outputs.at(static_cast<std::size_t>(model)).at(static_cast<std::size_t>(block));
}

double NestedEvaluations::realized_cost(CostConvention convention) const {
  const double per_row = convention == CostConvention::per_evaluation ? static_cast<double>(blocks()) : 1.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) cost += costs[i] * static_cast<double>(m[i]) * per_row;
  return cost;
}

void validate_counts(std::span<const Index> m, Index models) {
  if (static_cast<Index>(m.size()) != models) {
    throw std::invalid_argument("evaluation counts: expected " + std::to_string(models) +
                                " entries, got " + std::to_string(m.size()));
  }
  if (m.empty() || m[0] < 1) throw std::invalid_argument("evaluation counts: m_1 must be >= 1");
  Index previous = m[0];
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i] < 0) throw std::invalid_argument("evaluation counts must be nonnegative");
    if (m[i] == 0) continue;
    if (m[i] < previous) {
      throw std::invalid_argument("evaluation counts must be nondecreasing over included models");
    }
    previous = m[i];
  }
}

EvaluationCache::EvaluationCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::filesystem::path EvaluationCache::path_for(const Key& key) const {
  std::string name = key.hierarchy + "_s" + std::to_string(key.seed) + "_t" +
                     std::to_string(key.stream) + "_p" + std::to_string(key.partner) + "_b" +
                     std::to_string(key.block) + "_m" + std::to_string(key.model) + ".bin";
  return directory_ / name;
}

std::optional<RowMatrix> EvaluationCache::load(const Key& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    throw Error("evaluation cache: corrupt file " + path_for(key).string());
  }
  RowMatrix values(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(rows * cols * sizeof(double)));
  if (!in) throw Error("evaluation cache: truncated file " + path_for(key).string());
  return values;
}

void EvaluationCache::store(const Key& key, const RowMatrix& values) const {
  if (auto existing = load(key); existing && existing->rows() >= values.rows()) return;
  const auto path = path_for(key);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const auto rows = static_cast<std::uint64_t>(values.rows());
    const auto cols = static_cast<std::uint64_t>(values.cols());
    out.write(kCacheMagic, sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!out) throw Error("evaluation cache: failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

struct BlockSource {
  const RowMatrix* inputs;
  std::optional<EvaluationCache::Key> key;  // without model index
};

RowMatrix evaluate_block(const Model& model, Index model_index, const BlockSource& source,
                         Index rows, const EvaluationOptions& options) {
  RowMatrix out(rows, model.output_length());
  Index start = 0;
  std::optional<EvaluationCache::Key> key = source.key;
  if (key) key->model = model_index;
  if (options.cache && key) {
    if (auto cached = options.cache->load(*key)) {
      if (cached->cols() != out.cols()) throw Error("evaluation cache: output width mismatch");
      start = std::min(rows, cached->rows());
      out.topRows(start) = cached->topRows(start);
    }
  }
  const Index pending = rows - start;
  const Index chunks = (pending + kChunkRows - 1) / kChunkRows;
  const Index d = source.inputs->cols();
  parallel_for(chunks, options.jobs, [&](Index c) {
    const Index begin = start + c * kChunkRows;
    const Index end = std::min(rows, begin + kChunkRows);
    for (Index r = begin; r < end; ++r) {
      std::span<const double> in(source.inputs->data() + r * d, static_cast<std::size_t>(d));
      std::span<double> o(out.data() + r * out.cols(), static_cast<std::size_t>(out.cols()));
      try {
        model.evaluate_into(in, o);
      } catch (const std::exception& e) {
        throw EvaluationError("model " + std::to_string(model_index) + " failed at sample " +
                                  std::to_string(r) + ": " + e.what(),
                              model_index, r);
      }
      for (double v : o) {
        if (!std::isfinite(v)) {
          throw EvaluationError("model " + std::to_string(model_index) +
                                    " produced a non-finite output at sample " + std::to_string(r),
                                model_index, r);
        }
      }
    }
  });
  if (options.cache && key && pending > 0) options.cache->store(*key, out);
  return out;
}

NestedEvaluations evaluate_blocks(const ModelHierarchy& hierarchy, std::span<const BlockSource> blocks,
                                  std::span<const Index> m, const EvaluationOptions& options) {
  validate_counts(m, hierarchy.size());
  const Index needed = *std::max_element(m.begin(), m.end());
  for (const auto& b : blocks) {
    if (b.inputs->rows() < needed) {
      throw std::invalid_argument("evaluate_nested: sample set has " +
                                  std::to_string(b.inputs->rows()) + " rows, need " +
                                  std::to_string(needed));
    }
    if (b.inputs->cols() != hierarchy.input_dimension()) {
      throw std::invalid_argument("evaluate_nested: sample dimension does not match hierarchy");
    }
  }
  NestedEvaluations evals;
  evals.m.assign(m.begin(), m.end());
  evals.costs = hierarchy.costs();
  evals.inputs = blocks[0].inputs->topRows(needed);
  evals.outputs.resize(static_cast<std::size_t>(hierarchy.size()));
  for (Index i = 0; i < hierarchy.size(); ++i) {
    auto& per_block = evals.outputs[static_cast<std::size_t>(i)];
    for (const auto& b : blocks) {
      per_block.push_back(evaluate_block(hierarchy.model(i), i, b, m[static_cast<std::size_t>(i)], options));
    }
  }
  return evals;
}

}  // namespace

NestedEvaluations evaluate_nested(const ModelHierarchy& hierarchy, const SampleSet& samples,
                                  std::span<const Index> m, const EvaluationOptions& options) {
  const BlockSource source{&samples.inputs,
                           EvaluationCache::Key{hierarchy.name(), samples.seed, samples.stream, 0, 0, 0}};
  return evaluate_blocks(hierarchy, std::span(&source, 1), m, options);
}

NestedEvaluations evaluate_nested(const ModelHierarchy& hierarchy, const SobolSampleBlock& block,
                                  std::span<const Index> m, const EvaluationOptions& options) {
  const auto& s = block.base;
  const auto& s2 = block.second;
  const std::uint64_t partner = derive_seed(s2.seed, s2.stream) | 1u;
  std::vector<BlockSource> sources;
  sources.push_back({&s.inputs, EvaluationCache::Key{hierarchy.name(), s.seed, s.stream, 0, 0, 0}});
  sources.push_back({&s2.inputs, EvaluationCache::Key{hierarchy.name(), s2.seed, s2.stream, 0, 0, 0}});
  for (Index j = 0; j < block.dimension(); ++j) {
    sources.push_back({&block.mixed[static_cast<std::size_t>(j)],
                       EvaluationCache::Key{hierarchy.name(), s.seed, s.stream, 2 + j, 0, partner}});
  }
  return evaluate_blocks(hierarchy, sources, m, options);
}

NestedEvaluations slice_rows(const NestedEvaluations& evals, Index begin, Index count) {
  if (begin < 0 || count < 1) throw std::invalid_argument("slice_rows: bad range");
  NestedEvaluations out;
  out.costs = evals.costs;
  out.m.assign(evals.m.size(), count);
  if (evals.inputs.rows() < begin + count) throw std::invalid_argument("slice_rows: range exceeds inputs");
  out.inputs = evals.inputs.middleRows(begin, count);
  for (const auto& per_block : evals.outputs) {
    auto& dst = out.outputs.emplace_back();
    for (const auto& y : per_block) {
      if (y.rows() < begin + count) throw std::invalid_argument("slice_rows: range exceeds model rows");
      dst.push_back(y.middleRows(begin, count));
    }
  }
  return out;
}

}  // namespace mfmc
