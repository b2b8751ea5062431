#include "mfmc/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mfmc/numeric.hpp"
#include "mfmc/statistic.hpp"

namespace mfmc {

std::string to_string(EstimatorMode mode) {
  return mode == EstimatorMode::linear ? "linear" : "nonlinear";
}

EstimatorMode estimator_mode_from_string(const std::string& s) {
  if (s == "linear") return EstimatorMode::linear;
  if (s == "nonlinear") return EstimatorMode::nonlinear;
  throw std::invalid_argument("unknown estimator mode '" + s + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t replicate_seed(std::uint64_t seed, Index replicate) {
  return derive_seed(seed, static_cast<std::uint64_t>(replicate));
}

namespace {

bool is_sobol(const std::string& statistic) { return is_sobol_statistic(statistic); }

std::vector<double> statistic_weights(const ModelHierarchy& h, const std::string& statistic,
                                      const PipelineSettings& settings) {
  if (is_sobol(statistic)) {
    const auto d = static_cast<std::size_t>(h.input_dimension());
    if (settings.index_weights.empty()) return std::vector<double>(d, 1.0);
    if (settings.index_weights.size() != d) {
      throw std::invalid_argument("index_weights must have one entry per input coordinate");
    }
    return settings.index_weights;
  }
  const auto c = static_cast<std::size_t>(h.output_length());
  if (!settings.output_weights.empty()) {
    if (settings.output_weights.size() != c) {
      throw std::invalid_argument("output_weights must have one entry per output component");
    }
    return settings.output_weights;
  }
  if (!h.output_weights().empty()) return h.output_weights();
  return std::vector<double>(c, 1.0);
}

CostConvention convention_for(const std::string& statistic, const PipelineSettings& settings) {
  return is_sobol(statistic) ? settings.sobol_cost : CostConvention::per_evaluation;
}

NestedEvaluations evaluate_all(const ModelHierarchy& h, const std::string& statistic, Index rows,
                               std::span<const Index> m, std::uint64_t seed, std::uint32_t base_stream,
                               std::uint32_t second_stream, unsigned jobs) {
  EvaluationOptions options;
  options.jobs = jobs;
  if (is_sobol(statistic)) {
    return evaluate_nested(h, build_sobol_block(h, rows, seed, base_stream, second_stream), m, options);
  }
  return evaluate_nested(h, draw_inputs(h, rows, seed, base_stream), m, options);
}

PilotStats pilot_stats_for(const NestedEvaluations& evals, const StatisticPlugin& stat, const Bridge* bridge,
                           Index n) {
  if (bridge) return estimate_g_stats(evals, *bridge, n, stat);
  if (stat.label == "expectation") return estimate_moment_stats(evals, n);
  return estimate_q_stats(evals, stat, n);
}

}  // namespace

CostModel effective_costs(const ModelHierarchy& hierarchy, const std::string& statistic,
                          const PipelineSettings& settings) {
  CostModel costs(hierarchy.costs());
  if (is_sobol(statistic) && settings.sobol_cost == CostConvention::per_evaluation) {
    return costs.scaled(static_cast<double>(hierarchy.input_dimension() + 2));
  }
  return costs;
}

PilotResult run_pilot(const ModelHierarchy& hierarchy, const std::string& statistic, EstimatorMode mode,
                      std::uint64_t seed, const PipelineSettings& settings) {
  const auto stat = statistic_by_name(statistic, hierarchy.input_dimension());
  PilotResult out;
  out.statistic = statistic;
  out.mode = mode;

  Index training = 0;
  Index correlation = settings.pilot_size;
  if (mode == EstimatorMode::nonlinear) {
    if (settings.training_size > 0) {
      training = settings.training_size;
    } else {
      training = settings.pilot_size / 2;
      correlation = settings.pilot_size - training;
    }
    if (training < 5) throw std::invalid_argument("pilot: regression training needs at least 5 samples");
  }
  if (correlation < 3) throw std::invalid_argument("pilot: N must be at least 3");
  out.training_rows = training;
  out.correlation_rows = correlation;

  const Index rows = training + correlation;
  const std::vector<Index> m(static_cast<std::size_t>(hierarchy.size()), rows);
  const auto evals = evaluate_all(hierarchy, statistic, rows, m, seed, streams::kPilot, streams::kPilotSecond,
                                  settings.jobs);
  out.cost = evals.realized_cost(convention_for(statistic, settings));

  const NestedEvaluations corr = training > 0 ? slice_rows(evals, training, correlation) : evals;
  if (mode == EstimatorMode::nonlinear) {
    const auto train = slice_rows(evals, 0, training);
    std::vector<RowMatrix> base;
    for (Index i = 0; i < train.models(); ++i) base.push_back(train.values(i, 0));
    out.bridge = fit_bridge(base);
  }
  const Bridge* bridge = out.bridge ? &*out.bridge : nullptr;
  out.stats = pilot_stats_for(corr, stat, bridge, correlation);
  out.aggregated = aggregate_vector_stats(out.stats, statistic_weights(hierarchy, statistic, settings));

  if (is_sobol(statistic)) {
    const auto var = pilot_stats_for(corr, variance_statistic(), bridge, correlation);
    out.variance_alpha = RowMatrix::Zero(var.sigma.rows(), 1);
    out.variance_alpha(0, 0) = 1.0;
    for (Index i = 1; i < var.sigma.rows(); ++i) {
      const double si = var.sigma(i, 0);
      out.variance_alpha(i, 0) = si > 0.0 && std::isfinite(var.rho(i, 0)) ? var.rho(i, 0) * var.sigma(0, 0) / si : 0.0;
    }
  }
  return out;
}

EstimateReport estimate_with_pilot(const ModelHierarchy& hierarchy, const PilotResult& pilot, double budget,
                                   std::uint64_t seed, const PipelineSettings& settings) {
  const auto stat = statistic_by_name(pilot.statistic, hierarchy.input_dimension());
  const auto costs = effective_costs(hierarchy, pilot.statistic, settings);
  const double estimation_budget = settings.fold_pilot_cost ? budget - pilot.cost : budget;
  if (!(estimation_budget > 0.0)) {
    throw BudgetError("budget " + format_double(budget) + " does not cover the pilot cost " +
                      format_double(pilot.cost));
  }
  AllocationOptions options;
  options.min_high_fidelity_samples = std::max<Index>(1, stat.min_samples);
  const auto plan = optimal_allocation(pilot.aggregated, costs, estimation_budget, options);

  const Index rows = *std::max_element(plan.m.begin(), plan.m.end());
  const auto evals = evaluate_all(hierarchy, pilot.statistic, rows, plan.m, seed, streams::kEstimation,
                                  streams::kEstimationSecond, settings.jobs);
  const Bridge* bridge = pilot.bridge ? &*pilot.bridge : nullptr;
  const auto convention = convention_for(pilot.statistic, settings);
  auto report = mfmc_statistic(evals, plan, stat, bridge, convention);

  if (is_sobol(pilot.statistic)) {
    AllocationPlan vplan = plan;
    vplan.alpha = pilot.variance_alpha;
    const auto variance = mfmc_statistic(evals, vplan, variance_statistic(), bridge, convention);
    const double v = variance.values.at(0);
    report.normalized.resize(report.values.size());
    for (std::size_t j = 0; j < report.values.size(); ++j) {
      report.normalized[j] = v > 0.0 ? report.values[j] / v : std::numeric_limits<double>::quiet_NaN();
    }
  }
  report.pilot_cost = pilot.cost;
  report.pilot_size = pilot.correlation_rows + pilot.training_rows;
  report.seed = seed;
  if (settings.fold_pilot_cost) report.realized_cost += pilot.cost;
  return report;
}

PipelineRun run_pipeline(const ModelHierarchy& hierarchy, const std::string& statistic, EstimatorMode mode,
                         double budget, std::uint64_t seed, const PipelineSettings& settings) {
  PipelineRun run;
  run.pilot = run_pilot(hierarchy, statistic, mode, seed, settings);
  run.report = estimate_with_pilot(hierarchy, run.pilot, budget, seed, settings);
  return run;
}

// ---------------------------------------------------------------------------------------
// Reference values

namespace {

// Count, mean and sum of squared deviations; merged with Chan's update.
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  static Moments of(std::span<const double> x) {
    Moments out;
    out.n = static_cast<double>(x.size());
    out.mean = pairwise_sum(x) / out.n;
    std::vector<double> sq(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - out.mean) * (x[i] - out.mean);
    out.m2 = pairwise_sum(sq);
    return out;
  }

  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    const double n_total = n + o.n;
    const double delta = o.mean - mean;
    mean += delta * o.n / n_total;
    m2 += o.m2 + delta * delta * n * o.n / n_total;
    n = n_total;
  }

  double variance() const { return m2 / (n - 1.0); }
};

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double v) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

std::vector<double> column(const RowMatrix& m, Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

constexpr Index kReferenceChunk = 1 << 16;
constexpr std::uint32_t kReferenceStream = 7;
constexpr std::uint32_t kReferenceSecondStream = 8;

}  // namespace

nlohmann::json make_reference(const ModelHierarchy& hierarchy, const std::vector<std::string>& statistics,
                              Index samples, std::uint64_t seed, unsigned jobs) {
  if (samples < 2) throw std::invalid_argument("make_reference: need at least 2 samples");
  for (const auto& s : statistics) (void)statistic_by_name(s, hierarchy.input_dimension());
  const bool want_plain = std::any_of(statistics.begin(), statistics.end(), [](const auto& s) { return !is_sobol(s); });
  const bool want_sobol = std::any_of(statistics.begin(), statistics.end(), [](const auto& s) { return is_sobol(s); });

  const Index c = hierarchy.output_length();
  const Index d = hierarchy.input_dimension();
  const auto k = static_cast<std::size_t>(hierarchy.size());
  EvaluationOptions options;
  options.jobs = jobs;

  std::vector<Moments> plain(static_cast<std::size_t>(c));
  Moments base, second;
  std::vector<KahanSum> products(static_cast<std::size_t>(d)), jansen(static_cast<std::size_t>(d));

  for (Index begin = 0; begin < samples; begin += kReferenceChunk) {
    const Index n = std::min(kReferenceChunk, samples - begin);
    std::vector<Index> m(k, 0);
    m[0] = n;
    if (want_plain) {
      const auto evals = evaluate_nested(hierarchy, draw_inputs(hierarchy, n, seed, kReferenceStream, begin), m, options);
      for (Index j = 0; j < c; ++j) plain[static_cast<std::size_t>(j)].merge(Moments::of(column(evals.values(0), j)));
    }
    if (want_sobol) {
      const auto block = make_sobol_block(draw_inputs(hierarchy, n, seed, kReferenceStream, begin),
                                          draw_inputs(hierarchy, n, seed, kReferenceSecondStream, begin));
      const auto evals = evaluate_nested(hierarchy, block, m, options);
      const auto fs = column(evals.values(0, 0), 0);
      const auto fs2 = column(evals.values(0, 1), 0);
      base.merge(Moments::of(fs));
      second.merge(Moments::of(fs2));
      std::vector<double> buf(static_cast<std::size_t>(n));
      for (Index j = 0; j < d; ++j) {
        const auto fy = column(evals.values(0, 2 + j), 0);
        for (std::size_t r = 0; r < buf.size(); ++r) buf[r] = fs[r] * fy[r];
        products[static_cast<std::size_t>(j)].add(pairwise_sum(buf));
        for (std::size_t r = 0; r < buf.size(); ++r) buf[r] = (fs2[r] - fy[r]) * (fs2[r] - fy[r]);
        jansen[static_cast<std::size_t>(j)].add(pairwise_sum(buf));
      }
    }
  }

  nlohmann::json values = nlohmann::json::object();
  const double md = static_cast<double>(samples);
  for (const auto& s : statistics) {
    std::vector<double> v;
    if (s == "expectation") {
      for (const auto& p : plain) v.push_back(p.mean);
    } else if (s == "variance") {
      for (const auto& p : plain) v.push_back(p.variance());
    } else {
      const double var = base.variance();
      const double centre = 0.5 * (base.mean + second.mean);
      for (Index j = 0; j < d; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double value =
            s == "sobol-main"
                ? 2.0 / (2.0 * md - 1.0) * (products[ju].sum - md * centre * centre + 0.25 * (var + second.variance()))
                : jansen[ju].sum / (2.0 * md);
        v.push_back(value / var);
      }
    }
    values[s] = v;
  }
  return {{"hierarchy", hierarchy.name()}, {"samples", samples}, {"seed", seed}, {"statistics", values}};
}

// ---------------------------------------------------------------------------------------
// Configuration

nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json j{{"hierarchy", c.hierarchy},
                   {"field_points", c.field_points},
                   {"costs", c.costs},
                   {"statistics", c.statistics},
                   {"modes", c.modes},
                   {"pilot_size", c.pilot_size},
                   {"training_size", c.training_size},
                   {"budgets", c.budgets},
                   {"budget_unit", c.budget_unit},
                   {"replicates", c.replicates},
                   {"seed", c.seed},
                   {"out_dir", c.out_dir},
                   {"output_weights", c.output_weights},
                   {"index_weights", c.index_weights},
                   {"fold_pilot_cost", c.fold_pilot_cost},
                   {"sobol_cost", c.sobol_cost},
                   {"jobs", c.jobs},
                   {"reference_file", c.reference_file}};
  j["tolerance"] = c.tolerance ? nlohmann::json(*c.tolerance) : nlohmann::json(nullptr);
  return j;
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  StudyConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "hierarchy") c.hierarchy = v.get<std::string>();
      else if (key == "field_points") c.field_points = v.get<Index>();
      else if (key == "costs") c.costs = v.get<std::vector<double>>();
      else if (key == "statistics") c.statistics = v.is_string() ? std::vector<std::string>{v.get<std::string>()} : v.get<std::vector<std::string>>();
      else if (key == "modes" || key == "mode") c.modes = v.is_string() ? std::vector<std::string>{v.get<std::string>()} : v.get<std::vector<std::string>>();
      else if (key == "pilot_size") c.pilot_size = v.get<Index>();
      else if (key == "training_size") c.training_size = v.get<Index>();
      else if (key == "budgets") c.budgets = v.is_number() ? std::vector<double>{v.get<double>()} : v.get<std::vector<double>>();
      else if (key == "budget_unit") c.budget_unit = v.get<std::string>();
      else if (key == "tolerance") c.tolerance = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (key == "replicates") c.replicates = v.get<Index>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else if (key == "output_weights") c.output_weights = v.get<std::vector<double>>();
      else if (key == "index_weights") c.index_weights = v.get<std::vector<double>>();
      else if (key == "fold_pilot_cost") c.fold_pilot_cost = v.get<bool>();
      else if (key == "sobol_cost") c.sobol_cost = v.get<std::string>();
      else if (key == "jobs") c.jobs = v.get<unsigned>();
      else if (key == "reference_file") c.reference_file = v.get<std::string>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return study_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

void apply_override(StudyConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  auto j = to_json(config);
  auto parsed = nlohmann::json::parse(text, nullptr, false);
  j[key] = parsed.is_discarded() ? nlohmann::json(text) : parsed;
  config = study_config_from_json(j);
}

void validate(const StudyConfig& c) {
  if (c.budgets.empty() == !c.tolerance.has_value()) {
    throw std::invalid_argument("config: set exactly one of budgets and tolerance");
  }
  if (c.replicates < 1) throw std::invalid_argument("config: replicates must be at least 1");
  if (c.tolerance && !(*c.tolerance > 0.0)) throw std::invalid_argument("config: tolerance must be positive");
  for (double b : c.budgets) {
    if (!(b > 0.0)) throw std::invalid_argument("config: budgets must be positive");
  }
  if (c.budget_unit != "hf" && c.budget_unit != "absolute") {
    throw std::invalid_argument("config: budget_unit must be 'hf' or 'absolute'");
  }
  if (c.sobol_cost != "per-evaluation" && c.sobol_cost != "per-sample") {
    throw std::invalid_argument("config: sobol_cost must be 'per-evaluation' or 'per-sample'");
  }
  if (c.statistics.empty()) throw std::invalid_argument("config: no statistics");
  if (c.modes.empty()) throw std::invalid_argument("config: no estimator modes");
  const auto h = make_hierarchy(c);
  for (const auto& s : c.statistics) (void)statistic_by_name(s, h.input_dimension());
  for (const auto& m : c.modes) (void)estimator_mode_from_string(m);
}

ModelHierarchy make_hierarchy(const StudyConfig& c) {
  return hierarchy_by_name(c.hierarchy, c.costs, c.field_points);
}

PipelineSettings make_settings(const StudyConfig& c) {
  PipelineSettings s;
  s.pilot_size = c.pilot_size;
  s.training_size = c.training_size;
  s.fold_pilot_cost = c.fold_pilot_cost;
  s.sobol_cost = c.sobol_cost == "per-sample" ? CostConvention::per_sample : CostConvention::per_evaluation;
  s.output_weights = c.output_weights;
  s.index_weights = c.index_weights;
  s.jobs = 1;
  return s;
}

std::optional<std::vector<double>> reference_values(const ModelHierarchy& hierarchy, const StudyConfig& config,
                                                    const std::string& statistic) {
  if (auto exact = analytic_reference(hierarchy, statistic)) return exact;
  if (config.reference_file.empty()) return std::nullopt;
  std::ifstream in(config.reference_file);
  if (!in) throw std::runtime_error("cannot open reference file " + config.reference_file);
  const auto j = nlohmann::json::parse(in);
  if (j.value("hierarchy", std::string()) != hierarchy.name()) {
    throw std::invalid_argument("reference file " + config.reference_file + " is for hierarchy '" +
                                j.value("hierarchy", std::string()) + "'");
  }
  const auto& stats = j.at("statistics");
  if (!stats.contains(statistic)) return std::nullopt;
  return stats.at(statistic).get<std::vector<double>>();
}

// ---------------------------------------------------------------------------------------
// Studies

StudyResults compute_study(const StudyConfig& config) {
  validate(config);
  const auto hierarchy = make_hierarchy(config);
  const auto settings = make_settings(config);
  const double w1 = hierarchy.costs().front();

  struct Job {
    std::string statistic;
    EstimatorMode mode;
  };
  std::vector<Job> jobs;
  for (const auto& s : config.statistics) {
    for (const auto& m : config.modes) jobs.push_back({s, estimator_mode_from_string(m)});
  }
  const std::size_t budgets = config.tolerance ? 1 : config.budgets.size();

  StudyResults results;
  results.config = config;
  for (const auto& job : jobs) {
    for (std::size_t b = 0; b < budgets; ++b) {
      StudyCell cell;
      cell.statistic = job.statistic;
      cell.mode = to_string(job.mode);
      cell.budget_index = static_cast<Index>(b);
      cell.records.resize(static_cast<std::size_t>(config.replicates));
      results.cells.push_back(std::move(cell));
    }
  }

  parallel_for(config.replicates, std::max(1u, config.jobs), [&](Index r) {
    const auto seed = replicate_seed(config.seed, r);
    for (std::size_t jb = 0; jb < jobs.size(); ++jb) {
      const auto& job = jobs[jb];
      const auto pilot = run_pilot(hierarchy, job.statistic, job.mode, seed, settings);
      for (std::size_t b = 0; b < budgets; ++b) {
        double budget = 0.0;
        if (config.tolerance) {
          budget = budget_for_tolerance(pilot.aggregated, effective_costs(hierarchy, job.statistic, settings),
                                        *config.tolerance);
          if (settings.fold_pilot_cost) budget += pilot.cost;
        } else {
          budget = config.budget_unit == "hf" ? config.budgets[b] * w1 : config.budgets[b];
        }
        auto& rec = results.cells[jb * budgets + b].records[static_cast<std::size_t>(r)];
        rec.replicate = r;
        rec.budget_p = budget / w1;
        rec.report = estimate_with_pilot(hierarchy, pilot, budget, seed, settings);
        rec.pilot = pilot.stats;
        rec.rho_bar_sq = pilot.aggregated.rho_bar_sq;
        if (rec.report.normalized.empty()) {
          rec.values = rec.report.values;
          rec.predicted_mse = rec.report.predicted_mse;
        } else {
          rec.values = rec.report.normalized;
          const double v = rec.report.values.front() / rec.report.normalized.front();
          rec.predicted_mse = rec.report.predicted_mse / (v * v);
        }
      }
    }
  });
  return results;
}

namespace {

std::vector<double> summary_weights(const ModelHierarchy& h, const StudyConfig& config, const std::string& statistic) {
  return statistic_weights(h, statistic, make_settings(config));
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace

CellSummary summarize(const StudyCell& cell, const ModelHierarchy& hierarchy, const StudyConfig& config) {
  CellSummary s;
  const auto n = cell.records.size();
  const auto c = cell.records.front().values.size();
  s.mean.assign(c, 0.0);
  s.standard_error.assign(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = cell.records[r].values[j];
    s.mean[j] = mean_of(v);
    if (n > 1) s.standard_error[j] = std::sqrt(single_level_variance(v) / static_cast<double>(n));
  }
  std::vector<double> pred(n), realized(n), pilot(n), budget(n);
  for (std::size_t r = 0; r < n; ++r) {
    pred[r] = cell.records[r].predicted_mse;
    realized[r] = cell.records[r].report.realized_cost;
    pilot[r] = cell.records[r].report.pilot_cost;
    budget[r] = cell.records[r].budget_p;
  }
  s.predicted_mse = mean_of(pred);
  s.total_realized_cost = pairwise_sum(realized);
  s.total_pilot_cost = pairwise_sum(pilot);
  s.mean_budget_p = mean_of(budget);

  s.reference = reference_values(hierarchy, config, cell.statistic);
  if (s.reference) {
    if (s.reference->size() != c) throw std::invalid_argument("reference for " + cell.statistic + " has wrong length");
    const auto w = summary_weights(hierarchy, config, cell.statistic);
    double mse = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      std::vector<double> sq(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double e = cell.records[r].values[j] - (*s.reference)[j];
        sq[r] = e * e;
      }
      mse += w[j] * mean_of(sq);
      norm += w[j] * (*s.reference)[j] * (*s.reference)[j];
    }
    s.empirical_mse = mse;
    s.relative_mse = norm > 0.0 ? mse / norm : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

std::string allocation_table(const StudyCell& cell, const ModelHierarchy& hierarchy) {
  const auto k = static_cast<std::size_t>(hierarchy.size());
  const auto n = static_cast<double>(cell.records.size());
  const bool scalar = cell.records.front().pilot.sigma.cols() == 1;
  std::ostringstream os;
  os << cell.statistic << " (" << cell.mode << "), p = " << format_double(mean_of([&] {
    std::vector<double> b;
    for (const auto& r : cell.records) b.push_back(r.budget_p);
    return b;
  }())) << ", " << cell.records.size() << " replicates\n";
  os << std::left << std::setw(10) << "model" << std::right << std::setw(14) << "m_k" << std::setw(12) << "alpha_k"
     << std::setw(12) << (cell.mode == "nonlinear" ? "rho^g_k" : "rho_k") << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    double m = 0.0, alpha = 0.0, rho = 0.0;
    for (const auto& r : cell.records) {
      m += static_cast<double>(r.report.plan.m[i]);
      alpha += r.report.plan.alpha.row(static_cast<Index>(i)).mean();
      rho += scalar ? r.pilot.rho(static_cast<Index>(i), 0) : std::sqrt(r.rho_bar_sq[i]);
    }
    os << std::left << std::setw(10) << hierarchy.model(static_cast<Index>(i)).label() << std::right << std::fixed
       << std::setprecision(1) << std::setw(14) << m / n << std::setprecision(4) << std::setw(12) << alpha / n
       << std::setw(12) << rho / n << '\n';
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

void write_study_outputs(const StudyResults& results) {
  const auto& config = results.config;
  const auto hierarchy = make_hierarchy(config);
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);

  std::string tables;
  std::ostringstream alloc;
  alloc << "statistic,mode,budget,model,label,mean_m,mean_alpha,mean_rho,retained_fraction\n";
  std::map<std::string, std::ostringstream> estimates;
  nlohmann::json cells = nlohmann::json::array();

  for (const auto& cell : results.cells) {
    tables += allocation_table(cell, hierarchy) + "\n";
    const auto summary = summarize(cell, hierarchy, config);
    const auto n = static_cast<double>(cell.records.size());
    const bool scalar = cell.records.front().pilot.sigma.cols() == 1;

    nlohmann::json models = nlohmann::json::array();
    for (Index i = 0; i < hierarchy.size(); ++i) {
      const auto iu = static_cast<std::size_t>(i);
      double m = 0.0, alpha = 0.0, rho = 0.0, kept = 0.0;
      for (const auto& r : cell.records) {
        m += static_cast<double>(r.report.plan.m[iu]);
        alpha += r.report.plan.alpha.row(i).mean();
        rho += scalar ? r.pilot.rho(i, 0) : std::sqrt(r.rho_bar_sq[iu]);
        kept += r.report.plan.m[iu] > 0 ? 1.0 : 0.0;
      }
      alloc << cell.statistic << ',' << cell.mode << ',' << format_double(summary.mean_budget_p) << ',' << i << ','
            << hierarchy.model(i).label() << ',' << format_double(m / n) << ',' << format_double(alpha / n) << ','
            << format_double(rho / n) << ',' << format_double(kept / n) << '\n';
      models.push_back({{"label", hierarchy.model(i).label()}, {"mean_m", m / n}, {"mean_alpha", alpha / n},
                        {"mean_rho", rho / n}, {"retained_fraction", kept / n}});
    }

    auto& est = estimates[cell.mode];
    for (const auto& r : cell.records) {
      for (std::size_t j = 0; j < r.values.size(); ++j) {
        est << r.replicate << ',' << format_double(r.budget_p) << ',' << cell.statistic << ',' << j << ','
            << format_double(r.values[j]) << ',' << format_double(r.predicted_mse) << ','
            << format_double(r.report.realized_cost) << '\n';
      }
    }

    const auto nan_to_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json entry{{"statistic", cell.statistic},
                         {"mode", cell.mode},
                         {"budget", summary.mean_budget_p},
                         {"replicates", cell.records.size()},
                         {"mean", summary.mean},
                         {"standard_error", summary.standard_error},
                         {"empirical_mse", nan_to_null(summary.empirical_mse)},
                         {"relative_mse", nan_to_null(summary.relative_mse)},
                         {"predicted_mse", summary.predicted_mse},
                         {"total_realized_cost", summary.total_realized_cost},
                         {"total_pilot_cost", summary.total_pilot_cost},
                         {"pilot_cost_folded", config.fold_pilot_cost},
                         {"models", models}};
    entry["reference"] = summary.reference ? nlohmann::json(*summary.reference) : nlohmann::json(nullptr);
    cells.push_back(std::move(entry));
  }

  write_file(dir / "allocation.txt", tables);
  write_file(dir / "allocation.csv", alloc.str());
  for (const auto& [mode, rows] : estimates) {
    write_file(dir / ("estimates_" + mode + ".csv"),
               "replicate,budget,statistic,component,value,predicted_mse,realized_cost\n" + rows.str());
  }
  // Where and how fast the study ran does not belong in its results.
  auto recorded = to_json(config);
  recorded.erase("out_dir");
  recorded.erase("jobs");
  const nlohmann::json summary{{"config", recorded}, {"hierarchy", hierarchy.name()}, {"cells", cells}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

void write_sweep_csv(const StudyResults& results) {
  const auto hierarchy = make_hierarchy(results.config);
  std::ostringstream os;
  os << "budget,statistic,mode,empirical_mse,relative_mse,predicted_mse,replicates\n";
  for (const auto& cell : results.cells) {
    const auto s = summarize(cell, hierarchy, results.config);
    if (!s.reference) {
      throw std::invalid_argument("sweep: no reference values for '" + cell.statistic + "' on hierarchy '" +
                                  hierarchy.name() + "'; run make-reference and set reference_file");
    }
    os << format_double(s.mean_budget_p) << ',' << cell.statistic << ',' << cell.mode << ','
       << format_double(s.empirical_mse) << ',' << format_double(s.relative_mse) << ','
       << format_double(s.predicted_mse) << ',' << cell.records.size() << '\n';
  }
  const std::filesystem::path dir(results.config.out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "sweep.csv", os.str());
}

StudyResults run_study(const StudyConfig& config) {
  auto results = compute_study(config);
  write_study_outputs(results);
  return results;
}

StudyResults replicate_sweep(const StudyConfig& config) {
  validate(config);
  const auto hierarchy = make_hierarchy(config);
  for (const auto& s : config.statistics) {
    if (!reference_values(hierarchy, config, s)) {
      throw std::invalid_argument("sweep: no reference values for '" + s + "' on hierarchy '" + hierarchy.name() +
                                  "'; run make-reference and set reference_file");
    }
  }
  auto results = compute_study(config);
  write_study_outputs(results);
  write_sweep_csv(results);
  return results;
}

}  // namespace mfmc
