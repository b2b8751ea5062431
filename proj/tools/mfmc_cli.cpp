#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfmc/allocation.hpp"
#include "mfmc/study.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "JSON study configuration")->check(CLI::ExistingFile);
  app->add_option("--set", o.overrides, "Override a config key (key=value, repeatable)");
  app->add_option("--out-dir", o.out_dir, "Output directory");
  app->add_option("--seed", o.seed, "Study seed");
  app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

mfmc::StudyConfig resolve(const CommonOptions& o) {
  auto config = o.config_path.empty() ? mfmc::StudyConfig{} : mfmc::load_study_config(o.config_path);
  for (const auto& s : o.overrides) mfmc::apply_override(config, s);
  if (o.out_dir) config.out_dir = *o.out_dir;
  if (o.seed) config.seed = *o.seed;
  if (o.jobs) config.jobs = *o.jobs;
  return config;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json aggregated_json(const mfmc::AggregatedStats& a) {
  return {{"sigma_bar_sq", a.sigma_bar_sq}, {"rho_bar_sq", a.rho_bar_sq}, {"weights", a.weights}};
}

std::string budget_tag(double p) {
  auto s = mfmc::format_double(p);
  for (auto& c : s) {
    if (c == '.') c = '_';
  }
  return s;
}

int cmd_pilot(const CommonOptions& o) {
  auto config = resolve(o);
  const auto h = mfmc::make_hierarchy(config);
  const auto settings = mfmc::make_settings(config);
  const auto seed = mfmc::replicate_seed(config.seed, 0);
  for (const auto& stat : config.statistics) {
    for (const auto& mode : config.modes) {
      const auto pilot = mfmc::run_pilot(h, stat, mfmc::estimator_mode_from_string(mode), seed, settings);
      nlohmann::json j{{"hierarchy", h.name()},
                       {"statistic", stat},
                       {"mode", mode},
                       {"seed", seed},
                       {"pilot_cost", pilot.cost},
                       {"stats", mfmc::to_json(pilot.stats)},
                       {"aggregated", aggregated_json(pilot.aggregated)}};
      if (pilot.bridge) j["bridge"] = mfmc::to_json(*pilot.bridge);
      const auto path = fs::path(config.out_dir) / ("pilot_" + stat + "_" + mode + ".json");
      write_json(path, j);
      std::cout << path.string() << '\n';
    }
  }
  return 0;
}

int cmd_allocate(const CommonOptions& o, const std::string& pilot_file) {
  auto config = resolve(o);
  if (config.budgets.empty() == !config.tolerance.has_value()) {
    throw std::invalid_argument("allocate: set exactly one of budgets and tolerance");
  }
  const auto h = mfmc::make_hierarchy(config);
  const auto settings = mfmc::make_settings(config);
  const double w1 = h.costs().front();

  struct Entry {
    std::string statistic, mode;
    mfmc::PilotStats stats;
  };
  std::vector<Entry> entries;
  if (!pilot_file.empty()) {
    std::ifstream in(pilot_file);
    if (!in) throw std::runtime_error("cannot open pilot file " + pilot_file);
    const auto j = nlohmann::json::parse(in);
    const auto& stats = j.contains("stats") ? j.at("stats") : j;
    auto parsed = mfmc::pilot_stats_from_json(stats);
    entries.push_back({parsed.statistic, j.value("mode", std::string("linear")), parsed});
  } else {
    const auto seed = mfmc::replicate_seed(config.seed, 0);
    for (const auto& stat : config.statistics) {
      for (const auto& mode : config.modes) {
        auto pilot = mfmc::run_pilot(h, stat, mfmc::estimator_mode_from_string(mode), seed, settings);
        entries.push_back({stat, mode, pilot.stats});
      }
    }
  }

  for (const auto& e : entries) {
    const auto stat = mfmc::statistic_by_name(e.statistic, h.input_dimension());
    if (e.stats.sigma.rows() != h.size()) throw std::invalid_argument("allocate: pilot stats do not match hierarchy");
    const auto costs = mfmc::effective_costs(h, e.statistic, settings);
    std::vector<double> weights;
    if (mfmc::is_sobol_statistic(e.statistic)) {
      weights = settings.index_weights;
    } else {
      weights = settings.output_weights.empty() ? h.output_weights() : settings.output_weights;
    }
    const auto agg = mfmc::aggregate_vector_stats(e.stats, weights);
    std::vector<double> budgets;
    if (config.tolerance) {
      budgets.push_back(mfmc::budget_for_tolerance(agg, costs, *config.tolerance));
    } else {
      for (double b : config.budgets) budgets.push_back(config.budget_unit == "hf" ? b * w1 : b);
    }
    for (double budget : budgets) {
      mfmc::AllocationOptions opts;
      opts.min_high_fidelity_samples = stat.min_samples;
      const auto plan = mfmc::optimal_allocation(agg, costs, budget, opts);
      std::cout << e.statistic << " (" << e.mode << "), p = " << mfmc::format_double(budget / w1) << '\n';
      std::cout << "model,m,alpha,rho\n";
      for (mfmc::Index i = 0; i < h.size(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        std::cout << h.model(i).label() << ',' << plan.m[iu] << ',' << mfmc::format_double(plan.alpha.row(i).mean())
                  << ',' << mfmc::format_double(std::sqrt(agg.rho_bar_sq[iu])) << '\n';
      }
      std::cout << "predicted_mse," << mfmc::format_double(plan.predicted_mse) << "\n\n";
      write_json(fs::path(config.out_dir) / ("plan_" + e.statistic + "_" + e.mode + "_p" + budget_tag(budget / w1) + ".json"),
                 mfmc::to_json(plan));
    }
  }
  return 0;
}

int cmd_estimate(const CommonOptions& o) {
  const auto results = mfmc::run_study(resolve(o));
  const auto h = mfmc::make_hierarchy(results.config);
  for (const auto& cell : results.cells) std::cout << mfmc::allocation_table(cell, h) << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const auto results = mfmc::replicate_sweep(resolve(o));
  std::ifstream in(fs::path(results.config.out_dir) / "sweep.csv");
  std::cout << in.rdbuf();
  return 0;
}

int cmd_reference(const CommonOptions& o, mfmc::Index samples, const std::string& output) {
  const auto config = resolve(o);
  const auto h = mfmc::make_hierarchy(config);
  const auto j = mfmc::make_reference(h, config.statistics, samples, config.seed, std::max(1u, config.jobs));
  const fs::path path = output.empty() ? fs::path(config.out_dir) / "reference.json" : fs::path(output);
  write_json(path, j);
  std::cout << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multifidelity Monte Carlo studies"};
  app.require_subcommand(1);

  CommonOptions pilot_opts, alloc_opts, est_opts, sweep_opts, ref_opts;
  auto* pilot = app.add_subcommand("pilot", "Run the pilot phase and write correlation statistics");
  add_common(pilot, pilot_opts);

  auto* allocate = app.add_subcommand("allocate", "Compute optimal sample allocations");
  add_common(allocate, alloc_opts);
  std::string pilot_file;
  allocate->add_option("--pilot", pilot_file, "Pilot statistics JSON written by `pilot`")->check(CLI::ExistingFile);

  auto* estimate = app.add_subcommand("estimate", "Run replicated pilot, allocation and estimation");
  add_common(estimate, est_opts);

  auto* sweep = app.add_subcommand("sweep", "MSE against budget over replicates");
  add_common(sweep, sweep_opts);

  auto* reference = app.add_subcommand("make-reference", "Plain Monte Carlo reference values");
  add_common(reference, ref_opts);
  mfmc::Index samples = 1000000;
  std::string output;
  reference->add_option("--samples", samples, "High-fidelity samples")->check(CLI::PositiveNumber);
  reference->add_option("--output", output, "Output file (default <out-dir>/reference.json)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pilot) return cmd_pilot(pilot_opts);
    if (*allocate) return cmd_allocate(alloc_opts, pilot_file);
    if (*estimate) return cmd_estimate(est_opts);
    if (*sweep) return cmd_sweep(sweep_opts);
    if (*reference) return cmd_reference(ref_opts, samples, output);
  } catch (const mfmc::BudgetError& e) {
    std::cerr << "error: infeasible budget: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
