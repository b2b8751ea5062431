#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfmc/allocation.hpp"
#include "mfmc/estimators.hpp"
#include "mfmc/hierarchy.hpp"
#include "mfmc/pilot.hpp"
#include "mfmc/regression.hpp"
#include "mfmc/sampling.hpp"
#include "mfmc/study.hpp"

namespace py = pybind11;
using namespace mfmc;

namespace {

PipelineSettings settings_from(Index pilot_size, Index training_size, bool fold_pilot_cost,
                               const std::string& sobol_cost) {
  PipelineSettings s;
  s.pilot_size = pilot_size;
  s.training_size = training_size;
  s.fold_pilot_cost = fold_pilot_cost;
  s.sobol_cost = sobol_cost == "per-sample" ? CostConvention::per_sample : CostConvention::per_evaluation;
  return s;
}

PilotStats stats_from_arrays(const RowMatrix& sigma, const RowMatrix& rho) {
  return PilotStats::from_moments(sigma, rho, StatsKind::raw, "expectation", 0);
}

}  // namespace

PYBIND11_MODULE(_mfmc, m) {
  m.doc() = "Multifidelity Monte Carlo estimators";

  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);
  py::register_exception<DegenerateStatsError>(m, "DegenerateStatsError", PyExc_RuntimeError);
  py::register_exception<BudgetError>(m, "BudgetError", PyExc_ValueError);

  py::class_<ModelHierarchy>(m, "ModelHierarchy")
      .def_property_readonly("name", &ModelHierarchy::name)
      .def_property_readonly("size", &ModelHierarchy::size)
      .def_property_readonly("input_dimension", &ModelHierarchy::input_dimension)
      .def_property_readonly("output_length", &ModelHierarchy::output_length)
      .def_property_readonly("costs", &ModelHierarchy::costs)
      .def_property_readonly("output_weights", &ModelHierarchy::output_weights)
      .def_property_readonly("labels",
                             [](const ModelHierarchy& h) {
                               std::vector<std::string> out;
                               for (const auto& model : h.models()) out.push_back(model.label());
                               return out;
                             })
      .def(
          "evaluate",
          [](const ModelHierarchy& h, Index model, const RowMatrix& inputs) {
            RowMatrix out(inputs.rows(), h.output_length());
            for (Index r = 0; r < inputs.rows(); ++r) {
              const auto y = mfmc::evaluate(h.model(model), std::span<const double>(inputs.row(r).data(),
                                                                                    static_cast<std::size_t>(inputs.cols())));
              for (Index c = 0; c < out.cols(); ++c) out(r, c) = y[static_cast<std::size_t>(c)];
            }
            return out;
          },
          py::arg("model"), py::arg("inputs"), "Outputs of one model on the rows of `inputs`.");

  m.def(
      "hierarchy",
      [](const std::string& name, const std::vector<double>& costs, Index field_points) {
        return hierarchy_by_name(name, costs, field_points);
      },
      py::arg("name"), py::arg("costs") = std::vector<double>{},
        py::arg("field_points") = 16, "Built-in hierarchy: ishigami, quintic or synthetic-field.");
  m.def("analytic_reference", &analytic_reference, py::arg("hierarchy"), py::arg("statistic"));

  m.def(
      "philox4x32",
      [](std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) {
        return Philox4x32::generate(counter, key);
      },
      py::arg("counter"), py::arg("key"));
  m.def(
      "draw_inputs",
      [](const ModelHierarchy& h, Index rows, std::uint64_t seed, std::uint32_t stream) {
        return draw_inputs(h, rows, seed, stream).inputs;
      },
      py::arg("hierarchy"), py::arg("rows"), py::arg("seed"), py::arg("stream") = streams::kEstimation);

  m.def(
      "optimal_allocation",
      [](const RowMatrix& sigma, const RowMatrix& rho, const std::vector<double>& costs, double budget,
         Index min_high_fidelity_samples, const std::vector<double>& weights) {
        AllocationOptions opts;
        opts.min_high_fidelity_samples = min_high_fidelity_samples;
        return to_json(optimal_allocation(stats_from_arrays(sigma, rho), CostModel(costs), budget, opts, weights))
            .dump();
      },
      py::arg("sigma"), py::arg("rho"), py::arg("costs"), py::arg("budget"),
      py::arg("min_high_fidelity_samples") = 1, py::arg("weights") = std::vector<double>{},
      "sigma and rho are K x C arrays; returns the plan as JSON text.");
  m.def(
      "variance_reduction_ratio",
      [](const RowMatrix& sigma, const RowMatrix& rho, const std::vector<double>& costs) {
        return variance_reduction_ratio(stats_from_arrays(sigma, rho), CostModel(costs));
      },
      py::arg("sigma"), py::arg("rho"), py::arg("costs"));
  m.def(
      "budget_for_tolerance",
      [](const RowMatrix& sigma, const RowMatrix& rho, const std::vector<double>& costs, double epsilon,
         const std::vector<double>& weights) {
        return budget_for_tolerance(aggregate_vector_stats(stats_from_arrays(sigma, rho), weights),
                                    CostModel(costs), epsilon);
      },
      py::arg("sigma"), py::arg("rho"), py::arg("costs"), py::arg("epsilon"),
      py::arg("weights") = std::vector<double>{});

  m.def(
      "pilot",
      [](const ModelHierarchy& h, const std::string& statistic, const std::string& mode, std::uint64_t seed,
         Index pilot_size, Index training_size) {
        const auto r = run_pilot(h, statistic, estimator_mode_from_string(mode), seed,
                                 settings_from(pilot_size, training_size, false, "per-evaluation"));
        nlohmann::json j{{"stats", to_json(r.stats)},
                         {"sigma_bar_sq", r.aggregated.sigma_bar_sq},
                         {"rho_bar_sq", r.aggregated.rho_bar_sq},
                         {"pilot_cost", r.cost}};
        return j.dump();
      },
      py::arg("hierarchy"), py::arg("statistic") = "expectation", py::arg("mode") = "linear", py::arg("seed") = 1,
      py::arg("pilot_size") = 100, py::arg("training_size") = 0, "Pilot statistics as JSON text.");
  m.def(
      "estimate",
      [](const ModelHierarchy& h, const std::string& statistic, double budget, const std::string& mode,
         std::uint64_t seed, Index pilot_size, Index training_size, bool fold_pilot_cost,
         const std::string& sobol_cost) {
        const auto run = run_pipeline(h, statistic, estimator_mode_from_string(mode), budget, seed,
                                      settings_from(pilot_size, training_size, fold_pilot_cost, sobol_cost));
        return to_json(run.report).dump();
      },
      py::arg("hierarchy"), py::arg("statistic"), py::arg("budget"), py::arg("mode") = "linear",
      py::arg("seed") = 1, py::arg("pilot_size") = 100, py::arg("training_size") = 0,
      py::arg("fold_pilot_cost") = false, py::arg("sobol_cost") = "per-evaluation",
      "Pilot, allocation and estimation at an absolute budget; report as JSON text.");
  m.def(
      "run_study",
      [](const std::string& config_json, bool sweep) {
        const auto config = study_config_from_json(nlohmann::json::parse(config_json));
        if (sweep) replicate_sweep(config);
        else run_study(config);
      },
      py::arg("config_json"), py::arg("sweep") = false, py::call_guard<py::gil_scoped_release>());
  m.def(
      "make_reference",
      [](const ModelHierarchy& h, const std::vector<std::string>& statistics, Index samples, std::uint64_t seed) {
        return make_reference(h, statistics, samples, seed).dump();
      },
      py::arg("hierarchy"), py::arg("statistics"), py::arg("samples"), py::arg("seed") = 1);

  m.def(
      "sobol_single_level",
      [](const std::vector<double>& base, const std::vector<double>& second, const std::vector<double>& mixed) {
        const auto s = sobol_single_level(base, second, mixed);
        return py::dict(py::arg("main") = s.main, py::arg("total") = s.total, py::arg("variance") = s.variance,
                        py::arg("normalized_main") = s.normalized_main,
                        py::arg("normalized_total") = s.normalized_total);
      },
      py::arg("on_base"), py::arg("on_second"), py::arg("on_mixed"));

  py::class_<GaussianProcess1D>(m, "GaussianProcess1D")
      .def_static(
          "fit", [](const std::vector<double>& x, const std::vector<double>& y) { return GaussianProcess1D::fit(x, y); },
          py::arg("x"), py::arg("y"))
      .def("predict",
           [](const GaussianProcess1D& g, double x) {
             const auto p = g.predict(x);
             return py::make_tuple(p.mean, p.variance);
           })
      .def_property_readonly("length_scale", [](const GaussianProcess1D& g) { return g.hyperparameters().length_scale; })
      .def_property_readonly("signal_variance",
                             [](const GaussianProcess1D& g) { return g.hyperparameters().signal_variance; })
      .def_property_readonly("nugget_variance",
                             [](const GaussianProcess1D& g) { return g.hyperparameters().nugget_variance; })
      .def("to_json", [](const GaussianProcess1D& g) { return g.to_json().dump(); });
}
