#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "macrocast/app.hpp"
#include "macrocast/ensemble.hpp"
#include "macrocast/error.hpp"
#include "macrocast/explain.hpp"
#include "macrocast/learners/model.hpp"

namespace py = pybind11;
namespace mc = macrocast;
namespace fs = std::filesystem;

namespace {

py::dict attribution_dict(const mc::Attribution& a) {
  py::dict d;
  d["features"] = a.features;
  d["phi"] = a.phi;
  d["se"] = a.se;
  d["base_value"] = a.base_value;
  d["prediction"] = a.prediction;
  d["exact"] = a.exact;
  return d;
}

std::vector<std::string> default_names(std::vector<std::string> names, Eigen::Index d) {
  if (names.empty())
    for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// The Python callable receives a 2-D float array and returns one value per row.
mc::BatchPredictor wrap(py::function f) {
  return [f](const Eigen::MatrixXd& x) {
    py::gil_scoped_acquire gil;
    return f(x).cast<Eigen::VectorXd>();
  };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "macrocast engine";

  auto base = py::register_exception<mc::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<mc::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<mc::DataError>(m, "DataError", base.ptr());
  py::register_exception<mc::NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<mc::IntegrityError>(m, "IntegrityError", base.ptr());

  m.def(
      "synth",
      [](const fs::path& out_csv, std::uint64_t seed, int n_vars, int quarters, int rank, const std::optional<fs::path>& truth) {
        mc::SynthSpec s;
        s.seed = seed;
        s.n_vars = n_vars;
        s.quarters = quarters;
        s.rank = rank;
        mc::cmd_synth(s, out_csv, truth.value_or(fs::path{}));
      },
      py::arg("out_csv"), py::arg("seed") = 0, py::arg("n_vars") = 20, py::arg("quarters") = 128, py::arg("rank") = 2,
      py::arg("truth") = py::none());

  m.def(
      "load_config", [](const fs::path& path) { return mc::load_config(path).resolved.dump(); }, py::arg("path"),
      "Validated config with defaults applied, as a JSON string.");

  m.def(
      "backtest",
      [](const fs::path& config, const fs::path& run_dir, int workers) {
        mc::BacktestSummary s;
        {
          py::gil_scoped_release release;
          s = mc::cmd_backtest(config, run_dir, workers);
        }
        py::dict d;
        d["records"] = s.records;
        d["models"] = s.models;
        d["warnings"] = s.warnings;
        return d;
      },
      py::arg("config"), py::arg("run_dir"), py::arg("workers") = 1);

  m.def(
      "evaluate",
      [](const fs::path& run_dir, const std::vector<std::string>& periods) {
        py::gil_scoped_release release;
        mc::cmd_evaluate(run_dir, periods);
      },
      py::arg("run_dir"), py::arg("periods") = std::vector<std::string>{});

  m.def(
      "explain",
      [](const fs::path& run_dir, const std::vector<std::string>& models, const std::vector<std::string>& periods,
         int workers) {
        py::gil_scoped_release release;
        mc::cmd_explain(run_dir, models, periods, workers);
      },
      py::arg("run_dir"), py::arg("models") = std::vector<std::string>{},
      py::arg("periods") = std::vector<std::string>{}, py::arg("workers") = 1);

  m.def(
      "compare",
      [](const fs::path& run_dir, const fs::path& external, const std::vector<std::string>& periods,
         const std::string& id) { mc::cmd_compare(run_dir, external, periods, id); },
      py::arg("run_dir"), py::arg("external_csv"), py::arg("periods") = std::vector<std::string>{},
      py::arg("external_id") = "EXTERNAL");

  m.def("report", &mc::render_report, py::arg("run_dir"), "report.md contents for a persisted run.");

  m.def(
      "weights_reciprocal",
      [](const std::vector<double>& losses, double eps) { return mc::weights_reciprocal(losses, eps); },
      py::arg("losses"), py::arg("eps") = 1e-9);
  m.def(
      "weights_exponential",
      [](const std::vector<double>& losses, double beta) { return mc::weights_exponential(losses, beta); },
      py::arg("losses"), py::arg("beta"));

  m.def(
      "shapley_exact",
      [](py::function f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background, std::vector<std::string> names) {
        const auto a = mc::shapley_exact(wrap(std::move(f)), {x.data(), static_cast<std::size_t>(x.size())},
                                         background, default_names(std::move(names), x.size()));
        return attribution_dict(a);
      },
      py::arg("f"), py::arg("x"), py::arg("background"), py::arg("names") = std::vector<std::string>{});

  m.def(
      "shapley_sampled",
      [](py::function f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background, int n_permutations,
         std::uint64_t seed, std::vector<std::string> names) {
        const auto a = mc::shapley_sampled(wrap(std::move(f)), {x.data(), static_cast<std::size_t>(x.size())},
                                           background, n_permutations, seed,
                                           default_names(std::move(names), x.size()));
        return attribution_dict(a);
      },
      py::arg("f"), py::arg("x"), py::arg("background"), py::arg("n_permutations") = 1024, py::arg("seed") = 0,
      py::arg("names") = std::vector<std::string>{});

  py::class_<mc::TrainedModel>(m, "Model")
      .def("predict", py::overload_cast<const Eigen::MatrixXd&>(&mc::TrainedModel::predict, py::const_), py::arg("x"))
      .def("to_json", [](const mc::TrainedModel& t) { return t.to_json().dump(); })
      .def_property_readonly("feature_names", &mc::TrainedModel::feature_names)
      .def_property_readonly("stage_loss", [](const mc::TrainedModel& t) { return t.diagnostics().stage_loss; });

  m.def(
      "fit",
      [](const std::string& family, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::string& params_json,
         std::uint64_t seed) {
        mc::ModelSpec spec;
        spec.family = mc::parse_family(family);
        spec.seed = seed;
        const auto params = nlohmann::json::parse(params_json);
        for (const auto& [k, v] : params.items()) mc::set_hyperparam(spec.hp, spec.loss, k, v);
        spec.validate();
        mc::Dataset data{x, y, default_names({}, x.cols())};
        return mc::fit_model(spec, data);
      },
      py::arg("family"), py::arg("x"), py::arg("y"), py::arg("params_json") = "{}", py::arg("seed") = 0);
}
