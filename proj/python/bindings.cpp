#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/pipeline.hpp"
#include "rbmchoice/synth.hpp"

namespace py = pybind11;
using namespace rbmchoice;

namespace {

py::dict stats_dict(const FitStatistics& s) {
  py::dict d;
  d["null_ll"] = s.null_ll;
  d["final_ll"] = s.final_ll;
  d["rho_square"] = s.rho_square;
  d["aic"] = s.aic;
  d["bic"] = s.bic;
  d["n_params"] = s.n_params;
  d["n_obs"] = s.n_obs;
  return d;
}

py::list table_list(const std::vector<ParamStat>& table) {
  py::list out;
  for (const auto& p : table) {
    py::dict d;
    d["name"] = p.name;
    d["value"] = p.value;
    d["std_err"] = p.std_err;
    d["t"] = p.t;
    d["fixed"] = p.fixed;
    d["reference"] = p.reference;
    d["flagged"] = p.flagged;
    out.append(d);
  }
  return out;
}

py::dict estimate_dict(const std::vector<ParamStat>& table, const FitStatistics& s, bool converged) {
  py::dict d;
  d["params"] = table_list(table);
  d["stats"] = stats_dict(s);
  d["converged"] = converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rbmchoice, m) {
  m.doc() = "Latent-variable discrete choice estimation with a conditional RBM";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::class_<RunConfig>(m, "RunConfig")
      .def_property_readonly("alternatives", [](const RunConfig& c) { return c.catalog.alternatives; })
      .def_property_readonly("attributes", [](const RunConfig& c) { return c.catalog.alt_specific_vars; })
      .def_property_readonly("generic", [](const RunConfig& c) { return c.catalog.generic_vars; })
      .def_property_readonly("latents",
                             [](const RunConfig& c) {
                               std::vector<std::string> out;
                               for (const auto& l : c.structure().latents) out.push_back(l.name);
                               return out;
                             })
      .def_property("seed", [](const RunConfig& c) { return c.seed; }, &RunConfig::set_seed);

  py::class_<SurveyDataset>(m, "Dataset")
      .def("__len__", &SurveyDataset::size)
      .def_property_readonly("alternatives", [](const SurveyDataset& d) { return d.catalog.alternatives; })
      .def_property_readonly("choices",
                             [](const SurveyDataset& d) {
                               Eigen::VectorXi out(static_cast<Eigen::Index>(d.size()));
                               for (std::size_t n = 0; n < d.size(); ++n)
                                 out[static_cast<Eigen::Index>(n)] = static_cast<int>(d.rows[n].choice);
                               return out;
                             })
      .def("null_log_likelihood", [](const SurveyDataset& d) { return null_log_likelihood(d); })
      .def("write_csv", [](const SurveyDataset& d, const std::filesystem::path& p) { write_dataset(d, p); });

  m.def("load_config", &load_run_config, py::arg("path"));
  m.def("parse_config", &parse_run_config, py::arg("text"), py::arg("base_dir") = ".");
  m.def("load_dataset", &dataset_from_config, py::arg("config"),
        "Dataset named by the config, or a synthetic draw from its [synth] section.");

  m.def(
      "generate",
      [](const std::string& family, std::size_t n_obs, std::uint64_t seed) {
        return generate(default_truth(parse_model_family(family), n_obs, seed));
      },
      py::arg("family") = "iclv", py::arg("n_obs") = 2000, py::arg("seed") = 0);

  m.def(
      "estimate_mnl",
      [](const SurveyDataset& d, const RunConfig& c) {
        py::gil_scoped_release release;
        const auto e = estimate(d, c.structure().zero_mnl(d.catalog), c.two_stage.optimizer);
        py::gil_scoped_acquire acquire;
        return estimate_dict(e.table, e.stats, e.optim.converged);
      },
      py::arg("dataset"), py::arg("config"));

  m.def(
      "two_stage",
      [](const SurveyDataset& d, const RunConfig& c) {
        TwoStageResult r;
        {
          py::gil_scoped_release release;
          r = run_two_stage(d, c.two_stage);
        }
        py::dict out;
        out["two_stage"] = estimate_dict(r.two_stage.table, r.two_stage.stats, r.two_stage.optim.converged);
        if (r.cold_start)
          out["cold_start"] = estimate_dict(r.cold_start->table, r.cold_start->stats, r.cold_start->optim.converged);
        out["handoff_ll"] = r.handoff_ll;
        out["kept_units"] = r.extraction.kept();
        out["report"] = render_report(make_comparison(r), ReportFormat::text);
        return out;
      },
      py::arg("dataset"), py::arg("config"));

  m.def(
      "fit_statistics",
      [](double null_ll, double final_ll, std::size_t n_params, std::size_t n_obs) {
        return stats_dict(FitStatistics::compute(null_ll, final_ll, n_params, n_obs));
      },
      py::arg("null_ll"), py::arg("final_ll"), py::arg("n_params"), py::arg("n_obs"));

  m.def(
      "crbm_free_energy",
      [](const Eigen::VectorXd& c_alt, const Eigen::VectorXd& c_lat, const Eigen::MatrixXd& D, std::size_t y) {
        auto p = CRBMParams::zeros(static_cast<std::size_t>(c_alt.size()), static_cast<std::size_t>(c_lat.size()), 0, 0,
                                   static_cast<std::size_t>(c_alt.size()) - 1);
        p.c_alt = c_alt;
        p.c_lat = c_lat;
        p.D = D;
        ObservationRow row;
        row.alt_attributes.resize(c_alt.size(), 0);
        row.generic.resize(0);
        row.availability.assign(static_cast<std::size_t>(c_alt.size()), 1);
        return free_energy(y, row, p);
      },
      py::arg("c_alt"), py::arg("c_lat"), py::arg("D"), py::arg("y"),
      "Free energy of choice y for a model without covariates.");

  m.def("cli", &cli_main, py::arg("args"), "Runs the command line with `args` (no program name); returns the exit code.");
}
