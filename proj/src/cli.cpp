#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "CLI11.hpp"
#include "rbmchoice/param_io.hpp"
#include "rbmchoice/pipeline.hpp"
#include "text_util.hpp"

#ifndef RBMCHOICE_VERSION
#define RBMCHOICE_VERSION "unknown"
#endif

namespace rbmchoice {

namespace {

namespace fs = std::filesystem;

class EstimationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

class Run {
 public:
  Run(std::string command, const Globals& g) : command_(std::move(command)), g_(g) {}

  void log(const std::string& msg) const {
    if (g_.verbose) std::cerr << "[" << command_ << "] " << msg << "\n";
  }

  RunConfig& load_config() {
    if (g_.config.empty()) throw ConfigError("--config is required for '" + command_ + "'");
    cfg_ = load_run_config(g_.config);
    if (g_.seed) cfg_.set_seed(*g_.seed);
    if (!g_.out.empty()) cfg_.out_dir = g_.out;
    out_dir_ = cfg_.out_dir;
    log("config " + g_.config + ", seed " + std::to_string(cfg_.seed) + ", output " + out_dir_.string());
    return cfg_;
  }

  void write(const std::string& name, const std::string& bytes) {
    fs::create_directories(out_dir_);
    const fs::path path = out_dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << bytes;
    if (!out) throw std::runtime_error("failed writing " + path.string());
    artifacts_.emplace_back(name, bytes);
    log("wrote " + path.string());
  }

  void write_params(const std::string& name, const ParamFile& f) { write(name, f.serialize()); }

  void write_reports(const std::string& stem, const ComparisonReport& rep) {
    for (auto f : cfg_.formats) write(stem + report_extension(f), render_report(rep, f));
  }

  /// Config echo, seed, versions and a checksum of every artifact. No clock readings.
  void write_manifest() {
    std::string m = "rbmchoice-manifest 1\n";
    m += "command " + command_ + "\n";
    m += "seed " + std::to_string(cfg_.seed) + "\n";
    m += "version rbmchoice " RBMCHOICE_VERSION "\n";
    m += "version eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION) + "\n";
    m += "version boost " + std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
         "\n";
    m += "config " + cfg_.source.filename().string() + "\n";
    if (cfg_.data_path) m += "data " + cfg_.data_path->filename().string() + "\n";
    for (const auto& [name, bytes] : artifacts_) {
      char hex[17];
      std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(stable_hash(bytes)));
      m += "artifact " + name + " " + std::to_string(bytes.size()) + " fnv1a64:" + hex + "\n";
    }
    m += "--- config\n" + cfg_.text;
    if (!cfg_.text.empty() && cfg_.text.back() != '\n') m += "\n";
    fs::create_directories(out_dir_);
    std::ofstream out(out_dir_ / "manifest.txt", std::ios::binary);
    out << m;
  }

  const RunConfig& config() const { return cfg_; }

 private:
  std::string command_;
  Globals g_;
  RunConfig cfg_;
  fs::path out_dir_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

std::string latent_summary(const LatentReport& rep, const VariableCatalog& cat) {
  std::ostringstream o;
  o << "unit,keep,duplicate_of,flagged,max_abs_t,bias";
  for (const auto& a : cat.alternatives) o << ",D_" << a;
  for (const auto& g : cat.generic_vars) o << ",G_" << g;
  o << "\n";
  for (const auto& s : rep.latents) {
    o << "h" << (s.index + 1) << "," << (s.keep ? 1 : 0) << ","
      << (s.duplicate_of ? "h" + std::to_string(*s.duplicate_of + 1) : std::string()) << "," << (s.flagged ? 1 : 0)
      << "," << detail::format_fixed(s.max_abs_t, 3) << "," << detail::format_fixed(s.bias, 3);
    for (Eigen::Index i = 0; i < s.choice_weights.size(); ++i) o << "," << detail::format_fixed(s.choice_weights[i], 3);
    for (Eigen::Index m = 0; m < s.loadings.size(); ++m) o << "," << detail::format_fixed(s.loadings[m], 3);
    o << "\n";
  }
  return o.str();
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream buf;
  write_trace(trace, buf);
  return buf.str();
}

std::string matches_csv(const std::vector<LatentMatch>& matches, double handoff_ll) {
  std::string s = "latent,unit,flipped,input_share\n";
  for (const auto& m : matches)
    s += m.latent + "," + (m.unit ? "h" + std::to_string(*m.unit + 1) : std::string()) + "," +
         (m.flipped ? "1" : "0") + "," + detail::format_fixed(m.input_share, 3) + "\n";
  s += "# initial joint log-likelihood " + detail::format_double(handoff_ll) + "\n";
  return s;
}

int cmd_generate(Run& run) {
  const auto& cfg = run.load_config();
  const GroundTruth truth = truth_from_config(cfg);
  run.log("generating " + std::to_string(truth.n_obs) + " rows from a " + to_string(truth.family) + " truth");
  const SurveyDataset ds = generate(truth);
  std::ostringstream buf;
  write_dataset(ds, buf, cfg.load.delimiter);
  run.write("data.csv", buf.str());
  switch (truth.family) {
    case ModelFamily::mnl: run.write_params("truth.params", to_param_file(truth.mnl)); break;
    case ModelFamily::iclv: run.write_params("truth.params", to_param_file(truth.iclv)); break;
    case ModelFamily::crbm: run.write_params("truth.params", to_param_file(truth.crbm)); break;
  }
  run.write_manifest();
  return 0;
}

int cmd_validate(Run& run) {
  const auto& cfg = run.load_config();
  const SurveyDataset ds = dataset_from_config(cfg);
  const auto diag = validate(ds);
  const std::string text = format_diagnostics(diag);
  std::cout << text;
  run.write("validation.txt", text);
  run.write_manifest();
  return diag.ok() ? 0 : 2;
}

int cmd_train_crbm(Run& run) {
  const auto& cfg = run.load_config();
  const SurveyDataset ds = dataset_from_config(cfg);
  const auto& ts = cfg.two_stage;
  const auto& cat = ds.catalog;
  const std::size_t J = ts.crbm_latents ? ts.crbm_latents : std::max<std::size_t>(cfg.structure().latents.size(), 1);
  CRBMParams init = CRBMParams::initialize(cat.n_alternatives(), J, cat.n_attributes(), cat.n_generic(), cat.reference,
                                           ts.crbm.seed, ts.crbm_init_std);
  init.g_term = ts.g_term;
  run.log("training C-RBM with " + std::to_string(J) + " hidden units for " + std::to_string(ts.crbm.epochs) +
          " epochs");
  const auto result = train(ds, init, ts.crbm);
  run.write("trace.csv", trace_csv(result.trace));
  run.write_params("crbm.params", to_param_file(result.params));
  if (result.diverged) {
    run.write_manifest();
    throw EstimationFailure("C-RBM training diverged: " + result.message);
  }
  const auto rep = extract_significant_latents(result.params, ds, ts.t_threshold, ts.extract);
  run.write("latents.csv", latent_summary(rep, cat));
  FitStatistics stats;
  if (J <= kMaxExactLatents) {
    double ll = exact_log_likelihood(ds, result.params);
    std::size_t k = static_cast<std::size_t>(std::count(result.params.fixed.begin(), result.params.fixed.end(), false));
    stats = FitStatistics::compute(null_log_likelihood(ds), ll, k, ds.size());
  }
  run.write_reports("report", single_model_report("C-RBM", "C-RBM", rep.table, stats, !result.diverged));
  run.write_manifest();
  return 0;
}

int cmd_estimate_mnl(Run& run) {
  const auto& cfg = run.load_config();
  const SurveyDataset ds = dataset_from_config(cfg);
  run.log("estimating MNL on " + std::to_string(ds.size()) + " rows");
  const auto est = estimate(ds, cfg.structure().zero_mnl(ds.catalog), cfg.two_stage.optimizer, {},
                            cfg.two_stage.std_errors);
  run.write_params("mnl.params", to_param_file(est.params));
  run.write_reports("report", single_model_report("Multinomial logit", "MNL", est.table, est.stats,
                                                  est.optim.converged));
  run.write_manifest();
  if (!est.optim.converged) throw EstimationFailure("MNL estimation did not converge: " + est.optim.message);
  return 0;
}

int cmd_estimate_iclv(Run& run) {
  const auto& cfg = run.load_config();
  const SurveyDataset ds = dataset_from_config(cfg);
  run.log("estimating ICLV on " + std::to_string(ds.size()) + " rows from zero");
  const auto est = estimate_iclv(ds, cfg.structure().zero_params(ds.catalog), cfg.two_stage.optimizer,
                                 cfg.two_stage.simulation, cfg.two_stage.std_errors);
  run.write_params("iclv.params", to_param_file(est.params));
  run.write_reports("report", single_model_report("ICLV", "ICLV", est.table, est.stats, est.optim.converged));
  run.write_manifest();
  if (!est.optim.converged) throw EstimationFailure("ICLV estimation did not converge: " + est.optim.message);
  return 0;
}

int cmd_two_stage(Run& run) {
  const auto& cfg = run.load_config();
  const SurveyDataset ds = dataset_from_config(cfg);
  run.log("two-stage estimation on " + std::to_string(ds.size()) + " rows");
  TwoStageResult result;
  auto on_stage = [&](const TwoStageResult& r, const std::string& stage) {
    run.log("stage " + stage + " done");
    if (stage == "crbm") {
      run.write("trace.csv", trace_csv(r.crbm.trace));
      run.write_params("crbm.params", to_param_file(r.crbm.params));
      if (!r.crbm.diverged) run.write("latents.csv", latent_summary(r.extraction, ds.catalog));
    } else if (stage == "handoff") {
      run.write_params("handoff.params", to_param_file(r.handoff));
      run.write("handoff.csv", matches_csv(r.matches, r.handoff_ll));
    } else if (stage == "two-stage") {
      run.write_params("two_stage.params", to_param_file(r.two_stage.params));
    } else if (stage == "cold-start") {
      run.write_params("iclv_cold.params", to_param_file(r.cold_start->params));
    }
  };
  try {
    result = run_two_stage(ds, cfg.two_stage, on_stage);
  } catch (...) {
    run.write_manifest();
    throw;
  }
  run.write_reports("report", make_comparison(result));
  run.write_manifest();
  const bool converged = result.two_stage.optim.converged && (!result.cold_start || result.cold_start->optim.converged);
  if (!converged) throw EstimationFailure("stage-2 estimation did not converge");
  return 0;
}

int cmd_report(const Globals& g, const std::string& input, const std::string& format) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw ConfigError("cannot open report " + input);
  std::ostringstream buf;
  buf << in.rdbuf();
  const ComparisonReport rep = parse_report_json(buf.str());
  const ReportFormat f = parse_report_format(format);
  const std::string text = render_report(rep, f);
  if (g.out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(g.out);
    std::ofstream out(fs::path(g.out) / ("report" + report_extension(f)), std::ios::binary);
    out << text;
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Latent-variable discrete choice estimation with a conditional RBM and ICLV models", "rbmchoice"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Seed overriding [pipeline] seed");
  app.add_option("--out", g.out, "Output directory overriding [pipeline] out");
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");

  std::string report_input, report_format = "text";
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"generate", "Draw a synthetic dataset and write its ground truth"},
      {"train-crbm", "Train the C-RBM and report significant latent units"},
      {"estimate-mnl", "Estimate a multinomial logit without latents"},
      {"estimate-iclv", "Estimate the declared ICLV model from zero"},
      {"two-stage", "C-RBM training, handoff, and ICLV estimation against a cold start"},
      {"validate", "Check a dataset against the catalog"},
      {"report", "Re-render a JSON report"},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);
  auto* rep = app.get_subcommand("report");
  rep->add_option("input", report_input, "report.json written by another command")->required();
  rep->add_option("--format", report_format, "text, delimited or json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  std::string command;
  for (const auto& s : subs)
    if (app.got_subcommand(s.name)) command = s.name;

  try {
    if (command == "report") return cmd_report(g, report_input, report_format);
    Run run(command, g);
    if (command == "generate") return cmd_generate(run);
    if (command == "validate") return cmd_validate(run);
    if (command == "train-crbm") return cmd_train_crbm(run);
    if (command == "estimate-mnl") return cmd_estimate_mnl(run);
    if (command == "estimate-iclv") return cmd_estimate_iclv(run);
    if (command == "two-stage") return cmd_two_stage(run);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: unknown command\n" << app.help();
  return 1;
}

}  // namespace rbmchoice
