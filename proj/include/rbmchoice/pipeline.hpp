#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/data_model.hpp"
#include "rbmchoice/iclv.hpp"
#include "rbmchoice/mnl.hpp"
#include "rbmchoice/optim.hpp"
#include "rbmchoice/synth.hpp"

namespace rbmchoice {

/// Declared structure of the latent-behaviour choice model. The same structure
/// is used for the cold-start model and the C-RBM-initialized one.
struct ModelStructure {
  std::vector<LatentSpec> latents;
  std::vector<MeasurementSpec> measurement;
  std::vector<std::string> utility_generic;  // generic variables with alternative-specific coefficients
  MeasurementSign sign = MeasurementSign::negated;

  /// All-zero ICLV parameters with this structure.
  IclvParams zero_params(const VariableCatalog& catalog) const;
  /// All-zero MNL parameters (no latents) with the utility_generic coefficients freed.
  ChoiceModelParams zero_mnl(const VariableCatalog& catalog) const;
  void check(const VariableCatalog& catalog) const;
};

/// The structure that generated an ICLV ground truth.
ModelStructure structure_of(const IclvParams& params, const VariableCatalog& catalog);

struct TwoStageConfig {
  ModelStructure structure;
  std::size_t crbm_latents = 0;  // 0: one hidden unit per declared latent
  double crbm_init_std = 0.01;
  GTermMode g_term = GTermMode::bilinear;
  CRBMTrainConfig crbm;
  ExtractOptions extract;
  double t_threshold = 1.96;
  OptimizerConfig optimizer;
  SimulationConfig simulation;
  bool cold_start = true;
  bool std_errors = true;
};

/// Declared latent paired with the C-RBM hidden unit that initializes it.
struct LatentMatch {
  std::string latent;
  std::optional<std::size_t> unit;  // none: no kept unit left, started from zero
  bool flipped = false;             // initialized from 1 - x* rather than x*
  double input_share = 0.0;         // share of the unit's |G| mass on the latent's inputs
};

struct TwoStageResult {
  CRBMTrainResult crbm;
  LatentReport extraction;
  std::vector<LatentMatch> matches;
  MnlEstimate prefit;
  IclvParams handoff;
  double handoff_ll = 0.0;
  IclvEstimate two_stage;
  std::optional<IclvEstimate> cold_start;
};

/// Maps a trained C-RBM onto the declared structure: kept units are paired with
/// declared latents greedily by input_share; D columns give the latent utility
/// coefficients, G rows (restricted to the inputs) the structural loadings,
/// c_lat the intercepts and c_alt the constants. Attribute and utility_generic
/// coefficients come from `prefit`, measurement loadings from one-dimensional
/// fits with the latents held at their initial values. Each unit's orientation
/// is chosen by the higher initial joint log-likelihood.
IclvParams handoff_parameters(const CRBMParams& crbm, const LatentReport& extraction, const ModelStructure& structure,
                              const SurveyDataset& dataset, const ChoiceModelParams& prefit,
                              const SimulationConfig& sim, std::vector<LatentMatch>* matches = nullptr);

/// Stage 1: train the C-RBM and extract significant units. Stage 2: estimate the
/// declared model from the handoff values, and (optionally) from zero.
/// `on_stage` sees the partial result after "crbm", "handoff", "two-stage" and "cold-start".
TwoStageResult run_two_stage(const SurveyDataset& dataset, const TwoStageConfig& config,
                             const std::function<void(const TwoStageResult&, const std::string&)>& on_stage = {});

// ---------------------------------------------------------------------------
// Reports

struct ModelColumn {
  std::string label;
  std::vector<ParamStat> table;
  FitStatistics stats;
  bool converged = true;
};

struct ComparisonReport {
  std::string title;
  std::vector<ModelColumn> models;
};

ComparisonReport make_comparison(const TwoStageResult& result);
ComparisonReport single_model_report(const std::string& title, const std::string& label,
                                     const std::vector<ParamStat>& table, const FitStatistics& stats, bool converged);

enum class ReportFormat { text, delimited, json };

ReportFormat parse_report_format(const std::string& name);
std::string to_string(ReportFormat format);
std::string report_extension(ReportFormat format);

/// Deterministic rendering with three decimals; reference parameters read "0 (ref.)".
std::string render_report(const ComparisonReport& report, ReportFormat format);
ComparisonReport parse_report_json(const std::string& text);

// ---------------------------------------------------------------------------
// Run configuration and command line

struct SynthSettings {
  ModelFamily family = ModelFamily::iclv;
  std::size_t n_obs = 2000;
  double generic_prob = 0.5;
  double generic_correlation = 0.0;
  double availability = 1.0;
  double indicator_missing = 0.0;
  double attr_low = 0.0;
  double attr_high = 1.0;
  double weight_scale = 1.0;
  std::uint64_t truth_seed = 1;  // draws the generating parameter values
  std::optional<std::filesystem::path> truth_path;
};

struct RunConfig {
  std::filesystem::path source;  // the config file itself
  std::string text;              // its bytes, echoed into the manifest
  std::optional<std::filesystem::path> data_path;  // none: synthesize from [synth]
  VariableCatalog catalog;
  LoadOptions load;
  TwoStageConfig two_stage;
  SynthSettings synth;
  std::vector<ReportFormat> formats{ReportFormat::text, ReportFormat::delimited, ReportFormat::json};
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  const ModelStructure& structure() const { return two_stage.structure; }
  /// Applies a seed to every seeded component.
  void set_seed(std::uint64_t seed);
};

/// Thrown for configuration problems (exit code 1 at the command line).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Ground truth implied by the config's catalog, structure and [synth] section.
GroundTruth truth_from_config(const RunConfig& config);

/// Dataset named by the config, or a synthetic one drawn with the run seed.
SurveyDataset dataset_from_config(const RunConfig& config);

int cli_main(const std::vector<std::string>& args);

}  // namespace rbmchoice
