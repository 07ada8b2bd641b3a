#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/data_model.hpp"
#include "rbmchoice/iclv.hpp"
#include "rbmchoice/mnl.hpp"
#include "rbmchoice/optim.hpp"

namespace rbmchoice {

enum class ModelFamily { mnl, iclv, crbm };

ModelFamily parse_model_family(const std::string& name);
std::string to_string(ModelFamily family);

/// How covariates are drawn for each synthetic respondent.
struct CovariateSpec {
  Eigen::VectorXd generic_prob;  // Bernoulli probability per generic variable
  Eigen::MatrixXd attr_low;      // alternatives x attributes, Uniform(low, high)
  Eigen::MatrixXd attr_high;
  Eigen::VectorXd availability_prob;  // per alternative; rows with < 2 available fall back to all available
  /// Each generic variable reuses a per-row shared uniform with this
  /// probability instead of its own draw, which makes the binaries co-vary.
  double generic_correlation = 0.0;
  double indicator_missing_prob = 0.0;  // share of rows without indicator responses

  void check(const VariableCatalog& catalog) const;
  /// Independent fair-coin binaries, attributes Uniform(0, 1), everything available.
  static CovariateSpec defaults(const VariableCatalog& catalog);
};

struct GroundTruth {
  ModelFamily family = ModelFamily::mnl;
  VariableCatalog catalog;
  ChoiceModelParams mnl;  // family mnl
  IclvParams iclv;        // family iclv
  CRBMParams crbm;        // family crbm
  CovariateSpec covariates;
  std::size_t n_obs = 5000;
  std::uint64_t seed = 0;

  void check() const;
  /// Flat parameter vector and names of the generating model.
  Eigen::VectorXd theta() const;
  std::vector<std::string> names() const;
  std::vector<bool> fixed() const;
};

/// Truth with the structure of `shape` (latents and measurement only matter for
/// family iclv; utility generic coefficients carry over to mnl) and values drawn
/// from `seed`. Magnitudes scale with weight_scale.
GroundTruth random_truth(ModelFamily family, const VariableCatalog& catalog, const IclvParams& shape,
                         std::size_t crbm_latents, double weight_scale, std::uint64_t seed);

/// Six alternatives, three attributes, twelve generic binaries, three sigmoid
/// latents on four inputs each and twelve indicators (four per latent).
GroundTruth default_truth(ModelFamily family, std::size_t n_obs = 5000, std::uint64_t seed = 0);

/// Three alternatives, two attributes, three generic binaries, `n_latents` hidden units.
GroundTruth small_crbm_truth(std::size_t n_latents = 2, std::size_t n_obs = 2000, std::uint64_t seed = 0,
                             double weight_scale = 1.0);

struct SyntheticSample {
  SurveyDataset dataset;
  Eigen::MatrixXd latents;  // rows x latents: realised ICLV latents or sampled C-RBM hidden states
};

SurveyDataset generate(const GroundTruth& truth);
SyntheticSample generate_with_latents(const GroundTruth& truth);

enum class Estimator { mnl, iclv, crbm, two_stage };

Estimator parse_estimator(const std::string& name);
std::string to_string(Estimator estimator);

struct RecoveryConfig {
  std::size_t replications = 20;
  bool init_at_truth = false;
  OptimizerConfig optimizer;
  SimulationConfig simulation;
  CRBMTrainConfig crbm;
  double t_threshold = 1.96;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ParamRecovery {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // share of replications whose 95% interval contains the truth
  std::size_t n_intervals = 0;
};

struct ReplicationResult {
  std::uint64_t seed = 0;
  bool ok = false;
  bool converged = false;
  std::string error;
  Eigen::VectorXd estimate;
  std::vector<std::optional<double>> std_err;
  double final_ll = 0.0;
  std::optional<double> baseline_ll;  // two-stage: cold-start final LL on the same data
};

struct RecoveryReport {
  Estimator estimator = Estimator::mnl;
  std::vector<ParamRecovery> params;  // free parameters of the generating model
  std::vector<ReplicationResult> replications;
  double mean_coverage = 0.0;
  double mean_rmse = 0.0;
  std::size_t n_failed = 0;
  /// Two-stage only: share of replications with final LL >= baseline LL (within ll_slack).
  std::optional<double> ll_win_rate;
};

inline constexpr double kLikelihoodSlack = 1e-6;

/// Generate, estimate and compare, once per replication. Replication r uses
/// seed derive_seed(truth.seed, r) for its data and its estimator.
RecoveryReport recovery_experiment(const GroundTruth& truth, Estimator estimator, const RecoveryConfig& config);

}  // namespace rbmchoice
