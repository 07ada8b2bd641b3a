#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/data_model.hpp"
#include "rbmchoice/latent_fn.hpp"
#include "rbmchoice/mnl.hpp"
#include "rbmchoice/optim.hpp"

namespace rbmchoice {

/// Sign applied to the loading inside the indicator logit. `negated` gives
/// p(I = 1 | x*) = sigmoid(-beta x*); reported loadings keep their own sign.
enum class MeasurementSign { negated, positive };

MeasurementSign parse_measurement_sign(const std::string& name);
std::string to_string(MeasurementSign sign);

struct MeasurementSpec {
  std::string indicator;
  std::string latent;
  double loading = 0.0;
  bool fixed = false;
};

/// Binary logit with the I = 0 class as reference: sigmoid(loading * latent_value).
double measurement_prob(double loading, double latent_value);

inline constexpr double kProbabilityFloor = 1e-12;

/// sum_j I_j ln p_j + (1 - I_j) ln(1 - p_j), with p clamped to [1e-12, 1 - 1e-12].
double indicator_cross_entropy(const Eigen::VectorXd& indicators, const Eigen::VectorXd& probabilities);

/// Choice model, structural latent equations and measurement equations,
/// estimated jointly.
///
/// Flat layout: [choice (ChoiceModelParams layout) | per latent: loadings, intercept |
/// measurement loadings]. beta_latent column h belongs to latents[h].
struct IclvParams {
  ChoiceModelParams choice;
  std::vector<LatentSpec> latents;
  std::vector<MeasurementSpec> measurement;
  MeasurementSign sign = MeasurementSign::negated;

  static IclvParams make(const VariableCatalog& catalog, std::vector<LatentSpec> latents,
                         std::vector<MeasurementSpec> measurement);

  std::size_t size() const;
  std::size_t structural_offset(std::size_t h) const;  // index of latents[h].loadings[0]
  std::size_t measurement_offset() const;

  Eigen::VectorXd to_vector() const;
  void set_from_vector(const Eigen::VectorXd& theta);
  std::vector<bool> fixed_mask() const;
  std::size_t n_free() const;
  std::vector<std::string> names(const VariableCatalog& catalog) const;
  std::vector<std::string> latent_names() const;

  void check(const VariableCatalog& catalog) const;
};

/// Cross-entropy of one row's indicators given that row's latent values (one per latent).
double indicator_cross_entropy(const IclvParams& params, const VariableCatalog& catalog,
                               const Eigen::VectorXd& indicators, const Eigen::VectorXd& latent_values);

/// Monte Carlo settings for latents with noise_std > 0. With every noise_std at
/// zero the likelihood is evaluated exactly and these are ignored.
struct SimulationConfig {
  std::size_t draws = 200;
  std::uint64_t seed = 0;
};

double joint_log_likelihood(const IclvParams& params, const SurveyDataset& dataset, const SimulationConfig& sim = {});
Eigen::VectorXd joint_gradient(const IclvParams& params, const SurveyDataset& dataset,
                               const SimulationConfig& sim = {});

/// Joint log-likelihood at all-zero parameters: choice null plus ln(1/2) per observed indicator.
double iclv_null_log_likelihood(const IclvParams& params, const SurveyDataset& dataset);

/// Noise-free latent values, rows x latents.
Eigen::MatrixXd latent_matrix(const IclvParams& params, const SurveyDataset& dataset);

ObjectiveFn iclv_objective(const IclvParams& shape, const SurveyDataset& dataset, const SimulationConfig& sim = {});

struct IclvEstimate {
  IclvParams params;
  FitStatistics stats;
  std::vector<ParamStat> table;
  OptimResult optim;
  double initial_ll = 0.0;
  double choice_ll = 0.0;  // choice component at the optimum (noise-free latents)
};

IclvEstimate estimate_iclv(const SurveyDataset& dataset, const IclvParams& init, const OptimizerConfig& config = {},
                           const SimulationConfig& sim = {}, bool compute_std_errors = true);

}  // namespace rbmchoice
