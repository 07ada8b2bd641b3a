#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/data_model.hpp"
#include "rbmchoice/optim.hpp"

namespace rbmchoice {

/// Parameters of a multinomial logit with optional latent regressors:
///
///   V_i = asc_i + sum_k beta_attr_k x_ik + sum_m beta_generic_im g_m + sum_h beta_latent_ih l_h
///
/// Flat layout (used by estimators and the parameter file):
/// [asc (I) | beta_attr (K) | beta_generic (I x M, row-major) | beta_latent (I x H, row-major)].
/// `fixed` is aligned with that layout; a fixed parameter keeps its value and
/// receives a zero gradient.
struct ChoiceModelParams {
  Eigen::VectorXd asc;
  Eigen::VectorXd beta_attr;
  Eigen::MatrixXd beta_generic;
  Eigen::MatrixXd beta_latent;
  std::vector<bool> fixed;
  std::size_t reference = 0;

  /// Zero parameters with the reference ASC fixed, the reference rows of the
  /// generic and latent blocks fixed, and every generic coefficient excluded
  /// (fixed at 0) until freed with free_generic().
  static ChoiceModelParams zeros(std::size_t n_alternatives, std::size_t n_attributes, std::size_t n_generic,
                                 std::size_t n_latents, std::size_t reference);
  static ChoiceModelParams zeros(const VariableCatalog& catalog, std::size_t n_latents);

  void free_generic(std::size_t m);

  std::size_t n_alternatives() const { return static_cast<std::size_t>(asc.size()); }
  std::size_t n_attributes() const { return static_cast<std::size_t>(beta_attr.size()); }
  std::size_t n_generic() const { return static_cast<std::size_t>(beta_generic.cols()); }
  std::size_t n_latents() const { return static_cast<std::size_t>(beta_latent.cols()); }
  std::size_t size() const;
  std::size_t n_free() const;

  std::size_t asc_index(std::size_t i) const { return i; }
  std::size_t attr_index(std::size_t k) const { return n_alternatives() + k; }
  std::size_t generic_index(std::size_t i, std::size_t m) const {
    return n_alternatives() + n_attributes() + i * n_generic() + m;
  }
  std::size_t latent_index(std::size_t i, std::size_t h) const {
    return n_alternatives() + n_attributes() + n_alternatives() * n_generic() + i * n_latents() + h;
  }

  Eigen::VectorXd to_vector() const;
  void set_from_vector(const Eigen::VectorXd& theta);

  /// ASC_<alt>, <attribute>, B_<generic>_<alt>, LV_<latent>_<alt>.
  std::vector<std::string> names(const VariableCatalog& catalog, const std::vector<std::string>& latent_names) const;

  /// Throws std::invalid_argument on inconsistent dimensions or a free reference ASC.
  void check(const VariableCatalog& catalog) const;
};

struct FitStatistics {
  double null_ll = 0.0;
  double final_ll = 0.0;
  double rho_square = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n_params = 0;  // free parameters only
  std::size_t n_obs = 0;

  static FitStatistics compute(double null_ll, double final_ll, std::size_t n_params, std::size_t n_obs);
};

Eigen::VectorXd utility(const ChoiceModelParams& params, const ObservationRow& row,
                        const Eigen::VectorXd& latent = {});

/// Softmax over available alternatives; unavailable ones get exactly 0.
Eigen::VectorXd choice_probabilities(const Eigen::VectorXd& utilities, std::span<const std::uint8_t> availability);

/// `latents` is rows x H; pass an empty matrix for models without latents.
double log_likelihood(const ChoiceModelParams& params, const SurveyDataset& dataset,
                      const Eigen::MatrixXd& latents = {});

double null_log_likelihood(const SurveyDataset& dataset);

/// Analytic score in the flat layout; fixed entries are 0.
Eigen::VectorXd gradient(const ChoiceModelParams& params, const SurveyDataset& dataset,
                         const Eigen::MatrixXd& latents = {});

struct MnlEstimate {
  ChoiceModelParams params;
  FitStatistics stats;
  std::vector<ParamStat> table;
  OptimResult optim;
};

/// Maximum likelihood from `init`; the structure (free/fixed) comes from init.fixed.
/// Non-convergence is reported in optim.converged, never thrown.
MnlEstimate estimate(const SurveyDataset& dataset, const ChoiceModelParams& init, const OptimizerConfig& config = {},
                     const Eigen::MatrixXd& latents = {}, bool compute_std_errors = true);

std::vector<ParamStat> std_errors_and_ttests(const ChoiceModelParams& params, const SurveyDataset& dataset,
                                             const Eigen::MatrixXd& latents = {});

namespace detail {

/// Log-probability of the chosen alternative for one row. If `dlogp_dv` is
/// non-null it receives y - P (per alternative).
double row_choice_log_prob(const ChoiceModelParams& params, const ObservationRow& row, const double* latent,
                           Eigen::VectorXd* dlogp_dv);

/// Accumulates the flat-layout gradient contribution of one row given y - P.
void accumulate_choice_gradient(const ChoiceModelParams& params, const ObservationRow& row, const double* latent,
                                const Eigen::VectorXd& residual, double weight, Eigen::VectorXd& grad);

void mark_reference(std::vector<ParamStat>& table, const ChoiceModelParams& params);

}  // namespace detail

}  // namespace rbmchoice
