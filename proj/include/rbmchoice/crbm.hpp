#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/data_model.hpp"
#include "rbmchoice/optim.hpp"
#include "rbmchoice/rng.hpp"

namespace rbmchoice {

/// How the covariate-to-latent weights enter the energy. `bilinear` couples
/// x*_j G_jm x_m; `constant` drops x*_j so the term is a state-independent offset.
enum class GTermMode { bilinear, constant };

GTermMode parse_g_term(const std::string& name);
std::string to_string(GTermMode mode);

/// Conditional RBM over a one-hot choice y (I alternatives) and J binary latents,
/// conditioned on per-alternative attributes (K) and generic covariates (M):
///
///   E(y, x*, x) = - sum_i y_i c_alt_i - sum_j x*_j c_lat_j - sum_ij x*_j D_ij y_i
///                 - sum_i y_i B_i . a_i - sum_jm x*_j G_jm g_m
///
/// Flat layout: [c_alt (I) | c_lat (J) | D (I x J) | B (I x K) | G (J x M)], row-major.
struct CRBMParams {
  Eigen::VectorXd c_alt;
  Eigen::VectorXd c_lat;
  Eigen::MatrixXd D;
  Eigen::MatrixXd B;
  Eigen::MatrixXd G;
  std::vector<bool> fixed;
  std::size_t reference = 0;
  GTermMode g_term = GTermMode::bilinear;

  /// Zero parameters with c_alt[reference] and D's reference row fixed. A shift of
  /// D column j that is common to all alternatives is indistinguishable from a
  /// shift of c_lat_j, so the reference row pins it.
  static CRBMParams zeros(std::size_t n_alternatives, std::size_t n_latents, std::size_t n_attributes,
                          std::size_t n_generic, std::size_t reference);
  /// As zeros(), with free weights (D, B, G) drawn from Normal(0, init_std^2).
  static CRBMParams initialize(std::size_t n_alternatives, std::size_t n_latents, std::size_t n_attributes,
                               std::size_t n_generic, std::size_t reference, std::uint64_t seed,
                               double init_std = 0.01);

  std::size_t n_alternatives() const { return static_cast<std::size_t>(c_alt.size()); }
  std::size_t n_latents() const { return static_cast<std::size_t>(c_lat.size()); }
  std::size_t n_attributes() const { return static_cast<std::size_t>(B.cols()); }
  std::size_t n_generic() const { return static_cast<std::size_t>(G.cols()); }
  std::size_t size() const;

  std::size_t c_alt_index(std::size_t i) const { return i; }
  std::size_t c_lat_index(std::size_t j) const { return n_alternatives() + j; }
  std::size_t d_index(std::size_t i, std::size_t j) const {
    return n_alternatives() + n_latents() + i * n_latents() + j;
  }
  std::size_t b_index(std::size_t i, std::size_t k) const {
    return n_alternatives() + n_latents() + n_alternatives() * n_latents() + i * n_attributes() + k;
  }
  std::size_t g_index(std::size_t j, std::size_t m) const {
    return n_alternatives() + n_latents() + n_alternatives() * (n_latents() + n_attributes()) + j * n_generic() + m;
  }

  Eigen::VectorXd to_vector() const;
  void set_from_vector(const Eigen::VectorXd& theta);
  std::vector<std::string> names(const VariableCatalog& catalog) const;

  /// Fixes row j of G at zero.
  void fix_g_row(std::size_t j);

  void check() const;
  void check(const VariableCatalog& catalog) const;
};

struct GibbsState {
  std::size_t y = 0;            // index of the active choice unit
  std::vector<std::uint8_t> xstar;
  std::size_t step = 0;

  Eigen::VectorXd one_hot(std::size_t n_alternatives) const;
};

double energy(std::size_t y, std::span<const std::uint8_t> xstar, const ObservationRow& row, const CRBMParams& params);

/// -ln sum_{x*} exp(-E(y, x*, x)) in closed form.
double free_energy(std::size_t y, const ObservationRow& row, const CRBMParams& params);

/// p(x*_j = 1 | y, x) for every j.
Eigen::VectorXd p_latent_given_visible(std::size_t y, const ObservationRow& row, const CRBMParams& params);

/// p(y | x*, x) over the row's available alternatives.
Eigen::VectorXd p_choice_given_latent(std::span<const std::uint8_t> xstar, const ObservationRow& row,
                                      const CRBMParams& params);

/// Exact p(y | x) from free energies over the available alternatives.
Eigen::VectorXd p_choice_marginal(const ObservationRow& row, const CRBMParams& params);

/// k alternating Gibbs steps from start_y: x* ~ p(x*|y,x) then y ~ p(y|x*,x).
/// `observer`, when set, sees the state after every step.
GibbsState gibbs_chain(const ObservationRow& row, const CRBMParams& params, std::size_t start_y, std::size_t k,
                       Rng& rng, const std::function<void(const GibbsState&)>& observer = {});

struct CDGradient {
  Eigen::VectorXd gradient;     // batch mean, flat layout, fixed entries 0
  double reconstruction_error;  // share of rows whose chain-end choice differs from the data
};

/// CD-k estimate of the mean log-likelihood gradient over `batch`. Each row runs
/// on its own substream derived from one draw of `rng` and the row index.
CDGradient cd_gradient(const SurveyDataset& dataset, std::span<const std::size_t> batch, const CRBMParams& params,
                       std::size_t k, Rng& rng);

/// Per-row CD-k gradient contributions (rows x parameters); used for the
/// Fisher approximation and for Monte Carlo diagnostics.
Eigen::MatrixXd cd_gradient_rows(const SurveyDataset& dataset, std::span<const std::size_t> batch,
                                 const CRBMParams& params, std::size_t k, Rng& rng);

inline constexpr std::size_t kMaxExactLatents = 20;

/// sum_rows ln p(y_row | x_row), exact. Throws std::invalid_argument when the
/// model has more than `max_latents` latents.
double exact_log_likelihood(const SurveyDataset& dataset, const CRBMParams& params,
                            std::size_t max_latents = kMaxExactLatents);

/// Analytic gradient of exact_log_likelihood in the flat layout, fixed entries 0.
Eigen::VectorXd exact_gradient(const SurveyDataset& dataset, const CRBMParams& params);

struct CRBMTrainConfig {
  std::size_t batch_size = 32;
  std::size_t cd_steps = 1;
  double learning_rate = 0.01;
  double lr_decay = 0.0;  // epoch t uses learning_rate / (1 + lr_decay * t)
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double divergence_bound = 1e3;
  std::size_t trace_exact_max_latents = 12;
  bool measure_wall_time = false;
};

struct TraceRow {
  std::size_t epoch = 0;
  double reconstruction_error = 0.0;
  std::optional<double> exact_ll;
  double gradient_norm = 0.0;  // L2 norm of the epoch-mean CD gradient
  std::optional<double> wall_seconds;
};

struct CRBMTrainResult {
  CRBMParams params;
  std::vector<TraceRow> trace;
  bool diverged = false;
  std::string message;
};

/// Mini-batch CD-k training with ascent updates theta += lr * (data - model).
CRBMTrainResult train(const SurveyDataset& dataset, const CRBMParams& init, const CRBMTrainConfig& config);

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path);
void write_trace(const std::vector<TraceRow>& trace, std::ostream& out);

/// Maximizes exact_log_likelihood directly (small models).
struct CRBMExactFit {
  CRBMParams params;
  OptimResult optim;
};
CRBMExactFit fit_exact(const SurveyDataset& dataset, const CRBMParams& init, const OptimizerConfig& config = {});

struct LatentSummary {
  std::size_t index = 0;
  Eigen::VectorXd choice_weights;  // column j of D
  Eigen::VectorXd loadings;        // row j of G
  double bias = 0.0;
  std::vector<ParamStat> d_stats;
  std::vector<ParamStat> g_stats;
  double max_abs_t = 0.0;  // over free D entries with a standard error
  bool keep = false;
  std::optional<std::size_t> duplicate_of;
  bool flagged = false;  // curvature singular along some of its weights
};

struct LatentReport {
  std::vector<LatentSummary> latents;
  double t_threshold = 1.96;
  bool used_exact_hessian = true;
  std::vector<ParamStat> table;  // every parameter

  std::vector<std::size_t> kept() const;
};

struct ExtractOptions {
  double duplicate_cosine = 0.99;
  std::size_t max_exact_latents = kMaxExactLatents;
  std::size_t fisher_cd_steps = 1;
  std::uint64_t seed = 0;
};

/// Wald tests on D and G. A latent is kept when any |t| on its D column exceeds
/// t_threshold and it is not a near-copy of an earlier latent.
LatentReport extract_significant_latents(const CRBMParams& params, const SurveyDataset& dataset, double t_threshold,
                                         const ExtractOptions& options = {});

}  // namespace rbmchoice
