#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rbmchoice {

/// Objective to maximize. When `grad` is non-null it receives the full gradient.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd* grad)>;

/// Mini-batch variant: evaluates only over the given row indices.
using BatchObjectiveFn =
    std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, std::span<const std::size_t> rows)>;

enum class OptimMethod {
  ascent_bfgs,  // adaptive-step gradient ascent, then quasi-Newton refinement
  ascent,
  bfgs,
  sgd,
};

OptimMethod parse_optim_method(const std::string& name);
std::string to_string(OptimMethod method);

struct OptimizerConfig {
  OptimMethod method = OptimMethod::ascent_bfgs;
  double tolerance = 1e-5;  // on the infinity norm of the free-parameter gradient
  int max_iterations = 10000;
  int ascent_iterations = 50;
  double initial_step = 1e-3;
  // mini-batch SGD
  std::size_t sgd_batch_size = 64;
  double sgd_learning_rate = 0.01;
  int sgd_epochs = 200;
  std::uint64_t seed = 0;
};

struct OptimResult {
  Eigen::VectorXd theta;
  double value = 0.0;
  double grad_inf_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Maximizes `f` over the entries of theta whose `fixed` flag is false.
OptimResult maximize(const ObjectiveFn& f, Eigen::VectorXd theta0, const std::vector<bool>& fixed,
                     const OptimizerConfig& config);

/// Mini-batch stochastic gradient ascent. Gradients from the batch objective are
/// rescaled to the full-sample sum before the step.
OptimResult maximize_sgd(const BatchObjectiveFn& f, std::size_t n_rows, Eigen::VectorXd theta0,
                         const std::vector<bool>& fixed, const OptimizerConfig& config);

/// Central differences of the analytic gradient, step max(1e-4, 1e-4 |theta_j|),
/// restricted to the `free` indices and symmetrized.
Eigen::MatrixXd numerical_hessian(const ObjectiveFn& f, const Eigen::VectorXd& theta,
                                  const std::vector<std::size_t>& free);

std::vector<std::size_t> free_indices(const std::vector<bool>& fixed);

struct ParamStat {
  std::string name;
  double value = 0.0;
  std::optional<double> std_err;
  std::optional<double> t;
  bool fixed = false;
  bool reference = false;
  bool flagged = false;  // singular or indefinite curvature along this parameter
};

/// Standard errors from the negative inverse Hessian; parameters caught in a
/// singular direction, or with a non-positive variance, are flagged and left
/// without std error / t.
std::vector<ParamStat> inferential_table(const std::vector<std::string>& names, const Eigen::VectorXd& theta,
                                         const std::vector<bool>& fixed, const Eigen::MatrixXd& hessian_free);

/// Convenience: numerical Hessian followed by inferential_table.
std::vector<ParamStat> wald_table(const ObjectiveFn& f, const std::vector<std::string>& names,
                                  const Eigen::VectorXd& theta, const std::vector<bool>& fixed);

double t_statistic(double value, double std_err);

}  // namespace rbmchoice
