#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/data_model.hpp"

namespace rbmchoice {

enum class LatentFunction { linear, sigmoid, relu, softplus };

LatentFunction parse_latent_function(const std::string& name);
std::string to_string(LatentFunction f);

double activate(LatentFunction f, double z);
/// d activate / dz. The relu kink at 0 takes the subgradient 0.
double activate_derivative(LatentFunction f, double z);

/// Structural equation of one latent: x* = f(loadings . g[inputs] + intercept + noise),
/// noise ~ Normal(0, noise_std^2).
struct LatentSpec {
  std::string name;
  LatentFunction function = LatentFunction::sigmoid;
  std::vector<std::string> inputs;
  Eigen::VectorXd loadings;
  double intercept = 0.0;
  bool fix_intercept = false;
  double noise_std = 0.0;

  void check() const;
};

/// A LatentSpec with its inputs resolved against a catalog.
class BoundLatent {
 public:
  BoundLatent(const LatentSpec& spec, const VariableCatalog& catalog);

  const LatentSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& input_index() const { return index_; }

  double linear_predictor(const Eigen::VectorXd& generic) const;
  double value(const Eigen::VectorXd& generic, double noise = 0.0) const;

 private:
  LatentSpec spec_;
  std::vector<std::size_t> index_;
};

/// `noise_draw` is the realised disturbance (already on the noise_std scale).
double eval_latent(const LatentSpec& spec, const VariableCatalog& catalog, const Eigen::VectorXd& generic,
                   std::optional<double> noise_draw = std::nullopt);

/// Standard-normal draw reproducible per (seed, latent name, row, draw).
double latent_noise(std::uint64_t seed, const std::string& latent_name, std::size_t row, std::size_t draw = 0);

/// Per-row latent values. With noise_std > 0 the disturbance for row r is
/// noise_std * latent_noise(seed, spec.name, r).
Eigen::VectorXd eval_latent_batch(const LatentSpec& spec, const SurveyDataset& dataset, std::uint64_t seed = 0);

}  // namespace rbmchoice
