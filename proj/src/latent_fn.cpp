#include "rbmchoice/latent_fn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rbmchoice/rng.hpp"

namespace rbmchoice {

LatentFunction parse_latent_function(const std::string& name) {
  if (name == "linear") return LatentFunction::linear;
  if (name == "sigmoid") return LatentFunction::sigmoid;
  if (name == "relu") return LatentFunction::relu;
  if (name == "softplus") return LatentFunction::softplus;
  throw std::invalid_argument("unknown latent function '" + name + "'");
}

std::string to_string(LatentFunction f) {
  switch (f) {
    case LatentFunction::linear: return "linear";
    case LatentFunction::sigmoid: return "sigmoid";
    case LatentFunction::relu: return "relu";
    case LatentFunction::softplus: return "softplus";
  }
  return "?";
}

double activate(LatentFunction f, double z) {
  switch (f) {
    case LatentFunction::linear: return z;
    case LatentFunction::sigmoid: {
      // Kept strictly inside (0, 1) even where the exact value rounds to an endpoint.
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      return std::clamp(s, std::numeric_limits<double>::min(), 1.0 - 0x1.0p-53);
    }
    case LatentFunction::relu: return z > 0 ? z : 0.0;
    case LatentFunction::softplus: return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return z;
}

double activate_derivative(LatentFunction f, double z) {
  switch (f) {
    case LatentFunction::linear: return 1.0;
    case LatentFunction::sigmoid: {
      const double s = activate(LatentFunction::sigmoid, z);
      return s * (1.0 - s);
    }
    case LatentFunction::relu: return z > 0 ? 1.0 : 0.0;
    case LatentFunction::softplus: return activate(LatentFunction::sigmoid, z);
  }
  return 1.0;
}

void LatentSpec::check() const {
  if (inputs.empty()) throw std::invalid_argument("latent '" + name + "' has no inputs");
  if (loadings.size() != static_cast<Eigen::Index>(inputs.size()))
    throw std::invalid_argument("latent '" + name + "': loadings length differs from inputs");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("latent '" + name + "': noise_std must be >= 0");
}

BoundLatent::BoundLatent(const LatentSpec& spec, const VariableCatalog& catalog) : spec_(spec) {
  spec_.check();
  for (const auto& in : spec_.inputs) {
    auto m = catalog.generic_index(in);
    if (!m) throw std::invalid_argument("latent '" + spec_.name + "': unknown input variable '" + in + "'");
    index_.push_back(*m);
  }
}

double BoundLatent::linear_predictor(const Eigen::VectorXd& generic) const {
  double z = spec_.intercept;
  for (std::size_t q = 0; q < index_.size(); ++q) {
    if (index_[q] >= static_cast<std::size_t>(generic.size()))
      throw std::invalid_argument("latent '" + spec_.name + "': generic vector misses input '" + spec_.inputs[q] + "'");
    z += spec_.loadings[static_cast<Eigen::Index>(q)] * generic[static_cast<Eigen::Index>(index_[q])];
  }
  return z;
}

double BoundLatent::value(const Eigen::VectorXd& generic, double noise) const {
  return activate(spec_.function, linear_predictor(generic) + noise);
}

double eval_latent(const LatentSpec& spec, const VariableCatalog& catalog, const Eigen::VectorXd& generic,
                   std::optional<double> noise_draw) {
  return BoundLatent(spec, catalog).value(generic, noise_draw.value_or(0.0));
}

double latent_noise(std::uint64_t seed, const std::string& latent_name, std::size_t row, std::size_t draw) {
  Rng rng(derive_seed(seed, stable_hash(latent_name), row, draw));
  return standard_normal(rng);
}

Eigen::VectorXd eval_latent_batch(const LatentSpec& spec, const SurveyDataset& ds, std::uint64_t seed) {
  const BoundLatent bound(spec, ds.catalog);
  Eigen::VectorXd out(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const double noise = spec.noise_std > 0 ? spec.noise_std * latent_noise(seed, spec.name, r) : 0.0;
    out[static_cast<Eigen::Index>(r)] = bound.value(ds.rows[r].generic, noise);
  }
  return out;
}

}  // namespace rbmchoice
