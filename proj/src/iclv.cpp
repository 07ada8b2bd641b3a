#include "rbmchoice/iclv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double sign_factor(MeasurementSign s) { return s == MeasurementSign::negated ? -1.0 : 1.0; }

/// Bernoulli log-likelihood term; `dlogp_du` receives d/du with p = sigmoid(u)
/// (zero where the probability is clamped).
double bernoulli_term(double indicator, double u, double* dlogp_du) {
  double p = sigmoid(u);
  bool clamped = false;
  if (p < kProbabilityFloor) {
    p = kProbabilityFloor;
    clamped = true;
  } else if (p > 1.0 - kProbabilityFloor) {
    p = 1.0 - kProbabilityFloor;
    clamped = true;
  }
  if (dlogp_du) *dlogp_du = clamped ? 0.0 : indicator - p;
  return indicator * std::log(p) + (1.0 - indicator) * std::log1p(-p);
}

/// Resolved structure plus, in simulated mode, the fixed noise draws.
class Evaluator {
 public:
  Evaluator(const IclvParams& shape, const SurveyDataset& ds, const SimulationConfig& sim) : p_(shape), ds_(ds) {
    p_.check(ds.catalog);
    const auto& cat = ds.catalog;
    for (const auto& l : p_.latents) inputs_.push_back(BoundLatent(l, cat).input_index());
    for (const auto& m : p_.measurement) {
      meas_indicator_.push_back(*cat.indicator_index(m.indicator));
      for (std::size_t h = 0; h < p_.latents.size(); ++h)
        if (p_.latents[h].name == m.latent) meas_latent_.push_back(h);
    }
    const bool noisy = std::any_of(p_.latents.begin(), p_.latents.end(), [](const auto& l) { return l.noise_std > 0; });
    draws_ = noisy ? std::max<std::size_t>(sim.draws, 1) : 1;
    if (noisy) {
      const std::size_t H = p_.latents.size();
      noise_.resize(ds.size() * draws_ * H);
      for (std::size_t n = 0; n < ds.size(); ++n)
        for (std::size_t r = 0; r < draws_; ++r)
          for (std::size_t h = 0; h < H; ++h)
            noise_[(n * draws_ + r) * H + h] = latent_noise(sim.seed, p_.latents[h].name, n, r);
    }
  }

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    p_.set_from_vector(theta);
    const std::size_t P = p_.size();
    if (grad) grad->setZero(ix(P));
    double ll = 0.0;
    Eigen::VectorXd gr;
    Eigen::MatrixXd gdraws;
    Eigen::VectorXd ldraws;
    for (std::size_t n = 0; n < ds_.size(); ++n) {
      if (draws_ == 1) {
        ll += row_draw(n, 0, grad);
        continue;
      }
      ldraws.resize(ix(draws_));
      if (grad) gdraws.setZero(ix(P), ix(draws_));
      for (std::size_t r = 0; r < draws_; ++r) {
        if (grad) {
          gr.setZero(ix(P));
          ldraws[ix(r)] = row_draw(n, r, &gr);
          gdraws.col(ix(r)) = gr;
        } else {
          ldraws[ix(r)] = row_draw(n, r, nullptr);
        }
      }
      const double lmax = ldraws.maxCoeff();
      const Eigen::VectorXd w = (ldraws.array() - lmax).exp().matrix();
      const double total = w.sum();
      ll += lmax + std::log(total / static_cast<double>(draws_));
      if (grad) *grad += gdraws * (w / total);
    }
    if (grad) {
      const auto fixed = p_.fixed_mask();
      for (std::size_t q = 0; q < P; ++q)
        if (fixed[q]) (*grad)[ix(q)] = 0.0;
    }
    return ll;
  }

 private:
  double row_draw(std::size_t n, std::size_t r, Eigen::VectorXd* g) {
    const auto& row = ds_.rows[n];
    const std::size_t H = p_.latents.size();
    z_.resize(H);
    x_.resize(H);
    dx_.assign(H, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const auto& spec = p_.latents[h];
      double z = spec.intercept;
      for (std::size_t q = 0; q < inputs_[h].size(); ++q) z += spec.loadings[ix(q)] * row.generic[ix(inputs_[h][q])];
      if (!noise_.empty()) z += spec.noise_std * noise_[(n * draws_ + r) * H + h];
      z_[h] = z;
      x_[h] = activate(spec.function, z);
    }
    const double* xs = H ? x_.data() : nullptr;
    const double lp = detail::row_choice_log_prob(p_.choice, row, xs, g ? &resid_ : nullptr);
    double meas = 0.0;
    if (g) {
      detail::accumulate_choice_gradient(p_.choice, row, xs, resid_, 1.0, *g);
      for (std::size_t h = 0; h < H; ++h) dx_[h] += resid_.dot(p_.choice.beta_latent.col(ix(h)));
    }
    if (row.indicators) {
      const double s = sign_factor(p_.sign);
      const std::size_t moff = p_.measurement_offset();
      for (std::size_t q = 0; q < p_.measurement.size(); ++q) {
        const std::size_t h = meas_latent_[q];
        const double beta = p_.measurement[q].loading;
        double d = 0.0;
        meas += bernoulli_term((*row.indicators)[ix(meas_indicator_[q])], s * beta * x_[h], g ? &d : nullptr);
        if (g && d != 0.0) {
          (*g)[ix(moff + q)] += d * s * x_[h];
          dx_[h] += d * s * beta;
        }
      }
    }
    if (g) {
      for (std::size_t h = 0; h < H; ++h) {
        const double dz = dx_[h] * activate_derivative(p_.latents[h].function, z_[h]);
        if (dz == 0.0) continue;
        const std::size_t off = p_.structural_offset(h);
        for (std::size_t q = 0; q < inputs_[h].size(); ++q) (*g)[ix(off + q)] += dz * row.generic[ix(inputs_[h][q])];
        (*g)[ix(off + inputs_[h].size())] += dz;
      }
    }
    return lp + meas;
  }

  IclvParams p_;
  const SurveyDataset& ds_;
  std::vector<std::vector<std::size_t>> inputs_;
  std::vector<std::size_t> meas_indicator_;
  std::vector<std::size_t> meas_latent_;
  std::size_t draws_ = 1;
  std::vector<double> noise_;
  std::vector<double> z_, x_, dx_;
  Eigen::VectorXd resid_;
};

}  // namespace

MeasurementSign parse_measurement_sign(const std::string& name) {
  if (name == "negated") return MeasurementSign::negated;
  if (name == "positive") return MeasurementSign::positive;
  throw std::invalid_argument("unknown measurement sign '" + name + "'");
}

std::string to_string(MeasurementSign sign) { return sign == MeasurementSign::negated ? "negated" : "positive"; }

double measurement_prob(double loading, double latent_value) { return sigmoid(loading * latent_value); }

double indicator_cross_entropy(const Eigen::VectorXd& indicators, const Eigen::VectorXd& probabilities) {
  if (indicators.size() != probabilities.size())
    throw std::invalid_argument("indicator_cross_entropy: length mismatch");
  double ce = 0.0;
  for (Eigen::Index j = 0; j < indicators.size(); ++j) {
    const double p = std::clamp(probabilities[j], kProbabilityFloor, 1.0 - kProbabilityFloor);
    ce += indicators[j] * std::log(p) + (1.0 - indicators[j]) * std::log1p(-p);
  }
  return ce;
}

double indicator_cross_entropy(const IclvParams& params, const VariableCatalog& catalog,
                               const Eigen::VectorXd& indicators, const Eigen::VectorXd& latent_values) {
  if (latent_values.size() != ix(params.latents.size()))
    throw std::invalid_argument("indicator_cross_entropy: one latent value per latent expected");
  const double s = sign_factor(params.sign);
  Eigen::VectorXd obs(ix(params.measurement.size())), prob(ix(params.measurement.size()));
  for (std::size_t q = 0; q < params.measurement.size(); ++q) {
    const auto& m = params.measurement[q];
    auto j = catalog.indicator_index(m.indicator);
    if (!j) throw std::invalid_argument("unknown indicator '" + m.indicator + "'");
    const auto names = params.latent_names();
    const auto h = std::find(names.begin(), names.end(), m.latent) - names.begin();
    obs[ix(q)] = indicators[ix(*j)];
    prob[ix(q)] = measurement_prob(s * m.loading, latent_values[h]);
  }
  return indicator_cross_entropy(obs, prob);
}

IclvParams IclvParams::make(const VariableCatalog& catalog, std::vector<LatentSpec> latents,
                            std::vector<MeasurementSpec> measurement) {
  IclvParams p;
  p.choice = ChoiceModelParams::zeros(catalog, latents.size());
  p.latents = std::move(latents);
  p.measurement = std::move(measurement);
  return p;
}

std::size_t IclvParams::structural_offset(std::size_t h) const {
  std::size_t off = choice.size();
  for (std::size_t q = 0; q < h; ++q) off += latents[q].inputs.size() + 1;
  return off;
}

std::size_t IclvParams::measurement_offset() const { return structural_offset(latents.size()); }

std::size_t IclvParams::size() const { return measurement_offset() + measurement.size(); }

Eigen::VectorXd IclvParams::to_vector() const {
  Eigen::VectorXd t(ix(size()));
  t.head(ix(choice.size())) = choice.to_vector();
  for (std::size_t h = 0; h < latents.size(); ++h) {
    const std::size_t off = structural_offset(h);
    t.segment(ix(off), latents[h].loadings.size()) = latents[h].loadings;
    t[ix(off + latents[h].inputs.size())] = latents[h].intercept;
  }
  for (std::size_t q = 0; q < measurement.size(); ++q) t[ix(measurement_offset() + q)] = measurement[q].loading;
  return t;
}

void IclvParams::set_from_vector(const Eigen::VectorXd& t) {
  if (t.size() != ix(size())) throw std::invalid_argument("ICLV parameter vector has wrong length");
  choice.set_from_vector(t.head(ix(choice.size())));
  for (std::size_t h = 0; h < latents.size(); ++h) {
    const std::size_t off = structural_offset(h);
    latents[h].loadings = t.segment(ix(off), latents[h].loadings.size());
    latents[h].intercept = t[ix(off + latents[h].inputs.size())];
  }
  for (std::size_t q = 0; q < measurement.size(); ++q) measurement[q].loading = t[ix(measurement_offset() + q)];
}

std::vector<bool> IclvParams::fixed_mask() const {
  std::vector<bool> f = choice.fixed;
  for (const auto& l : latents) {
    f.insert(f.end(), l.inputs.size(), false);
    f.push_back(l.fix_intercept);
  }
  for (const auto& m : measurement) f.push_back(m.fixed);
  return f;
}

std::size_t IclvParams::n_free() const {
  const auto f = fixed_mask();
  return static_cast<std::size_t>(std::count(f.begin(), f.end(), false));
}

std::vector<std::string> IclvParams::latent_names() const {
  std::vector<std::string> out;
  for (const auto& l : latents) out.push_back(l.name);
  return out;
}

std::vector<std::string> IclvParams::names(const VariableCatalog& catalog) const {
  auto out = choice.names(catalog, latent_names());
  for (const auto& l : latents) {
    for (const auto& in : l.inputs) out.push_back(l.name + "." + in);
    out.push_back(l.name + ".intercept");
  }
  for (const auto& m : measurement) out.push_back("MI_" + m.indicator);
  return out;
}

void IclvParams::check(const VariableCatalog& catalog) const {
  choice.check(catalog);
  if (choice.n_latents() != latents.size())
    throw std::invalid_argument("beta_latent needs one column per latent specification");
  std::vector<std::string> seen;
  for (const auto& l : latents) {
    BoundLatent(l, catalog);  // validates inputs
    if (std::find(seen.begin(), seen.end(), l.name) != seen.end())
      throw std::invalid_argument("duplicate latent name '" + l.name + "'");
    seen.push_back(l.name);
  }
  std::vector<std::string> used;
  for (const auto& m : measurement) {
    if (!catalog.indicator_index(m.indicator))
      throw std::invalid_argument("measurement refers to unknown indicator '" + m.indicator + "'");
    if (std::find(seen.begin(), seen.end(), m.latent) == seen.end())
      throw std::invalid_argument("indicator '" + m.indicator + "' loads on unknown latent '" + m.latent + "'");
    if (std::find(used.begin(), used.end(), m.indicator) != used.end())
      throw std::invalid_argument("indicator '" + m.indicator + "' loads on more than one latent");
    used.push_back(m.indicator);
  }
}

ObjectiveFn iclv_objective(const IclvParams& shape, const SurveyDataset& ds, const SimulationConfig& sim) {
  auto eval = std::make_shared<Evaluator>(shape, ds, sim);
  return [eval](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) { return (*eval)(theta, grad); };
}

double joint_log_likelihood(const IclvParams& params, const SurveyDataset& ds, const SimulationConfig& sim) {
  Evaluator eval(params, ds, sim);
  return eval(params.to_vector(), nullptr);
}

Eigen::VectorXd joint_gradient(const IclvParams& params, const SurveyDataset& ds, const SimulationConfig& sim) {
  Evaluator eval(params, ds, sim);
  Eigen::VectorXd g;
  eval(params.to_vector(), &g);
  return g;
}

double iclv_null_log_likelihood(const IclvParams& params, const SurveyDataset& ds) {
  double ll = null_log_likelihood(ds);
  for (const auto& row : ds.rows)
    if (row.indicators) ll += static_cast<double>(params.measurement.size()) * std::log(0.5);
  return ll;
}

Eigen::MatrixXd latent_matrix(const IclvParams& params, const SurveyDataset& ds) {
  Eigen::MatrixXd out(ix(ds.size()), ix(params.latents.size()));
  for (std::size_t h = 0; h < params.latents.size(); ++h) {
    const BoundLatent bound(params.latents[h], ds.catalog);
    for (std::size_t n = 0; n < ds.size(); ++n) out(ix(n), ix(h)) = bound.value(ds.rows[n].generic);
  }
  return out;
}

IclvEstimate estimate_iclv(const SurveyDataset& ds, const IclvParams& init, const OptimizerConfig& config,
                           const SimulationConfig& sim, bool compute_std_errors) {
  if (config.method == OptimMethod::sgd)
    throw std::invalid_argument("estimate_iclv: the sgd method is only available for plain MNL");
  init.check(ds.catalog);
  const auto f = iclv_objective(init, ds, sim);
  const auto fixed = init.fixed_mask();
  IclvEstimate out;
  out.initial_ll = f(init.to_vector(), nullptr);
  out.optim = maximize(f, init.to_vector(), fixed, config);
  out.params = init;
  out.params.set_from_vector(out.optim.theta);
  out.stats = FitStatistics::compute(iclv_null_log_likelihood(init, ds), out.optim.value, init.n_free(), ds.size());
  out.choice_ll = log_likelihood(out.params.choice, ds, latent_matrix(out.params, ds));
  const auto names = out.params.names(ds.catalog);
  if (compute_std_errors) {
    out.table = wald_table(f, names, out.optim.theta, fixed);
  } else {
    for (std::size_t q = 0; q < names.size(); ++q)
      out.table.push_back(ParamStat{names[q], out.optim.theta[ix(q)], std::nullopt, std::nullopt, fixed[q]});
  }
  detail::mark_reference(out.table, out.params.choice);
  return out;
}

}  // namespace rbmchoice
