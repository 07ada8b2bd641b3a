#include "rbmchoice/mnl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_latents(const ChoiceModelParams& p, const SurveyDataset& ds, const Eigen::MatrixXd& latents) {
  if (p.n_latents() == 0) return;
  if (latents.rows() != ix(ds.size()) || latents.cols() != ix(p.n_latents()))
    throw std::invalid_argument("latent matrix must be rows x " + std::to_string(p.n_latents()));
}

const double* latent_row(const Eigen::MatrixXd& latents, std::size_t r, std::vector<double>& buf) {
  if (latents.cols() == 0) return nullptr;
  buf.resize(static_cast<std::size_t>(latents.cols()));
  for (Eigen::Index h = 0; h < latents.cols(); ++h) buf[static_cast<std::size_t>(h)] = latents(ix(r), h);
  return buf.data();
}

}  // namespace

ChoiceModelParams ChoiceModelParams::zeros(std::size_t I, std::size_t K, std::size_t M, std::size_t H,
                                           std::size_t reference) {
  if (reference >= I) throw std::invalid_argument("reference alternative out of range");
  ChoiceModelParams p;
  p.asc = Eigen::VectorXd::Zero(ix(I));
  p.beta_attr = Eigen::VectorXd::Zero(ix(K));
  p.beta_generic = Eigen::MatrixXd::Zero(ix(I), ix(M));
  p.beta_latent = Eigen::MatrixXd::Zero(ix(I), ix(H));
  p.reference = reference;
  p.fixed.assign(p.size(), false);
  p.fixed[p.asc_index(reference)] = true;
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t m = 0; m < M; ++m) p.fixed[p.generic_index(i, m)] = true;
  for (std::size_t h = 0; h < H; ++h) p.fixed[p.latent_index(reference, h)] = true;
  return p;
}

ChoiceModelParams ChoiceModelParams::zeros(const VariableCatalog& catalog, std::size_t n_latents) {
  return zeros(catalog.n_alternatives(), catalog.n_attributes(), catalog.n_generic(), n_latents, catalog.reference);
}

void ChoiceModelParams::free_generic(std::size_t m) {
  if (m >= n_generic()) throw std::out_of_range("generic index out of range");
  for (std::size_t i = 0; i < n_alternatives(); ++i)
    if (i != reference) fixed[generic_index(i, m)] = false;
}

std::size_t ChoiceModelParams::size() const {
  const std::size_t I = n_alternatives();
  return I + n_attributes() + I * n_generic() + I * n_latents();
}

std::size_t ChoiceModelParams::n_free() const {
  return static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), false));
}

Eigen::VectorXd ChoiceModelParams::to_vector() const {
  Eigen::VectorXd theta(ix(size()));
  const std::size_t I = n_alternatives();
  for (std::size_t i = 0; i < I; ++i) theta[ix(asc_index(i))] = asc[ix(i)];
  for (std::size_t k = 0; k < n_attributes(); ++k) theta[ix(attr_index(k))] = beta_attr[ix(k)];
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t m = 0; m < n_generic(); ++m) theta[ix(generic_index(i, m))] = beta_generic(ix(i), ix(m));
    for (std::size_t h = 0; h < n_latents(); ++h) theta[ix(latent_index(i, h))] = beta_latent(ix(i), ix(h));
  }
  return theta;
}

void ChoiceModelParams::set_from_vector(const Eigen::VectorXd& theta) {
  if (theta.size() != ix(size())) throw std::invalid_argument("parameter vector has wrong length");
  const std::size_t I = n_alternatives();
  for (std::size_t i = 0; i < I; ++i) asc[ix(i)] = theta[ix(asc_index(i))];
  for (std::size_t k = 0; k < n_attributes(); ++k) beta_attr[ix(k)] = theta[ix(attr_index(k))];
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t m = 0; m < n_generic(); ++m) beta_generic(ix(i), ix(m)) = theta[ix(generic_index(i, m))];
    for (std::size_t h = 0; h < n_latents(); ++h) beta_latent(ix(i), ix(h)) = theta[ix(latent_index(i, h))];
  }
}

std::vector<std::string> ChoiceModelParams::names(const VariableCatalog& cat,
                                                  const std::vector<std::string>& latent_names) const {
  std::vector<std::string> out(size());
  const std::size_t I = n_alternatives();
  for (std::size_t i = 0; i < I; ++i) out[asc_index(i)] = "ASC_" + cat.alternatives.at(i);
  for (std::size_t k = 0; k < n_attributes(); ++k) out[attr_index(k)] = cat.alt_specific_vars.at(k);
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t m = 0; m < n_generic(); ++m)
      out[generic_index(i, m)] = "B_" + cat.generic_vars.at(m) + "_" + cat.alternatives[i];
    for (std::size_t h = 0; h < n_latents(); ++h) {
      const std::string ln = h < latent_names.size() ? latent_names[h] : "latent" + std::to_string(h + 1);
      out[latent_index(i, h)] = "LV_" + ln + "_" + cat.alternatives[i];
    }
  }
  return out;
}

void ChoiceModelParams::check(const VariableCatalog& cat) const {
  if (n_alternatives() != cat.n_alternatives() || n_attributes() != cat.n_attributes() ||
      beta_generic.rows() != asc.size() || n_generic() != cat.n_generic() || beta_latent.rows() != asc.size())
    throw std::invalid_argument("choice parameters do not match the catalog dimensions");
  if (fixed.size() != size()) throw std::invalid_argument("fixed mask has wrong length");
  if (reference != cat.reference) throw std::invalid_argument("choice parameters use a different reference");
  if (!fixed[asc_index(reference)] || asc[ix(reference)] != 0.0)
    throw std::invalid_argument("reference alternative's ASC must be fixed at 0");
}

FitStatistics FitStatistics::compute(double null_ll, double final_ll, std::size_t n_params, std::size_t n_obs) {
  FitStatistics s;
  s.null_ll = null_ll;
  s.final_ll = final_ll;
  s.n_params = n_params;
  s.n_obs = n_obs;
  s.rho_square = 1.0 - final_ll / null_ll;
  const double k = static_cast<double>(n_params);
  s.aic = 2.0 * k - 2.0 * final_ll;
  s.bic = std::log(static_cast<double>(n_obs)) * k - 2.0 * final_ll;
  return s;
}

Eigen::VectorXd utility(const ChoiceModelParams& p, const ObservationRow& row, const Eigen::VectorXd& latent) {
  if (row.alt_attributes.rows() != p.asc.size() || row.alt_attributes.cols() != p.beta_attr.size() ||
      row.generic.size() != p.beta_generic.cols())
    throw std::invalid_argument("utility: row dimensions do not match the parameters");
  if (latent.size() != p.beta_latent.cols())
    throw std::invalid_argument("utility: latent vector length does not match beta_latent");
  Eigen::VectorXd v = p.asc + row.alt_attributes * p.beta_attr;
  if (p.n_generic() > 0) v.noalias() += p.beta_generic * row.generic;
  if (p.n_latents() > 0) v.noalias() += p.beta_latent * latent;
  return v;
}

Eigen::VectorXd choice_probabilities(const Eigen::VectorXd& u, std::span<const std::uint8_t> availability) {
  if (availability.size() != static_cast<std::size_t>(u.size()))
    throw std::invalid_argument("choice_probabilities: availability size mismatch");
  double vmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (availability[static_cast<std::size_t>(i)]) vmax = std::max(vmax, u[i]);
  if (vmax == -std::numeric_limits<double>::infinity())
    throw std::invalid_argument("choice_probabilities: no available alternative");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(u.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!availability[static_cast<std::size_t>(i)]) continue;
    p[i] = std::exp(u[i] - vmax);
    total += p[i];
  }
  return p / total;
}

namespace detail {

double row_choice_log_prob(const ChoiceModelParams& p, const ObservationRow& row, const double* latent,
                           Eigen::VectorXd* dlogp_dv) {
  const std::size_t I = p.n_alternatives();
  const std::size_t H = p.n_latents();
  Eigen::VectorXd v = p.asc + row.alt_attributes * p.beta_attr;
  if (p.n_generic() > 0) v.noalias() += p.beta_generic * row.generic;
  for (std::size_t h = 0; h < H; ++h) v += p.beta_latent.col(ix(h)) * latent[h];

  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < I; ++i)
    if (row.availability[i]) vmax = std::max(vmax, v[ix(i)]);
  double total = 0.0;
  for (std::size_t i = 0; i < I; ++i)
    if (row.availability[i]) total += std::exp(v[ix(i)] - vmax);
  const double lse = vmax + std::log(total);
  if (dlogp_dv) {
    dlogp_dv->resize(ix(I));
    for (std::size_t i = 0; i < I; ++i)
      (*dlogp_dv)[ix(i)] = row.availability[i] ? -std::exp(v[ix(i)] - lse) : 0.0;
    (*dlogp_dv)[ix(row.choice)] += 1.0;
  }
  return v[ix(row.choice)] - lse;
}

void accumulate_choice_gradient(const ChoiceModelParams& p, const ObservationRow& row, const double* latent,
                                const Eigen::VectorXd& r, double w, Eigen::VectorXd& grad) {
  const std::size_t I = p.n_alternatives();
  const std::size_t K = p.n_attributes();
  const std::size_t M = p.n_generic();
  const std::size_t H = p.n_latents();
  for (std::size_t i = 0; i < I; ++i) {
    const double ri = w * r[ix(i)];
    if (ri == 0.0) continue;
    grad[ix(p.asc_index(i))] += ri;
    for (std::size_t k = 0; k < K; ++k) grad[ix(p.attr_index(k))] += ri * row.alt_attributes(ix(i), ix(k));
    for (std::size_t m = 0; m < M; ++m) grad[ix(p.generic_index(i, m))] += ri * row.generic[ix(m)];
    for (std::size_t h = 0; h < H; ++h) grad[ix(p.latent_index(i, h))] += ri * latent[h];
  }
}

void mark_reference(std::vector<ParamStat>& table, const ChoiceModelParams& p) {
  auto& s = table.at(p.asc_index(p.reference));
  s.reference = true;
}

}  // namespace detail

double log_likelihood(const ChoiceModelParams& p, const SurveyDataset& ds, const Eigen::MatrixXd& latents) {
  check_latents(p, ds, latents);
  std::vector<double> buf;
  double ll = 0.0;
  for (std::size_t r = 0; r < ds.size(); ++r)
    ll += detail::row_choice_log_prob(p, ds.rows[r], latent_row(latents, r, buf), nullptr);
  return ll;
}

double null_log_likelihood(const SurveyDataset& ds) {
  double ll = 0.0;
  for (const auto& row : ds.rows) ll += std::log(1.0 / static_cast<double>(row.n_available()));
  return ll;
}

Eigen::VectorXd gradient(const ChoiceModelParams& p, const SurveyDataset& ds, const Eigen::MatrixXd& latents) {
  check_latents(p, ds, latents);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(ix(p.size()));
  Eigen::VectorXd r;
  std::vector<double> buf;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const double* l = latent_row(latents, n, buf);
    detail::row_choice_log_prob(p, ds.rows[n], l, &r);
    detail::accumulate_choice_gradient(p, ds.rows[n], l, r, 1.0, grad);
  }
  for (std::size_t q = 0; q < p.size(); ++q)
    if (p.fixed[q]) grad[ix(q)] = 0.0;
  return grad;
}

namespace {

ObjectiveFn make_objective(const ChoiceModelParams& shape, const SurveyDataset& ds, const Eigen::MatrixXd& latents) {
  return [shape = ChoiceModelParams(shape), &ds, &latents](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) mutable {
    shape.set_from_vector(theta);
    if (grad) *grad = gradient(shape, ds, latents);
    return log_likelihood(shape, ds, latents);
  };
}

}  // namespace

std::vector<ParamStat> std_errors_and_ttests(const ChoiceModelParams& params, const SurveyDataset& ds,
                                             const Eigen::MatrixXd& latents) {
  const auto f = make_objective(params, ds, latents);
  auto table = wald_table(f, params.names(ds.catalog, {}), params.to_vector(), params.fixed);
  detail::mark_reference(table, params);
  return table;
}

MnlEstimate estimate(const SurveyDataset& ds, const ChoiceModelParams& init, const OptimizerConfig& config,
                     const Eigen::MatrixXd& latents, bool compute_std_errors) {
  init.check(ds.catalog);
  check_latents(init, ds, latents);
  MnlEstimate out;
  if (config.method == OptimMethod::sgd) {
    ChoiceModelParams shape = init;
    BatchObjectiveFn batch = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad,
                                 std::span<const std::size_t> rows) {
      shape.set_from_vector(theta);
      std::vector<double> buf;
      Eigen::VectorXd r;
      double ll = 0.0;
      for (auto n : rows) {
        const double* l = latent_row(latents, n, buf);
        ll += detail::row_choice_log_prob(shape, ds.rows[n], l, grad ? &r : nullptr);
        if (grad) detail::accumulate_choice_gradient(shape, ds.rows[n], l, r, 1.0, *grad);
      }
      return ll;
    };
    out.optim = maximize_sgd(batch, ds.size(), init.to_vector(), init.fixed, config);
  } else {
    out.optim = maximize(make_objective(init, ds, latents), init.to_vector(), init.fixed, config);
  }
  out.params = init;
  out.params.set_from_vector(out.optim.theta);
  out.stats = FitStatistics::compute(null_log_likelihood(ds), out.optim.value, init.n_free(), ds.size());
  if (compute_std_errors) {
    out.table = std_errors_and_ttests(out.params, ds, latents);
  } else {
    const auto names = out.params.names(ds.catalog, {});
    for (std::size_t q = 0; q < names.size(); ++q)
      out.table.push_back(ParamStat{names[q], out.optim.theta[ix(q)], std::nullopt, std::nullopt, init.fixed[q]});
    detail::mark_reference(out.table, out.params);
  }
  return out;
}

}  // namespace rbmchoice
