#pragma once

// Reference computations for the test suites. Everything here is written from
// the model definitions with plain loops, independently of the library code
// paths it is compared against.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/data_model.hpp"
#include "rbmchoice/mnl.hpp"
#include "rbmchoice/rng.hpp"

namespace oracle {

using namespace rbmchoice;

inline Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Every binary vector of length J, in counting order.
inline std::vector<std::vector<std::uint8_t>> hidden_states(std::size_t J) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << J); ++code) {
    std::vector<std::uint8_t> s(J);
    for (std::size_t j = 0; j < J; ++j) s[j] = static_cast<std::uint8_t>((code >> j) & 1U);
    out.push_back(std::move(s));
  }
  return out;
}

/// Energy written term by term from the definition (all terms enter negatively).
inline double energy(std::size_t y, const std::vector<std::uint8_t>& h, const ObservationRow& row,
                     const CRBMParams& p) {
  double e = -p.c_alt[ix(y)];
  for (std::size_t k = 0; k < p.n_attributes(); ++k) e -= p.B(ix(y), ix(k)) * row.alt_attributes(ix(y), ix(k));
  for (std::size_t j = 0; j < p.n_latents(); ++j) {
    e -= p.c_lat[ix(j)] * h[j];
    e -= p.D(ix(y), ix(j)) * h[j];
    for (std::size_t m = 0; m < p.n_generic(); ++m) {
      const double factor = p.g_term == GTermMode::bilinear ? h[j] : 1.0;
      e -= p.G(ix(j), ix(m)) * row.generic[ix(m)] * factor;
    }
  }
  return e;
}

/// -ln sum_h exp(-E(y, h)) by enumeration.
inline double free_energy(std::size_t y, const ObservationRow& row, const CRBMParams& p) {
  std::vector<double> terms;
  for (const auto& h : hidden_states(p.n_latents())) terms.push_back(-energy(y, h, row, p));
  return -log_sum_exp(terms);
}

/// Joint p(y, h | x) over available y, indexed [y][state code].
inline std::vector<std::vector<double>> joint(const ObservationRow& row, const CRBMParams& p) {
  const auto states = hidden_states(p.n_latents());
  std::vector<double> all;
  for (std::size_t y = 0; y < p.n_alternatives(); ++y)
    if (row.availability[y])
      for (const auto& h : states) all.push_back(-energy(y, h, row, p));
  const double log_z = log_sum_exp(all);
  std::vector<std::vector<double>> out(p.n_alternatives(), std::vector<double>(states.size(), 0.0));
  for (std::size_t y = 0; y < p.n_alternatives(); ++y)
    if (row.availability[y])
      for (std::size_t s = 0; s < states.size(); ++s) out[y][s] = std::exp(-energy(y, states[s], row, p) - log_z);
  return out;
}

inline double crbm_log_likelihood(const SurveyDataset& ds, const CRBMParams& p) {
  double ll = 0.0;
  for (const auto& row : ds.rows) {
    const auto j = joint(row, p);
    double py = 0.0;
    for (double v : j[row.choice]) py += v;
    ll += std::log(py);
  }
  return ll;
}

/// Utilities by hand: asc + attributes + generic + latent terms.
inline double mnl_log_likelihood(const ChoiceModelParams& p, const SurveyDataset& ds,
                                 const Eigen::MatrixXd& latents = {}) {
  double ll = 0.0;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto& row = ds.rows[n];
    std::vector<double> v(p.n_alternatives());
    for (std::size_t i = 0; i < p.n_alternatives(); ++i) {
      double u = p.asc[ix(i)];
      for (std::size_t k = 0; k < p.n_attributes(); ++k) u += p.beta_attr[ix(k)] * row.alt_attributes(ix(i), ix(k));
      for (std::size_t m = 0; m < p.n_generic(); ++m) u += p.beta_generic(ix(i), ix(m)) * row.generic[ix(m)];
      for (std::size_t h = 0; h < p.n_latents(); ++h) u += p.beta_latent(ix(i), ix(h)) * latents(ix(n), ix(h));
      v[i] = u;
    }
    std::vector<double> avail;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (row.availability[i]) avail.push_back(v[i]);
    ll += v[row.choice] - log_sum_exp(avail);
  }
  return ll;
}

/// Central differences of a scalar function, one coordinate at a time.
inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double step = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += step;
    b[i] -= step;
    g[i] = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, |b_i|).
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline VariableCatalog catalog(std::size_t I, std::size_t K, std::size_t M, std::size_t n_indicators = 0) {
  VariableCatalog c;
  for (std::size_t i = 0; i < I; ++i) c.alternatives.push_back("alt" + std::to_string(i));
  c.reference = I - 1;
  for (std::size_t k = 0; k < K; ++k) c.alt_specific_vars.push_back("x" + std::to_string(k));
  for (std::size_t m = 0; m < M; ++m) c.generic_vars.push_back("g" + std::to_string(m));
  for (std::size_t q = 0; q < n_indicators; ++q) c.indicator_vars.push_back({"ind" + std::to_string(q), ""});
  return c;
}

/// Random row: attributes U(0, 2), fair-coin generics, at least two available.
inline ObservationRow random_row(const VariableCatalog& c, Rng& rng, bool with_indicators = false) {
  const std::size_t I = c.n_alternatives();
  ObservationRow r;
  r.alt_attributes.resize(ix(I), ix(c.n_attributes()));
  for (Eigen::Index i = 0; i < r.alt_attributes.size(); ++i) r.alt_attributes.data()[i] = uniform(rng, 0.0, 2.0);
  r.generic.resize(ix(c.n_generic()));
  for (Eigen::Index m = 0; m < r.generic.size(); ++m) r.generic[m] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
  r.availability.assign(I, 1);
  for (std::size_t i = 0; i < I; ++i) r.availability[i] = bernoulli(rng, 0.8) ? 1 : 0;
  while (r.n_available() < 2) r.availability[rng() % I] = 1;
  do r.choice = rng() % I;
  while (!r.availability[r.choice]);
  if (with_indicators) {
    Eigen::VectorXd ind(ix(c.n_indicators()));
    for (Eigen::Index q = 0; q < ind.size(); ++q) ind[q] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
    r.indicators = ind;
  }
  return r;
}

inline SurveyDataset random_dataset(const VariableCatalog& c, std::size_t n, Rng& rng, bool with_indicators = false) {
  SurveyDataset ds;
  ds.catalog = c;
  ds.scale_factors.assign(c.n_attributes(), 1.0);
  for (std::size_t r = 0; r < n; ++r) ds.rows.push_back(random_row(c, rng, with_indicators));
  return ds;
}

inline CRBMParams random_crbm(std::size_t I, std::size_t J, std::size_t K, std::size_t M, Rng& rng,
                              double scale = 1.0) {
  CRBMParams p = CRBMParams::zeros(I, J, K, M, I - 1);
  Eigen::VectorXd t = p.to_vector();
  for (Eigen::Index q = 0; q < t.size(); ++q)
    if (!p.fixed[static_cast<std::size_t>(q)]) t[q] = uniform(rng, -scale, scale);
  p.set_from_vector(t);
  return p;
}

}  // namespace oracle
