#include "rbmchoice/crbm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "text_util.hpp"

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_row(const ObservationRow& row, const CRBMParams& p) {
  if (row.alt_attributes.rows() != ix(p.n_alternatives()) || row.alt_attributes.cols() != ix(p.n_attributes()) ||
      row.generic.size() != ix(p.n_generic()) || row.availability.size() != p.n_alternatives())
    throw std::invalid_argument("row dimensions do not match the C-RBM parameters");
}

/// c_alt_i + B_i . a_i
double visible_term(std::size_t i, const ObservationRow& row, const CRBMParams& p) {
  return p.c_alt[ix(i)] + p.B.row(ix(i)).dot(row.alt_attributes.row(ix(i)));
}

/// Input to latent j's sigmoid, excluding the choice coupling D_yj.
Eigen::VectorXd latent_base(const ObservationRow& row, const CRBMParams& p) {
  Eigen::VectorXd base = p.c_lat;
  if (p.g_term == GTermMode::bilinear && p.n_generic() > 0) base.noalias() += p.G * row.generic;
  return base;
}

double constant_g_offset(const ObservationRow& row, const CRBMParams& p) {
  if (p.g_term != GTermMode::constant || p.n_generic() == 0) return 0.0;
  return (p.G * row.generic).sum();
}

/// Adds weight * (sufficient statistics of (y, h)) to grad, h being latent
/// activation probabilities or binary states.
void add_stats(Eigen::VectorXd& grad, double w, std::size_t y, const Eigen::VectorXd& h, const ObservationRow& row,
               const CRBMParams& p) {
  const std::size_t J = p.n_latents();
  grad[ix(p.c_alt_index(y))] += w;
  for (std::size_t j = 0; j < J; ++j) {
    grad[ix(p.c_lat_index(j))] += w * h[ix(j)];
    grad[ix(p.d_index(y, j))] += w * h[ix(j)];
  }
  for (std::size_t k = 0; k < p.n_attributes(); ++k) grad[ix(p.b_index(y, k))] += w * row.alt_attributes(ix(y), ix(k));
  if (p.g_term == GTermMode::bilinear)
    for (std::size_t j = 0; j < J; ++j) {
      const double wh = w * h[ix(j)];
      if (wh == 0.0) continue;
      for (std::size_t m = 0; m < p.n_generic(); ++m) grad[ix(p.g_index(j, m))] += wh * row.generic[ix(m)];
    }
}

void zero_fixed(Eigen::VectorXd& grad, const CRBMParams& p) {
  for (std::size_t q = 0; q < p.fixed.size(); ++q)
    if (p.fixed[q]) grad[ix(q)] = 0.0;
}

Eigen::VectorXd hidden_probs(std::size_t y, const Eigen::VectorXd& base, const CRBMParams& p) {
  Eigen::VectorXd h(base.size());
  for (Eigen::Index j = 0; j < base.size(); ++j) h[j] = sigmoid(base[j] + p.D(ix(y), j));
  return h;
}

Eigen::VectorXd softmax_available(const Eigen::VectorXd& v, const std::vector<std::uint8_t>& av) {
  double vmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (av[static_cast<std::size_t>(i)]) vmax = std::max(vmax, v[i]);
  if (vmax == -std::numeric_limits<double>::infinity()) throw std::invalid_argument("no available alternative");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (av[static_cast<std::size_t>(i)]) total += (out[i] = std::exp(v[i] - vmax));
  return out / total;
}

/// -F(y) for every alternative (unavailable ones included; callers mask).
Eigen::VectorXd neg_free_energies(const ObservationRow& row, const CRBMParams& p, const Eigen::VectorXd& base) {
  const std::size_t I = p.n_alternatives();
  const double offset = constant_g_offset(row, p);
  Eigen::VectorXd out(ix(I));
  for (std::size_t i = 0; i < I; ++i) {
    double s = visible_term(i, row, p) + offset;
    for (Eigen::Index j = 0; j < base.size(); ++j) s += softplus(base[j] + p.D(ix(i), j));
    out[ix(i)] = s;
  }
  return out;
}

/// Runs CD-k on each row of `batch` and hands its gradient contribution to `sink`.
template <class Sink>
void cd_rows(const SurveyDataset& ds, std::span<const std::size_t> batch, const CRBMParams& p, std::size_t k, Rng& rng,
             Sink&& sink) {
  const std::uint64_t base_seed = rng();
  const std::size_t P = p.size();
  Eigen::VectorXd g(ix(P));
  for (std::size_t pos = 0; pos < batch.size(); ++pos) {
    const std::size_t n = batch[pos];
    const auto& row = ds.rows.at(n);
    Rng row_rng(derive_seed(base_seed, n));
    const Eigen::VectorXd base = latent_base(row, p);
    const Eigen::VectorXd h_pos = hidden_probs(row.choice, base, p);
    const GibbsState end = gibbs_chain(row, p, row.choice, k, row_rng);
    const Eigen::VectorXd h_neg = hidden_probs(end.y, base, p);
    g.setZero();
    add_stats(g, 1.0, row.choice, h_pos, row, p);
    add_stats(g, -1.0, end.y, h_neg, row, p);
    zero_fixed(g, p);
    sink(pos, g, end.y != row.choice);
  }
}

}  // namespace

GTermMode parse_g_term(const std::string& name) {
  if (name == "bilinear") return GTermMode::bilinear;
  if (name == "constant") return GTermMode::constant;
  throw std::invalid_argument("unknown g_term mode '" + name + "'");
}

std::string to_string(GTermMode mode) { return mode == GTermMode::bilinear ? "bilinear" : "constant"; }

CRBMParams CRBMParams::zeros(std::size_t I, std::size_t J, std::size_t K, std::size_t M, std::size_t reference) {
  if (I < 2) throw std::invalid_argument("C-RBM needs at least 2 alternatives");
  if (reference >= I) throw std::invalid_argument("reference alternative out of range");
  CRBMParams p;
  p.c_alt = Eigen::VectorXd::Zero(ix(I));
  p.c_lat = Eigen::VectorXd::Zero(ix(J));
  p.D = Eigen::MatrixXd::Zero(ix(I), ix(J));
  p.B = Eigen::MatrixXd::Zero(ix(I), ix(K));
  p.G = Eigen::MatrixXd::Zero(ix(J), ix(M));
  p.reference = reference;
  p.fixed.assign(p.size(), false);
  p.fixed[p.c_alt_index(reference)] = true;
  for (std::size_t j = 0; j < J; ++j) p.fixed[p.d_index(reference, j)] = true;
  return p;
}

CRBMParams CRBMParams::initialize(std::size_t I, std::size_t J, std::size_t K, std::size_t M, std::size_t reference,
                                  std::uint64_t seed, double init_std) {
  CRBMParams p = zeros(I, J, K, M, reference);
  Rng rng(derive_seed(seed, 0x1417ULL));
  Eigen::VectorXd theta = p.to_vector();
  const std::size_t first_weight = p.d_index(0, 0);
  for (std::size_t q = first_weight; q < p.size(); ++q)
    if (!p.fixed[q]) theta[ix(q)] = init_std * standard_normal(rng);
  p.set_from_vector(theta);
  return p;
}

std::size_t CRBMParams::size() const {
  const std::size_t I = n_alternatives(), J = n_latents();
  return I + J + I * J + I * n_attributes() + J * n_generic();
}

Eigen::VectorXd CRBMParams::to_vector() const {
  Eigen::VectorXd t(ix(size()));
  const std::size_t I = n_alternatives(), J = n_latents(), K = n_attributes(), M = n_generic();
  for (std::size_t i = 0; i < I; ++i) t[ix(c_alt_index(i))] = c_alt[ix(i)];
  for (std::size_t j = 0; j < J; ++j) t[ix(c_lat_index(j))] = c_lat[ix(j)];
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) t[ix(d_index(i, j))] = D(ix(i), ix(j));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k) t[ix(b_index(i, k))] = B(ix(i), ix(k));
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t m = 0; m < M; ++m) t[ix(g_index(j, m))] = G(ix(j), ix(m));
  return t;
}

void CRBMParams::set_from_vector(const Eigen::VectorXd& t) {
  if (t.size() != ix(size())) throw std::invalid_argument("C-RBM parameter vector has wrong length");
  const std::size_t I = n_alternatives(), J = n_latents(), K = n_attributes(), M = n_generic();
  for (std::size_t i = 0; i < I; ++i) c_alt[ix(i)] = t[ix(c_alt_index(i))];
  for (std::size_t j = 0; j < J; ++j) c_lat[ix(j)] = t[ix(c_lat_index(j))];
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) D(ix(i), ix(j)) = t[ix(d_index(i, j))];
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k) B(ix(i), ix(k)) = t[ix(b_index(i, k))];
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t m = 0; m < M; ++m) G(ix(j), ix(m)) = t[ix(g_index(j, m))];
}

std::vector<std::string> CRBMParams::names(const VariableCatalog& cat) const {
  std::vector<std::string> out(size());
  const std::size_t I = n_alternatives(), J = n_latents(), K = n_attributes(), M = n_generic();
  auto h = [](std::size_t j) { return "h" + std::to_string(j + 1); };
  for (std::size_t i = 0; i < I; ++i) out[c_alt_index(i)] = "c_" + cat.alternatives.at(i);
  for (std::size_t j = 0; j < J; ++j) out[c_lat_index(j)] = "c_" + h(j);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) out[d_index(i, j)] = "D_" + cat.alternatives[i] + "_" + h(j);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k)
      out[b_index(i, k)] = "B_" + cat.alt_specific_vars.at(k) + "_" + cat.alternatives[i];
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t m = 0; m < M; ++m) out[g_index(j, m)] = "G_" + h(j) + "_" + cat.generic_vars.at(m);
  return out;
}

void CRBMParams::fix_g_row(std::size_t j) {
  if (j >= n_latents()) throw std::out_of_range("G row out of range");
  for (std::size_t m = 0; m < n_generic(); ++m) {
    G(ix(j), ix(m)) = 0.0;
    fixed[g_index(j, m)] = true;
  }
}

void CRBMParams::check() const {
  const auto I = c_alt.size(), J = c_lat.size();
  if (D.rows() != I || D.cols() != J || B.rows() != I || G.rows() != J)
    throw std::invalid_argument("C-RBM parameter blocks have inconsistent dimensions");
  if (fixed.size() != size()) throw std::invalid_argument("C-RBM fixed mask has wrong length");
  if (reference >= n_alternatives()) throw std::invalid_argument("C-RBM reference out of range");
  if (!fixed[c_alt_index(reference)] || c_alt[ix(reference)] != 0.0)
    throw std::invalid_argument("reference alternative's bias must be fixed at 0");
}

void CRBMParams::check(const VariableCatalog& cat) const {
  check();
  if (n_alternatives() != cat.n_alternatives() || n_attributes() != cat.n_attributes() ||
      n_generic() != cat.n_generic())
    throw std::invalid_argument("C-RBM parameters do not match the catalog dimensions");
}

Eigen::VectorXd GibbsState::one_hot(std::size_t n_alternatives) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(ix(n_alternatives));
  v[ix(y)] = 1.0;
  return v;
}

double energy(std::size_t y, std::span<const std::uint8_t> xstar, const ObservationRow& row, const CRBMParams& p) {
  check_row(row, p);
  if (xstar.size() != p.n_latents() || y >= p.n_alternatives())
    throw std::invalid_argument("energy: state dimensions do not match the parameters");
  const Eigen::VectorXd base = latent_base(row, p);
  double e = -visible_term(y, row, p) - constant_g_offset(row, p);
  for (std::size_t j = 0; j < xstar.size(); ++j)
    if (xstar[j]) e -= base[ix(j)] + p.D(ix(y), ix(j));
  return e;
}

double free_energy(std::size_t y, const ObservationRow& row, const CRBMParams& p) {
  check_row(row, p);
  if (y >= p.n_alternatives()) throw std::invalid_argument("free_energy: choice index out of range");
  const Eigen::VectorXd base = latent_base(row, p);
  double f = -visible_term(y, row, p) - constant_g_offset(row, p);
  for (Eigen::Index j = 0; j < base.size(); ++j) f -= softplus(base[j] + p.D(ix(y), j));
  return f;
}

Eigen::VectorXd p_latent_given_visible(std::size_t y, const ObservationRow& row, const CRBMParams& p) {
  check_row(row, p);
  if (y >= p.n_alternatives()) throw std::invalid_argument("p_latent_given_visible: choice index out of range");
  return hidden_probs(y, latent_base(row, p), p);
}

Eigen::VectorXd p_choice_given_latent(std::span<const std::uint8_t> xstar, const ObservationRow& row,
                                      const CRBMParams& p) {
  check_row(row, p);
  if (xstar.size() != p.n_latents()) throw std::invalid_argument("p_choice_given_latent: latent length mismatch");
  const std::size_t I = p.n_alternatives();
  Eigen::VectorXd v(ix(I));
  for (std::size_t i = 0; i < I; ++i) {
    double s = visible_term(i, row, p);
    for (std::size_t j = 0; j < xstar.size(); ++j)
      if (xstar[j]) s += p.D(ix(i), ix(j));
    v[ix(i)] = s;
  }
  return softmax_available(v, row.availability);
}

Eigen::VectorXd p_choice_marginal(const ObservationRow& row, const CRBMParams& p) {
  check_row(row, p);
  return softmax_available(neg_free_energies(row, p, latent_base(row, p)), row.availability);
}

GibbsState gibbs_chain(const ObservationRow& row, const CRBMParams& p, std::size_t start_y, std::size_t k, Rng& rng,
                       const std::function<void(const GibbsState&)>& observer) {
  check_row(row, p);
  if (k < 1) throw std::invalid_argument("gibbs_chain: k must be at least 1");
  if (start_y >= p.n_alternatives()) throw std::invalid_argument("gibbs_chain: start choice out of range");
  const std::size_t I = p.n_alternatives();
  const std::size_t J = p.n_latents();
  const Eigen::VectorXd base = latent_base(row, p);
  Eigen::VectorXd vis(ix(I));
  for (std::size_t i = 0; i < I; ++i) vis[ix(i)] = visible_term(i, row, p);

  GibbsState s;
  s.y = start_y;
  s.xstar.assign(J, 0);
  Eigen::VectorXd v(ix(I));
  for (std::size_t t = 1; t <= k; ++t) {
    for (std::size_t j = 0; j < J; ++j) s.xstar[j] = bernoulli(rng, sigmoid(base[ix(j)] + p.D(ix(s.y), ix(j)))) ? 1 : 0;
    v = vis;
    for (std::size_t j = 0; j < J; ++j)
      if (s.xstar[j]) v += p.D.col(ix(j));
    s.y = static_cast<std::size_t>(sample_categorical(softmax_available(v, row.availability), rng));
    s.step = t;
    if (observer) observer(s);
  }
  return s;
}

CDGradient cd_gradient(const SurveyDataset& ds, std::span<const std::size_t> batch, const CRBMParams& p, std::size_t k,
                       Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("cd_gradient: empty batch");
  CDGradient out{Eigen::VectorXd::Zero(ix(p.size())), 0.0};
  std::size_t mismatched = 0;
  cd_rows(ds, batch, p, k, rng, [&](std::size_t, const Eigen::VectorXd& g, bool mismatch) {
    out.gradient += g;
    mismatched += mismatch ? 1 : 0;
  });
  const double n = static_cast<double>(batch.size());
  out.gradient /= n;
  out.reconstruction_error = static_cast<double>(mismatched) / n;
  return out;
}

Eigen::MatrixXd cd_gradient_rows(const SurveyDataset& ds, std::span<const std::size_t> batch, const CRBMParams& p,
                                 std::size_t k, Rng& rng) {
  Eigen::MatrixXd out(ix(batch.size()), ix(p.size()));
  cd_rows(ds, batch, p, k, rng,
          [&](std::size_t pos, const Eigen::VectorXd& g, bool) { out.row(ix(pos)) = g.transpose(); });
  return out;
}

double exact_log_likelihood(const SurveyDataset& ds, const CRBMParams& p, std::size_t max_latents) {
  if (p.n_latents() > max_latents)
    throw std::invalid_argument("exact_log_likelihood: " + std::to_string(p.n_latents()) +
                                " latents exceed the enumeration guard of " + std::to_string(max_latents));
  double ll = 0.0;
  for (const auto& row : ds.rows) {
    check_row(row, p);
    const Eigen::VectorXd nf = neg_free_energies(row, p, latent_base(row, p));
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.n_alternatives(); ++i)
      if (row.availability[i]) vmax = std::max(vmax, nf[ix(i)]);
    double total = 0.0;
    for (std::size_t i = 0; i < p.n_alternatives(); ++i)
      if (row.availability[i]) total += std::exp(nf[ix(i)] - vmax);
    ll += nf[ix(row.choice)] - vmax - std::log(total);
  }
  return ll;
}

Eigen::VectorXd exact_gradient(const SurveyDataset& ds, const CRBMParams& p) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(ix(p.size()));
  const std::size_t I = p.n_alternatives();
  for (const auto& row : ds.rows) {
    check_row(row, p);
    const Eigen::VectorXd base = latent_base(row, p);
    const Eigen::VectorXd prob = softmax_available(neg_free_energies(row, p, base), row.availability);
    add_stats(grad, 1.0, row.choice, hidden_probs(row.choice, base, p), row, p);
    for (std::size_t i = 0; i < I; ++i)
      if (prob[ix(i)] > 0.0) add_stats(grad, -prob[ix(i)], i, hidden_probs(i, base, p), row, p);
  }
  zero_fixed(grad, p);
  return grad;
}

CRBMTrainResult train(const SurveyDataset& ds, const CRBMParams& init, const CRBMTrainConfig& cfg) {
  init.check(ds.catalog);
  if (cfg.batch_size == 0 || cfg.cd_steps == 0 || cfg.epochs == 0 || cfg.learning_rate < 0.0)
    throw std::invalid_argument("train: batch size, CD steps and epochs must be positive");
  if (ds.empty()) throw std::invalid_argument("train: empty dataset");

  CRBMTrainResult res;
  res.params = init;
  Rng rng(derive_seed(cfg.seed, 0x7a1aULL));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd theta = init.to_vector();
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate / (1.0 + cfg.lr_decay * static_cast<double>(epoch - 1));
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::VectorXd epoch_grad = Eigen::VectorXd::Zero(theta.size());
    double mismatched = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto cd = cd_gradient(ds, std::span<const std::size_t>(order.data() + start, len), res.params,
                                  cfg.cd_steps, rng);
      const double w = static_cast<double>(len);
      epoch_grad += w * cd.gradient;
      mismatched += w * cd.reconstruction_error;
      theta += lr * cd.gradient;
      res.params.set_from_vector(theta);
      if (theta.cwiseAbs().maxCoeff() > cfg.divergence_bound) {
        res.diverged = true;
        res.message = "parameter magnitude exceeded " + detail::format_double(cfg.divergence_bound) + " in epoch " +
                      std::to_string(epoch);
        break;
      }
    }
    TraceRow tr;
    tr.epoch = epoch;
    const double n = static_cast<double>(ds.size());
    tr.reconstruction_error = mismatched / n;
    tr.gradient_norm = (epoch_grad / n).norm();
    if (!res.diverged && res.params.n_latents() <= cfg.trace_exact_max_latents)
      tr.exact_ll = exact_log_likelihood(ds, res.params);
    if (cfg.measure_wall_time)
      tr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.trace.push_back(tr);
    if (res.diverged) return res;
  }
  res.message = "completed " + std::to_string(cfg.epochs) + " epochs";
  return res;
}

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training trace '" + path.string() + "'");
  write_trace(trace, out);
}

void write_trace(const std::vector<TraceRow>& trace, std::ostream& out) {
  out << "epoch,reconstruction_error,exact_ll,gradient_norm,wall_seconds\n";
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string("NA"); };
  for (const auto& r : trace)
    out << r.epoch << ',' << detail::format_double(r.reconstruction_error) << ',' << opt(r.exact_ll) << ','
        << detail::format_double(r.gradient_norm) << ',' << opt(r.wall_seconds) << '\n';
}

CRBMExactFit fit_exact(const SurveyDataset& ds, const CRBMParams& init, const OptimizerConfig& config) {
  init.check(ds.catalog);
  CRBMParams shape = init;
  ObjectiveFn f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    shape.set_from_vector(theta);
    if (grad) *grad = exact_gradient(ds, shape);
    return exact_log_likelihood(ds, shape);
  };
  CRBMExactFit out;
  out.optim = maximize(f, init.to_vector(), init.fixed, config);
  out.params = init;
  out.params.set_from_vector(out.optim.theta);
  return out;
}

std::vector<std::size_t> LatentReport::kept() const {
  std::vector<std::size_t> out;
  for (const auto& l : latents)
    if (l.keep) out.push_back(l.index);
  return out;
}

LatentReport extract_significant_latents(const CRBMParams& params, const SurveyDataset& ds, double t_threshold,
                                         const ExtractOptions& options) {
  params.check(ds.catalog);
  LatentReport report;
  report.t_threshold = t_threshold;
  const auto names = params.names(ds.catalog);
  const auto free = free_indices(params.fixed);
  const Eigen::VectorXd theta = params.to_vector();

  Eigen::MatrixXd hessian;
  if (params.n_latents() <= options.max_exact_latents) {
    CRBMParams shape = params;
    ObjectiveFn f = [&](const Eigen::VectorXd& t, Eigen::VectorXd* grad) {
      shape.set_from_vector(t);
      if (grad) *grad = exact_gradient(ds, shape);
      return exact_log_likelihood(ds, shape);
    };
    hessian = numerical_hessian(f, theta, free);
  } else {
    // Outer product of per-row CD score estimates.
    report.used_exact_hessian = false;
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(derive_seed(options.seed, 0xf15eULL));
    const Eigen::MatrixXd rows = cd_gradient_rows(ds, all, params, options.fisher_cd_steps, rng);
    Eigen::MatrixXd scores(rows.rows(), ix(free.size()));
    for (std::size_t q = 0; q < free.size(); ++q) scores.col(ix(q)) = rows.col(ix(free[q]));
    hessian = -(scores.transpose() * scores);
  }
  report.table = inferential_table(names, theta, params.fixed, hessian);
  report.table.at(params.c_alt_index(params.reference)).reference = true;

  const std::size_t I = params.n_alternatives();
  const std::size_t J = params.n_latents();
  const std::size_t M = params.n_generic();
  for (std::size_t j = 0; j < J; ++j) {
    LatentSummary s;
    s.index = j;
    s.choice_weights = params.D.col(ix(j));
    s.loadings = params.G.row(ix(j)).transpose();
    s.bias = params.c_lat[ix(j)];
    for (std::size_t i = 0; i < I; ++i) {
      const auto& st = report.table[params.d_index(i, j)];
      s.d_stats.push_back(st);
      s.flagged = s.flagged || st.flagged;
      if (!st.fixed && st.t) s.max_abs_t = std::max(s.max_abs_t, std::abs(*st.t));
    }
    for (std::size_t m = 0; m < M; ++m) {
      const auto& st = report.table[params.g_index(j, m)];
      s.g_stats.push_back(st);
      s.flagged = s.flagged || st.flagged;
    }
    s.keep = s.max_abs_t > t_threshold;
    report.latents.push_back(std::move(s));
  }

  auto weights = [&](std::size_t j) {
    Eigen::VectorXd w(ix(I + M));
    w << params.D.col(ix(j)), params.G.row(ix(j)).transpose();
    return w;
  };
  for (std::size_t j = 1; j < J; ++j) {
    const Eigen::VectorXd wj = weights(j);
    if (wj.norm() == 0.0) continue;
    for (std::size_t q = 0; q < j; ++q) {
      if (report.latents[q].duplicate_of) continue;
      const Eigen::VectorXd wq = weights(q);
      if (wq.norm() == 0.0) continue;
      if (wj.dot(wq) / (wj.norm() * wq.norm()) > options.duplicate_cosine) {
        report.latents[j].duplicate_of = q;
        report.latents[j].keep = false;
        break;
      }
    }
  }
  return report;
}

}  // namespace rbmchoice
