#include "rbmchoice/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "rbmchoice/latent_fn.hpp"
#include "rbmchoice/pipeline.hpp"
#include "rbmchoice/rng.hpp"

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double signed_magnitude(Rng& rng, double lo, double hi) {
  const double m = uniform(rng, lo, hi);
  return uniform01(rng) < 0.5 ? -m : m;
}

ObservationRow draw_covariates(const GroundTruth& t, Rng& rng) {
  const auto& cat = t.catalog;
  const auto& cov = t.covariates;
  const std::size_t I = cat.n_alternatives(), K = cat.n_attributes(), M = cat.n_generic();
  ObservationRow row;
  row.generic.resize(ix(M));
  const double shared = uniform01(rng);
  for (std::size_t m = 0; m < M; ++m) {
    const double c = uniform01(rng);
    const double own = uniform01(rng);
    const double u = c < cov.generic_correlation ? shared : own;
    row.generic[ix(m)] = u < cov.generic_prob[ix(m)] ? 1.0 : 0.0;
  }
  row.alt_attributes.resize(ix(I), ix(K));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k)
      row.alt_attributes(ix(i), ix(k)) = uniform(rng, cov.attr_low(ix(i), ix(k)), cov.attr_high(ix(i), ix(k)));
  row.availability.resize(I);
  for (std::size_t i = 0; i < I; ++i) row.availability[i] = uniform01(rng) < cov.availability_prob[ix(i)] ? 1 : 0;
  if (row.n_available() < 2) std::fill(row.availability.begin(), row.availability.end(), std::uint8_t{1});
  return row;
}

Eigen::VectorXd coin_indicators(std::size_t n, Rng& rng) {
  Eigen::VectorXd v(ix(n));
  for (std::size_t q = 0; q < n; ++q) v[ix(q)] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
  return v;
}

struct Estimated {
  Eigen::VectorXd theta;
  std::vector<std::optional<double>> std_err;
  double final_ll = 0.0;
  bool converged = true;
  std::optional<double> baseline_ll;
};

std::vector<std::optional<double>> std_errs_of(const std::vector<ParamStat>& table) {
  std::vector<std::optional<double>> out;
  for (const auto& s : table) out.push_back(s.std_err);
  return out;
}

template <class P>
P zeroed_like(const P& p) {
  P z = p;
  z.set_from_vector(Eigen::VectorXd::Zero(p.to_vector().size()));
  return z;
}

Estimated run_estimator(const GroundTruth& truth, Estimator est, const SurveyDataset& ds, std::uint64_t seed,
                        const RecoveryConfig& cfg) {
  Estimated out;
  OptimizerConfig ocfg = cfg.optimizer;
  ocfg.seed = seed;
  switch (est) {
    case Estimator::mnl: {
      const auto init = cfg.init_at_truth ? truth.mnl : zeroed_like(truth.mnl);
      const auto e = estimate(ds, init, ocfg);
      out = {e.params.to_vector(), std_errs_of(e.table), e.stats.final_ll, e.optim.converged, std::nullopt};
      break;
    }
    case Estimator::iclv: {
      const auto init = cfg.init_at_truth ? truth.iclv : zeroed_like(truth.iclv);
      SimulationConfig sim = cfg.simulation;
      sim.seed = derive_seed(seed, 0x51ULL);
      const auto e = estimate_iclv(ds, init, ocfg, sim);
      out = {e.params.to_vector(), std_errs_of(e.table), e.stats.final_ll, e.optim.converged, std::nullopt};
      break;
    }
    case Estimator::crbm: {
      const auto& p = truth.crbm;
      CRBMParams init = cfg.init_at_truth ? p
                                          : CRBMParams::initialize(p.n_alternatives(), p.n_latents(), p.n_attributes(),
                                                                   p.n_generic(), p.reference, seed);
      init.fixed = p.fixed;
      init.g_term = p.g_term;
      CRBMTrainConfig tcfg = cfg.crbm;
      tcfg.seed = seed;
      const auto trained = train(ds, init, tcfg);
      if (trained.diverged) throw std::runtime_error(trained.message);
      ExtractOptions xo;
      xo.seed = seed;
      const auto rep = extract_significant_latents(trained.params, ds, cfg.t_threshold, xo);
      double ll = 0.0;
      if (p.n_latents() <= kMaxExactLatents) ll = exact_log_likelihood(ds, trained.params);
      out = {trained.params.to_vector(), std_errs_of(rep.table), ll, true, std::nullopt};
      break;
    }
    case Estimator::two_stage: {
      TwoStageConfig tcfg;
      tcfg.structure = structure_of(truth.iclv, truth.catalog);
      tcfg.crbm = cfg.crbm;
      tcfg.crbm.seed = seed;
      tcfg.extract.seed = seed;
      tcfg.t_threshold = cfg.t_threshold;
      tcfg.optimizer = ocfg;
      tcfg.simulation = cfg.simulation;
      tcfg.simulation.seed = derive_seed(seed, 0x51ULL);
      const auto r = run_two_stage(ds, tcfg);
      out = {r.two_stage.params.to_vector(), std_errs_of(r.two_stage.table), r.two_stage.stats.final_ll,
             r.two_stage.optim.converged, r.cold_start ? std::optional(r.cold_start->stats.final_ll) : std::nullopt};
      break;
    }
  }
  return out;
}

}  // namespace

ModelFamily parse_model_family(const std::string& name) {
  if (name == "mnl") return ModelFamily::mnl;
  if (name == "iclv") return ModelFamily::iclv;
  if (name == "crbm") return ModelFamily::crbm;
  throw std::invalid_argument("unknown model family '" + name + "'");
}

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::mnl: return "mnl";
    case ModelFamily::iclv: return "iclv";
    case ModelFamily::crbm: return "crbm";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "mnl") return Estimator::mnl;
  if (name == "iclv") return Estimator::iclv;
  if (name == "crbm") return Estimator::crbm;
  if (name == "two-stage" || name == "two_stage") return Estimator::two_stage;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::mnl: return "mnl";
    case Estimator::iclv: return "iclv";
    case Estimator::crbm: return "crbm";
    case Estimator::two_stage: return "two-stage";
  }
  return "?";
}

void CovariateSpec::check(const VariableCatalog& cat) const {
  const auto I = ix(cat.n_alternatives()), K = ix(cat.n_attributes()), M = ix(cat.n_generic());
  if (generic_prob.size() != M) throw std::invalid_argument("covariates: one generic probability per generic variable");
  if (attr_low.rows() != I || attr_low.cols() != K || attr_high.rows() != I || attr_high.cols() != K)
    throw std::invalid_argument("covariates: attribute ranges must be alternatives x attributes");
  if (availability_prob.size() != I) throw std::invalid_argument("covariates: one availability probability per alternative");
  auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!generic_prob.unaryExpr(is_prob).all() || !availability_prob.unaryExpr(is_prob).all() ||
      !is_prob(generic_correlation) || !is_prob(indicator_missing_prob))
    throw std::invalid_argument("covariates: probabilities must lie in [0, 1]");
  if ((attr_high.array() < attr_low.array()).any()) throw std::invalid_argument("covariates: attribute range reversed");
}

CovariateSpec CovariateSpec::defaults(const VariableCatalog& cat) {
  CovariateSpec c;
  c.generic_prob = Eigen::VectorXd::Constant(ix(cat.n_generic()), 0.5);
  c.attr_low = Eigen::MatrixXd::Zero(ix(cat.n_alternatives()), ix(cat.n_attributes()));
  c.attr_high = Eigen::MatrixXd::Ones(ix(cat.n_alternatives()), ix(cat.n_attributes()));
  c.availability_prob = Eigen::VectorXd::Ones(ix(cat.n_alternatives()));
  return c;
}

void GroundTruth::check() const {
  catalog.check();
  covariates.check(catalog);
  switch (family) {
    case ModelFamily::mnl:
      mnl.check(catalog);
      if (mnl.n_latents() != 0) throw std::invalid_argument("mnl truth cannot carry latent coefficients");
      break;
    case ModelFamily::iclv: iclv.check(catalog); break;
    case ModelFamily::crbm: crbm.check(catalog); break;
  }
}

Eigen::VectorXd GroundTruth::theta() const {
  switch (family) {
    case ModelFamily::mnl: return mnl.to_vector();
    case ModelFamily::iclv: return iclv.to_vector();
    case ModelFamily::crbm: return crbm.to_vector();
  }
  return {};
}

std::vector<std::string> GroundTruth::names() const {
  switch (family) {
    case ModelFamily::mnl: return mnl.names(catalog, {});
    case ModelFamily::iclv: return iclv.names(catalog);
    case ModelFamily::crbm: return crbm.names(catalog);
  }
  return {};
}

std::vector<bool> GroundTruth::fixed() const {
  switch (family) {
    case ModelFamily::mnl: return mnl.fixed;
    case ModelFamily::iclv: return iclv.fixed_mask();
    case ModelFamily::crbm: return crbm.fixed;
  }
  return {};
}

GroundTruth random_truth(ModelFamily family, const VariableCatalog& catalog, const IclvParams& shape,
                         std::size_t crbm_latents, double s, std::uint64_t seed) {
  GroundTruth t;
  t.family = family;
  t.catalog = catalog;
  t.covariates = CovariateSpec::defaults(catalog);
  t.seed = seed;
  Rng rng(derive_seed(seed, stable_hash("truth")));
  const std::size_t I = catalog.n_alternatives(), K = catalog.n_attributes(), M = catalog.n_generic();

  auto fill_choice = [&](ChoiceModelParams& c) {
    for (std::size_t i = 0; i < I; ++i)
      if (!c.fixed[c.asc_index(i)]) c.asc[ix(i)] = s * uniform(rng, -1.0, 1.0);
    for (std::size_t k = 0; k < K; ++k) c.beta_attr[ix(k)] = s * signed_magnitude(rng, 0.5, 1.5);
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t m = 0; m < c.n_generic(); ++m)
        if (!c.fixed[c.generic_index(i, m)]) c.beta_generic(ix(i), ix(m)) = s * uniform(rng, -1.0, 1.0);
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t h = 0; h < c.n_latents(); ++h)
        if (!c.fixed[c.latent_index(i, h)]) c.beta_latent(ix(i), ix(h)) = s * signed_magnitude(rng, 1.0, 2.0);
  };

  switch (family) {
    case ModelFamily::mnl: {
      t.mnl = ChoiceModelParams::zeros(catalog, 0);
      for (std::size_t m = 0; m < M; ++m)
        if (!shape.choice.fixed.empty() && !shape.choice.fixed[shape.choice.generic_index(shape.choice.reference == 0 ? 1 : 0, m)])
          t.mnl.free_generic(m);
      fill_choice(t.mnl);
      break;
    }
    case ModelFamily::iclv: {
      t.iclv = shape;
      fill_choice(t.iclv.choice);
      for (auto& l : t.iclv.latents) {
        for (Eigen::Index q = 0; q < l.loadings.size(); ++q) l.loadings[q] = s * signed_magnitude(rng, 1.0, 2.0);
        l.intercept = l.fix_intercept ? l.intercept : s * uniform(rng, -1.0, 1.0);
      }
      for (auto& m : t.iclv.measurement)
        if (!m.fixed) m.loading = s * signed_magnitude(rng, 2.0, 4.0);
      break;
    }
    case ModelFamily::crbm: {
      auto& p = t.crbm = CRBMParams::zeros(I, crbm_latents, K, M, catalog.reference);
      for (std::size_t i = 0; i < I; ++i)
        if (!p.fixed[p.c_alt_index(i)]) p.c_alt[ix(i)] = s * uniform(rng, -1.0, 1.0);
      for (std::size_t j = 0; j < crbm_latents; ++j) p.c_lat[ix(j)] = s * uniform(rng, -1.0, 1.0);
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < crbm_latents; ++j)
          if (!p.fixed[p.d_index(i, j)]) p.D(ix(i), ix(j)) = s * signed_magnitude(rng, 0.5, 2.0);
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t k = 0; k < K; ++k) p.B(ix(i), ix(k)) = s * uniform(rng, -1.0, 1.0);
      for (std::size_t j = 0; j < crbm_latents; ++j)
        for (std::size_t m = 0; m < M; ++m) p.G(ix(j), ix(m)) = s * uniform(rng, -1.0, 1.0);
      break;
    }
  }
  return t;
}

GroundTruth default_truth(ModelFamily family, std::size_t n_obs, std::uint64_t seed) {
  VariableCatalog cat;
  cat.alternatives = {"Bus", "CarRental", "Car", "Plane", "TrainHotel", "Train"};
  cat.reference = 5;
  cat.alt_specific_vars = {"cost", "time", "reliability"};
  cat.generic_vars = {"licence",    "age_25_45",  "ft_worker",  "hs_education", "hh_veh_0",  "children_0_2",
                      "income_60k", "transit_pass", "hh_veh_1", "age_45",       "male",      "tertiary"};
  const std::vector<std::pair<std::string, std::vector<std::string>>> latents = {
      {"Environmental", {"licence", "age_25_45", "ft_worker", "hs_education"}},
      {"Safety", {"transit_pass", "hh_veh_1", "children_0_2", "hh_veh_0"}},
      {"Comfort", {"age_45", "male", "tertiary", "income_60k"}},
  };
  const std::vector<std::pair<std::string, std::string>> prefixes = {
      {"env", "Environmental"}, {"safety", "Safety"}, {"comfort", "Comfort"}};
  std::vector<MeasurementSpec> meas;
  for (const auto& [prefix, latent] : prefixes) {
    for (const std::string mode : {"Bus", "Car", "Plane", "Train"}) {
      std::string lower = mode;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      cat.indicator_vars.push_back({prefix + "_" + lower, mode});
      meas.push_back({prefix + "_" + lower, latent, 0.0, false});
    }
  }
  std::vector<LatentSpec> specs;
  for (const auto& [name, inputs] : latents) {
    LatentSpec l;
    l.name = name;
    l.inputs = inputs;
    l.loadings = Eigen::VectorXd::Zero(ix(inputs.size()));
    specs.push_back(l);
  }
  const auto shape = IclvParams::make(cat, specs, meas);
  GroundTruth t = random_truth(family, cat, shape, 3, 1.0, derive_seed(0xd3fa017ULL, static_cast<std::uint64_t>(family)));
  t.covariates.attr_high.setConstant(2.0);
  t.n_obs = n_obs;
  t.seed = seed;
  return t;
}

GroundTruth small_crbm_truth(std::size_t n_latents, std::size_t n_obs, std::uint64_t seed, double weight_scale) {
  VariableCatalog cat;
  cat.alternatives = {"a", "b", "c"};
  cat.reference = 2;
  cat.alt_specific_vars = {"cost", "time"};
  cat.generic_vars = {"g1", "g2", "g3"};
  GroundTruth t = random_truth(ModelFamily::crbm, cat, IclvParams{}, n_latents, weight_scale, 0x5a11c4bULL);
  t.n_obs = n_obs;
  t.seed = seed;
  return t;
}

SyntheticSample generate_with_latents(const GroundTruth& truth) {
  truth.check();
  const auto& cat = truth.catalog;
  SyntheticSample out;
  out.dataset.catalog = cat;
  out.dataset.scale_factors.assign(cat.n_attributes(), 1.0);
  out.dataset.rows.reserve(truth.n_obs);
  std::size_t H = 0;
  if (truth.family == ModelFamily::iclv) H = truth.iclv.latents.size();
  if (truth.family == ModelFamily::crbm) H = truth.crbm.n_latents();
  out.latents.resize(ix(truth.n_obs), ix(H));

  std::vector<BoundLatent> bound;
  std::vector<std::size_t> meas_latent, meas_indicator;
  if (truth.family == ModelFamily::iclv) {
    const auto names = truth.iclv.latent_names();
    for (const auto& l : truth.iclv.latents) bound.emplace_back(l, cat);
    for (const auto& m : truth.iclv.measurement) {
      meas_latent.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), m.latent) - names.begin()));
      meas_indicator.push_back(*cat.indicator_index(m.indicator));
    }
  }
  const double sign = truth.iclv.sign == MeasurementSign::negated ? -1.0 : 1.0;

  for (std::size_t n = 0; n < truth.n_obs; ++n) {
    Rng rng(derive_seed(truth.seed, n));
    ObservationRow row = draw_covariates(truth, rng);
    Eigen::VectorXd ind;
    switch (truth.family) {
      case ModelFamily::mnl: {
        row.choice = static_cast<std::size_t>(
            sample_categorical(choice_probabilities(utility(truth.mnl, row), row.availability), rng));
        ind = coin_indicators(cat.n_indicators(), rng);
        break;
      }
      case ModelFamily::iclv: {
        Eigen::VectorXd x(ix(H));
        for (std::size_t h = 0; h < H; ++h) {
          const double sd = truth.iclv.latents[h].noise_std;
          x[ix(h)] = bound[h].value(row.generic, sd > 0 ? sd * standard_normal(rng) : 0.0);
        }
        out.latents.row(ix(n)) = x.transpose();
        row.choice = static_cast<std::size_t>(
            sample_categorical(choice_probabilities(utility(truth.iclv.choice, row, x), row.availability), rng));
        ind = coin_indicators(cat.n_indicators(), rng);
        for (std::size_t q = 0; q < meas_latent.size(); ++q) {
          const double p = measurement_prob(sign * truth.iclv.measurement[q].loading, x[ix(meas_latent[q])]);
          ind[ix(meas_indicator[q])] = bernoulli(rng, p) ? 1.0 : 0.0;
        }
        break;
      }
      case ModelFamily::crbm: {
        const auto& p = truth.crbm;
        row.choice = static_cast<std::size_t>(sample_categorical(p_choice_marginal(row, p), rng));
        const Eigen::VectorXd pl = p_latent_given_visible(row.choice, row, p);
        for (std::size_t j = 0; j < H; ++j) out.latents(ix(n), ix(j)) = bernoulli(rng, pl[ix(j)]) ? 1.0 : 0.0;
        ind = coin_indicators(cat.n_indicators(), rng);
        break;
      }
    }
    const bool missing = uniform01(rng) < truth.covariates.indicator_missing_prob;
    if (cat.n_indicators() > 0 && !missing) row.indicators = ind;
    out.dataset.rows.push_back(std::move(row));
  }
  return out;
}

SurveyDataset generate(const GroundTruth& truth) { return generate_with_latents(truth).dataset; }

RecoveryReport recovery_experiment(const GroundTruth& truth, Estimator estimator, const RecoveryConfig& cfg) {
  truth.check();
  const bool compatible = (estimator == Estimator::mnl && truth.family == ModelFamily::mnl) ||
                          (estimator == Estimator::iclv && truth.family == ModelFamily::iclv) ||
                          (estimator == Estimator::crbm && truth.family == ModelFamily::crbm) ||
                          (estimator == Estimator::two_stage && truth.family == ModelFamily::iclv);
  if (!compatible)
    throw std::invalid_argument("estimator " + to_string(estimator) + " cannot be scored against a " +
                                to_string(truth.family) + " truth");

  RecoveryReport report;
  report.estimator = estimator;
  report.replications.resize(cfg.replications);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < cfg.replications; r = next++) {
      auto& rep = report.replications[r];
      GroundTruth t = truth;
      t.seed = derive_seed(truth.seed, r);
      rep.seed = t.seed;
      try {
        const SurveyDataset ds = generate(t);
        const auto e = run_estimator(t, estimator, ds, derive_seed(t.seed, 0xe57ULL), cfg);
        rep.estimate = e.theta;
        rep.std_err = e.std_err;
        rep.final_ll = e.final_ll;
        rep.converged = e.converged;
        rep.baseline_ll = e.baseline_ll;
        rep.ok = true;
      } catch (const std::exception& ex) {
        rep.error = ex.what();
      }
    }
  };
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(cfg.replications, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const Eigen::VectorXd theta = truth.theta();
  const auto names = truth.names();
  const auto fixed = truth.fixed();
  std::size_t wins = 0, ok = 0;
  for (const auto& rep : report.replications) {
    if (!rep.ok) {
      ++report.n_failed;
      continue;
    }
    ++ok;
    if (rep.baseline_ll && rep.final_ll >= *rep.baseline_ll - kLikelihoodSlack) ++wins;
  }
  for (std::size_t q = 0; q < names.size(); ++q) {
    if (fixed[q]) continue;
    ParamRecovery pr;
    pr.name = names[q];
    pr.truth = theta[ix(q)];
    double sum = 0.0, sq = 0.0;
    std::size_t covered = 0;
    for (const auto& rep : report.replications) {
      if (!rep.ok) continue;
      const double e = rep.estimate[ix(q)];
      sum += e;
      sq += (e - pr.truth) * (e - pr.truth);
      if (rep.std_err[q]) {
        ++pr.n_intervals;
        if (std::abs(e - pr.truth) <= 1.959963984540054 * *rep.std_err[q]) ++covered;
      }
    }
    if (ok) {
      pr.mean_estimate = sum / static_cast<double>(ok);
      pr.bias = pr.mean_estimate - pr.truth;
      pr.rmse = std::sqrt(sq / static_cast<double>(ok));
    }
    pr.coverage = pr.n_intervals ? static_cast<double>(covered) / static_cast<double>(pr.n_intervals) : 0.0;
    report.params.push_back(pr);
  }
  if (!report.params.empty()) {
    for (const auto& pr : report.params) {
      report.mean_coverage += pr.coverage;
      report.mean_rmse += pr.rmse;
    }
    report.mean_coverage /= static_cast<double>(report.params.size());
    report.mean_rmse /= static_cast<double>(report.params.size());
  }
  if (estimator == Estimator::two_stage && ok) report.ll_win_rate = static_cast<double>(wins) / static_cast<double>(ok);
  return report;
}

}  // namespace rbmchoice
