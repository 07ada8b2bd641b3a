#include "rbmchoice/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Loading of a single no-intercept binary logit of `indicator` on s * latent,
/// over rows with indicator responses. Newton's method on a concave objective.
double fit_measurement_loading(const SurveyDataset& ds, std::size_t indicator, const Eigen::VectorXd& latent, double s) {
  double beta = 0.0;
  for (int it = 0; it < 100; ++it) {
    double g = 0.0, h = 0.0;
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const auto& row = ds.rows[n];
      if (!row.indicators) continue;
      const double x = s * latent[ix(n)];
      const double p = sigmoid(beta * x);
      g += ((*row.indicators)[ix(indicator)] - p) * x;
      h += p * (1.0 - p) * x * x;
    }
    if (h <= 1e-12) break;
    const double step = std::clamp(g / h, -2.0, 2.0);
    beta += step;
    if (std::abs(step) < 1e-10) break;
  }
  return std::clamp(beta, -20.0, 20.0);
}

void fit_measurement(IclvParams& p, const SurveyDataset& ds) {
  const Eigen::MatrixXd x = latent_matrix(p, ds);
  const auto names = p.latent_names();
  const double s = p.sign == MeasurementSign::negated ? -1.0 : 1.0;
  for (auto& m : p.measurement) {
    if (m.fixed) continue;
    const auto h = std::find(names.begin(), names.end(), m.latent) - names.begin();
    m.loading = fit_measurement_loading(ds, *ds.catalog.indicator_index(m.indicator), x.col(h), s);
  }
}

double input_share(const CRBMParams& crbm, std::size_t unit, const std::vector<std::size_t>& inputs) {
  const double total = crbm.G.row(ix(unit)).cwiseAbs().sum();
  if (total == 0.0) return 0.0;
  double on = 0.0;
  for (auto m : inputs) on += std::abs(crbm.G(ix(unit), ix(m)));
  return on / total;
}

}  // namespace

IclvParams ModelStructure::zero_params(const VariableCatalog& catalog) const {
  auto lat = latents;
  for (auto& l : lat) {
    l.loadings = Eigen::VectorXd::Zero(ix(l.inputs.size()));
    if (!l.fix_intercept) l.intercept = 0.0;
  }
  auto meas = measurement;
  for (auto& m : meas)
    if (!m.fixed) m.loading = 0.0;
  IclvParams p = IclvParams::make(catalog, std::move(lat), std::move(meas));
  p.sign = sign;
  for (const auto& g : utility_generic) p.choice.free_generic(*catalog.generic_index(g));
  return p;
}

ChoiceModelParams ModelStructure::zero_mnl(const VariableCatalog& catalog) const {
  auto p = ChoiceModelParams::zeros(catalog, 0);
  for (const auto& g : utility_generic) p.free_generic(*catalog.generic_index(g));
  return p;
}

void ModelStructure::check(const VariableCatalog& catalog) const {
  for (const auto& g : utility_generic)
    if (!catalog.generic_index(g)) throw std::invalid_argument("utility refers to unknown generic variable '" + g + "'");
  zero_params(catalog).check(catalog);
}

ModelStructure structure_of(const IclvParams& params, const VariableCatalog& catalog) {
  ModelStructure s;
  s.latents = params.latents;
  s.measurement = params.measurement;
  s.sign = params.sign;
  const auto& c = params.choice;
  const std::size_t probe = c.reference == 0 ? 1 : 0;
  for (std::size_t m = 0; m < c.n_generic(); ++m)
    if (!c.fixed[c.generic_index(probe, m)]) s.utility_generic.push_back(catalog.generic_vars[m]);
  return s;
}

IclvParams handoff_parameters(const CRBMParams& crbm, const LatentReport& extraction, const ModelStructure& structure,
                              const SurveyDataset& ds, const ChoiceModelParams& prefit, const SimulationConfig& sim,
                              std::vector<LatentMatch>* matches_out) {
  const auto& cat = ds.catalog;
  IclvParams p = structure.zero_params(cat);
  const std::size_t I = cat.n_alternatives();
  const std::size_t H = p.latents.size();

  p.choice.asc = crbm.c_alt;
  p.choice.beta_attr = prefit.beta_attr;
  p.choice.beta_generic = prefit.beta_generic;

  std::vector<std::vector<std::size_t>> inputs;
  for (const auto& l : p.latents) inputs.push_back(BoundLatent(l, cat).input_index());

  // Greedy pairing by share of G mass on the declared inputs.
  std::vector<std::size_t> units = extraction.kept();
  std::vector<LatentMatch> matches(H);
  for (std::size_t h = 0; h < H; ++h) matches[h].latent = p.latents[h].name;
  std::vector<bool> latent_done(H, false), unit_done(units.size(), false);
  for (std::size_t round = 0; round < std::min(H, units.size()); ++round) {
    double best = -1.0;
    std::size_t bh = 0, bu = 0;
    for (std::size_t h = 0; h < H; ++h) {
      if (latent_done[h]) continue;
      for (std::size_t u = 0; u < units.size(); ++u) {
        if (unit_done[u]) continue;
        const double share = input_share(crbm, units[u], inputs[h]);
        if (share > best) {
          best = share;
          bh = h;
          bu = u;
        }
      }
    }
    latent_done[bh] = unit_done[bu] = true;
    matches[bh].unit = units[bu];
    matches[bh].input_share = best;
  }

  for (std::size_t h = 0; h < H; ++h) {
    if (!matches[h].unit) continue;
    const std::size_t j = *matches[h].unit;
    auto& l = p.latents[h];
    for (std::size_t q = 0; q < inputs[h].size(); ++q) l.loadings[ix(q)] = crbm.G(ix(j), ix(inputs[h][q]));
    if (!l.fix_intercept) l.intercept = crbm.c_lat[ix(j)];
    for (std::size_t i = 0; i < I; ++i)
      if (!p.choice.fixed[p.choice.latent_index(i, h)])
        p.choice.beta_latent(ix(i), ix(h)) = crbm.D(ix(i), ix(j)) - crbm.D(ix(crbm.reference), ix(j));
  }

  // Orientation: a C-RBM unit and its complement describe the same split of the
  // sample, so try x* and 1 - x* for each latent and keep the better start.
  auto flipped = [&](IclvParams q, std::size_t h) {
    auto& l = q.latents[h];
    l.loadings = -l.loadings;
    if (!l.fix_intercept) l.intercept = -l.intercept;
    for (std::size_t i = 0; i < I; ++i) {
      if (q.choice.fixed[q.choice.latent_index(i, h)]) continue;
      q.choice.asc[ix(i)] += q.choice.beta_latent(ix(i), ix(h));
      q.choice.beta_latent(ix(i), ix(h)) = -q.choice.beta_latent(ix(i), ix(h));
    }
    return q;
  };
  fit_measurement(p, ds);
  double current = joint_log_likelihood(p, ds, sim);
  for (std::size_t h = 0; h < H; ++h) {
    if (!matches[h].unit || p.latents[h].function != LatentFunction::sigmoid) continue;
    IclvParams alt = flipped(p, h);
    fit_measurement(alt, ds);
    const double ll = joint_log_likelihood(alt, ds, sim);
    if (ll > current) {
      p = std::move(alt);
      current = ll;
      matches[h].flipped = true;
    }
  }
  if (matches_out) *matches_out = std::move(matches);
  return p;
}

TwoStageResult run_two_stage(const SurveyDataset& ds, const TwoStageConfig& cfg,
                             const std::function<void(const TwoStageResult&, const std::string&)>& on_stage) {
  const auto& cat = ds.catalog;
  cfg.structure.check(cat);
  auto notify = [&](const TwoStageResult& r, const char* stage) {
    if (on_stage) on_stage(r, stage);
  };

  TwoStageResult r;
  const std::size_t J = cfg.crbm_latents ? cfg.crbm_latents : cfg.structure.latents.size();
  CRBMParams init = CRBMParams::initialize(cat.n_alternatives(), J, cat.n_attributes(), cat.n_generic(), cat.reference,
                                           cfg.crbm.seed, cfg.crbm_init_std);
  init.g_term = cfg.g_term;
  r.crbm = train(ds, init, cfg.crbm);
  if (r.crbm.diverged) {
    notify(r, "crbm");
    throw std::runtime_error("C-RBM training diverged: " + r.crbm.message);
  }
  r.extraction = extract_significant_latents(r.crbm.params, ds, cfg.t_threshold, cfg.extract);
  notify(r, "crbm");

  r.prefit = estimate(ds, cfg.structure.zero_mnl(cat), cfg.optimizer, {}, false);
  r.handoff = handoff_parameters(r.crbm.params, r.extraction, cfg.structure, ds, r.prefit.params, cfg.simulation,
                                 &r.matches);
  r.handoff_ll = joint_log_likelihood(r.handoff, ds, cfg.simulation);
  notify(r, "handoff");

  r.two_stage = estimate_iclv(ds, r.handoff, cfg.optimizer, cfg.simulation, cfg.std_errors);
  notify(r, "two-stage");

  if (cfg.cold_start) {
    r.cold_start = estimate_iclv(ds, cfg.structure.zero_params(cat), cfg.optimizer, cfg.simulation, cfg.std_errors);
    notify(r, "cold-start");
  }
  return r;
}

}  // namespace rbmchoice
