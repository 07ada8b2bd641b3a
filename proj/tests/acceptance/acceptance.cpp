// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/iclv.hpp"
#include "rbmchoice/mnl.hpp"
#include "rbmchoice/pipeline.hpp"
#include "rbmchoice/synth.hpp"
#include "support/oracles.hpp"

using namespace rbmchoice;
using oracle::ix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1 ---------------------------------------------------------------------------

Outcome free_energy_identity() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int draw = 0; draw < 200; ++draw) {
    const std::size_t I = 3 + static_cast<std::size_t>(draw % 4);
    const std::size_t J = 1 + static_cast<std::size_t>(draw % 10);
    auto p = oracle::random_crbm(I, J, 2, 3, rng, 1.5);
    p.g_term = draw % 2 ? GTermMode::constant : GTermMode::bilinear;
    const auto row = oracle::random_row(oracle::catalog(I, 2, 3), rng);
    const auto states = oracle::hidden_states(J);
    for (std::size_t y = 0; y < I; ++y) {
      std::vector<double> neg;
      for (const auto& h : states) neg.push_back(-oracle::energy(y, h, row, p));
      worst = std::max(worst, std::abs(free_energy(y, row, p) + oracle::log_sum_exp(neg)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 5.0, fmt("max |error| %.3g", worst) + fmt(", %.2f s", secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome normalization() {
  Rng rng(202);
  double worst_sum = 0.0, worst_lat = 0.0, worst_choice = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t I = 3 + static_cast<std::size_t>(draw % 4);
    const std::size_t J = 1 + static_cast<std::size_t>(draw % 6);
    const auto cat = oracle::catalog(I, 2, 3);
    const auto p = oracle::random_crbm(I, J, 2, 3, rng, 1.5);
    const auto row = oracle::random_row(cat, rng);
    const auto joint = oracle::joint(row, p);
    const auto states = oracle::hidden_states(J);

    double total = 0.0;
    for (const auto& ys : joint)
      for (double v : ys) total += v;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));

    for (std::size_t y = 0; y < I; ++y) {
      if (!row.availability[y]) continue;
      double py = 0.0;
      Eigen::VectorXd on = Eigen::VectorXd::Zero(ix(J));
      for (std::size_t s = 0; s < states.size(); ++s) {
        py += joint[y][s];
        for (std::size_t j = 0; j < J; ++j)
          if (states[s][j]) on[ix(j)] += joint[y][s];
      }
      const Eigen::VectorXd lib = p_latent_given_visible(y, row, p);
      worst_lat = std::max(worst_lat, (lib - on / py).cwiseAbs().maxCoeff());
    }
    for (std::size_t s = 0; s < states.size(); ++s) {
      double ps = 0.0;
      for (std::size_t y = 0; y < I; ++y) ps += joint[y][s];
      const Eigen::VectorXd lib = p_choice_given_latent(states[s], row, p);
      for (std::size_t y = 0; y < I; ++y)
        worst_choice = std::max(worst_choice, std::abs(lib[ix(y)] - joint[y][s] / ps));
    }
  }
  const double worst = std::max({worst_sum, worst_lat, worst_choice});
  std::ostringstream d;
  d << "sum " << worst_sum << ", p(x*|y) " << worst_lat << ", p(y|x*) " << worst_choice;
  return {worst < 1e-10, d.str()};
}

// 3 ---------------------------------------------------------------------------

template <class Params, class LL, class Grad>
double gradient_error(Params p, const std::vector<bool>& fixed, LL ll, Grad grad) {
  const Eigen::VectorXd base = p.to_vector();
  Params shape = p;
  auto f = [&](Eigen::VectorXd t) {
    for (std::size_t q = 0; q < fixed.size(); ++q)
      if (fixed[q]) t[ix(q)] = base[ix(q)];
    shape.set_from_vector(t);
    return ll(shape);
  };
  Eigen::VectorXd fd = oracle::central_gradient(f, base);
  for (std::size_t q = 0; q < fixed.size(); ++q)
    if (fixed[q]) fd[ix(q)] = 0.0;
  return oracle::max_relative_error(grad(p), fd);
}

void randomize(Eigen::VectorXd& t, const std::vector<bool>& fixed, Rng& rng, double scale) {
  for (Eigen::Index q = 0; q < t.size(); ++q)
    if (!fixed[static_cast<std::size_t>(q)]) t[q] = oracle::uniform(rng, -scale, scale);
}

Outcome gradient_oracles() {
  const auto t0 = Clock::now();
  Rng rng(303);
  double worst_mnl = 0.0, worst_iclv = 0.0, worst_crbm = 0.0;

  const auto mcat = oracle::catalog(4, 2, 3);
  const auto mds = oracle::random_dataset(mcat, 40, rng);
  Eigen::MatrixXd lat(40, 2);
  for (Eigen::Index i = 0; i < lat.size(); ++i) lat.data()[i] = oracle::uniform(rng, 0, 1);
  for (int draw = 0; draw < 100; ++draw) {
    auto p = ChoiceModelParams::zeros(mcat, 2);
    for (std::size_t m = 0; m < mcat.n_generic(); ++m) p.free_generic(m);
    Eigen::VectorXd t = p.to_vector();
    randomize(t, p.fixed, rng, 1.5);
    p.set_from_vector(t);
    worst_mnl = std::max(worst_mnl, gradient_error(
                                        p, p.fixed, [&](const ChoiceModelParams& q) { return log_likelihood(q, mds, lat); },
                                        [&](const ChoiceModelParams& q) { return gradient(q, mds, lat); }));
  }

  const auto icat = oracle::catalog(4, 2, 3, 4);
  const auto ids = oracle::random_dataset(icat, 25, rng, true);
  const LatentFunction fns[] = {LatentFunction::sigmoid, LatentFunction::linear, LatentFunction::softplus};
  for (int draw = 0; draw < 100; ++draw) {
    const double noise = draw % 2 ? 0.5 : 0.0;
    std::vector<LatentSpec> ls(2);
    ls[0].name = "A";
    ls[0].inputs = {"g0", "g1"};
    ls[1].name = "B";
    ls[1].inputs = {"g1", "g2"};
    for (auto& l : ls) {
      l.function = fns[draw % 3];
      l.loadings = Eigen::VectorXd::Zero(2);
      l.noise_std = noise;
    }
    std::vector<MeasurementSpec> ms{{"ind0", "A", 0.0, false}, {"ind1", "A", 0.0, false},
                                    {"ind2", "B", 0.0, false}, {"ind3", "B", 0.0, false}};
    auto p = IclvParams::make(icat, ls, ms);
    p.choice.free_generic(0);
    const auto fixed = p.fixed_mask();
    Eigen::VectorXd t = p.to_vector();
    randomize(t, fixed, rng, 1.5);
    p.set_from_vector(t);
    const SimulationConfig sim{5, static_cast<std::uint64_t>(draw)};
    worst_iclv = std::max(worst_iclv, gradient_error(
                                          p, fixed, [&](const IclvParams& q) { return joint_log_likelihood(q, ids, sim); },
                                          [&](const IclvParams& q) { return joint_gradient(q, ids, sim); }));
  }

  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t I = 3 + static_cast<std::size_t>(draw % 3), J = 1 + static_cast<std::size_t>(draw % 5);
    const auto ccat = oracle::catalog(I, 2, 3);
    const auto cds = oracle::random_dataset(ccat, 20, rng);
    auto p = oracle::random_crbm(I, J, 2, 3, rng, 1.0);
    p.g_term = draw % 2 ? GTermMode::constant : GTermMode::bilinear;
    worst_crbm = std::max(worst_crbm, gradient_error(
                                          p, p.fixed, [&](const CRBMParams& q) { return exact_log_likelihood(cds, q); },
                                          [&](const CRBMParams& q) { return exact_gradient(cds, q); }));
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "mnl " << worst_mnl << ", iclv " << worst_iclv << ", crbm " << worst_crbm << fmt(", %.1f s", secs);
  return {std::max({worst_mnl, worst_iclv, worst_crbm}) < 1e-6 && secs < 60.0, d.str()};
}

// 4 ---------------------------------------------------------------------------

Outcome cd_sanity() {
  const auto truth = small_crbm_truth(2, 2000, 404, 1.0);
  const auto ds = generate(truth);
  std::vector<std::size_t> all(ds.size());
  for (std::size_t n = 0; n < all.size(); ++n) all[n] = n;
  Rng rng(4040);
  const Eigen::MatrixXd rows = cd_gradient_rows(ds, all, truth.crbm, 1, rng);
  const double N = static_cast<double>(rows.rows());
  const Eigen::VectorXd mean = rows.colwise().mean();
  std::size_t n_checked = 0, n_out = 0;
  double worst = 0.0;
  for (Eigen::Index q = 0; q < rows.cols(); ++q) {
    if (truth.crbm.fixed[static_cast<std::size_t>(q)]) continue;
    ++n_checked;
    const double sd = std::sqrt((rows.col(q).array() - mean[q]).square().sum() / (N - 1.0));
    const double se = sd / std::sqrt(N);
    const double z = se > 0 ? std::abs(mean[q]) / se : (std::abs(mean[q]) < 1e-12 ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    if (z > 3.0) ++n_out;
  }
  std::ostringstream d;
  d << n_out << " of " << n_checked << " components beyond 3 SE, max |mean|/SE " << worst;
  return {n_out == 0, d.str()};
}

// 5 ---------------------------------------------------------------------------

Outcome gibbs_convergence() {
  auto truth = small_crbm_truth(2, 1, 505, 1.0);
  const auto row = generate(truth).rows[0];
  const auto& p = truth.crbm;
  const auto joint = oracle::joint(row, p);
  const std::size_t I = p.n_alternatives(), S = std::size_t{1} << p.n_latents();
  std::vector<double> counts(I * S, 0.0);
  Rng rng(5050);
  const std::size_t steps = 10000;
  gibbs_chain(row, p, 0, steps, rng, [&](const GibbsState& s) {
    std::size_t code = 0;
    for (std::size_t j = 0; j < s.xstar.size(); ++j) code |= std::size_t{s.xstar[j]} << j;
    counts[s.y * S + code] += 1.0;
  });
  const double n = static_cast<double>(steps);
  double worst = 0.0;
  bool ok = true;
  for (std::size_t y = 0; y < I; ++y)
    for (std::size_t s = 0; s < S; ++s) {
      const double pr = joint[y][s];
      const double sd = std::sqrt(n * pr * (1.0 - pr));
      const double dev = std::abs(counts[y * S + s] - n * pr);
      if (dev > 3.0 * sd + 1e-9) ok = false;
      if (sd > 0) worst = std::max(worst, dev / sd);
    }
  return {ok, std::to_string(I * S) + " cells, max deviation " + fmt("%.2f sigma", worst)};
}

// 6 ---------------------------------------------------------------------------

Outcome parameter_recovery() {
  const auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  for (auto family : {ModelFamily::mnl, ModelFamily::iclv}) {
    const Estimator est = family == ModelFamily::mnl ? Estimator::mnl : Estimator::iclv;
    RecoveryConfig cfg;
    cfg.replications = 20;
    const auto large = recovery_experiment(default_truth(family, 5000, 606), est, cfg);
    const auto small = recovery_experiment(default_truth(family, 1000, 607), est, cfg);
    const bool cov_ok = large.mean_coverage >= 0.9 && large.n_failed == 0;
    const bool rmse_ok = large.mean_rmse < small.mean_rmse;
    ok = ok && cov_ok && rmse_ok;
    d << to_string(est) << ": coverage " << fmt("%.3f", large.mean_coverage) << ", rmse "
      << fmt("%.4f", small.mean_rmse) << " -> " << fmt("%.4f", large.mean_rmse) << ", failed " << large.n_failed
      << "; ";
  }
  const double secs = seconds_since(t0);
  d << fmt("%.1f s", secs);
  return {ok && secs < 600.0, d.str()};
}

// 7 ---------------------------------------------------------------------------

Outcome table_statistics() {
  const auto a = FitStatistics::compute(-2917.752, -2013.685, 123, 1000);
  const auto b = FitStatistics::compute(-2917.752, -1946.872, 123, 1000);
  const bool rho_a = std::abs(a.rho_square - 0.310) <= 0.0005;
  const bool rho_b = std::abs(b.rho_square - 0.332) <= 0.0005;
  bool identities = true;
  Rng rng(707);
  for (int draw = 0; draw < 1000; ++draw) {
    const double null_ll = -oracle::uniform(rng, 10, 1e5);
    const double ll = null_ll * oracle::uniform(rng, 0.1, 1.0);
    const auto k = static_cast<std::size_t>(rng() % 500);
    const auto n = static_cast<std::size_t>(1 + rng() % 1000000);
    const auto s = FitStatistics::compute(null_ll, ll, k, n);
    identities = identities && s.aic == 2.0 * static_cast<double>(k) - 2.0 * ll &&
                 s.bic == static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * ll &&
                 s.rho_square == 1.0 - ll / null_ll;
  }
  std::ostringstream d;
  d << "rho " << fmt("%.5f", a.rho_square) << (rho_a ? " (ok)" : " (off)") << ", rho " << fmt("%.5f", b.rho_square)
    << (rho_b ? " (ok)" : " (off, expected 0.332)") << ", AIC/BIC identities " << (identities ? "exact" : "broken");
  return {rho_a && rho_b && identities, d.str()};
}

// 8 ---------------------------------------------------------------------------

Outcome two_stage_property() {
  const auto t0 = Clock::now();
  RecoveryConfig cfg;
  cfg.replications = 20;
  cfg.crbm.learning_rate = 0.1;
  cfg.crbm.lr_decay = 0.01;
  cfg.crbm.epochs = 100;
  const auto rep = recovery_experiment(default_truth(ModelFamily::iclv, 1500, 808), Estimator::two_stage, cfg);
  const double rate = rep.ll_win_rate.value_or(0.0);
  std::ostringstream d;
  d << "win rate " << fmt("%.2f", rate) << " over " << rep.replications.size() << " replications, failed "
    << rep.n_failed << fmt(", %.1f s", seconds_since(t0));
  return {rep.ll_win_rate && rate >= 0.8, d.str()};
}

// 9 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t compare_trees(const fs::path& a, const fs::path& b, std::vector<std::string>& diffs) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++n;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) diffs.push_back(rel.string());
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) diffs.push_back(e.path().string());
  return n;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "rbmchoice_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string config = std::string(RBMCHOICE_SOURCE_DIR) + "/configs/demo.conf";
  const std::vector<std::vector<std::string>> runs = {
      {"two-stage"}, {"generate"}, {"train-crbm"}, {"estimate-mnl"}, {"estimate-iclv"}};
  std::size_t files = 0;
  std::vector<std::string> diffs;
  bool exits_ok = true;
  for (const auto& sub : runs) {
    for (const char* tag : {"a", "b"}) {
      std::vector<std::string> args = {"--config", config, "--seed", "42", "--out",
                                       (root / (sub[0] + "_" + tag)).string()};
      args.insert(args.end(), sub.begin(), sub.end());
      exits_ok = exits_ok && cli_main(args) == 0;
    }
    files += compare_trees(root / (sub[0] + "_a"), root / (sub[0] + "_b"), diffs);
  }
  std::ostringstream d;
  d << files << " artifacts from " << runs.size() << " subcommands, " << diffs.size() << " differ";
  if (!diffs.empty()) d << " (first " << diffs.front() << ")";
  if (!exits_ok) d << ", a run failed";
  return {exits_ok && diffs.empty() && files > 0, d.str()};
}

// 10 --------------------------------------------------------------------------

Outcome crbm_training_progress() {
  std::ostringstream d;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto truth = small_crbm_truth(2, 5000, 1000 + seed, 1.0);
    const auto ds = generate(truth);
    const auto init = CRBMParams::initialize(3, 2, truth.catalog.n_attributes(), truth.catalog.n_generic(),
                                             truth.catalog.reference, seed, 0.1);
    const double ll0 = exact_log_likelihood(ds, init);
    const double ll_max = fit_exact(ds, init).optim.value;
    CRBMTrainConfig cfg;
    cfg.batch_size = 32;
    cfg.cd_steps = 1;
    cfg.learning_rate = 0.1;
    cfg.lr_decay = 0.01;
    cfg.epochs = 500;
    cfg.seed = seed;
    const auto trained = train(ds, init, cfg);
    const double ll = exact_log_likelihood(ds, trained.params);
    const double share = (ll - ll0) / (ll_max - ll0);
    ok = ok && !trained.diverged && share >= 0.95;
    d << fmt("%.3f", share) << (seed < 5 ? " " : "");
  }
  return {ok, "gap closed per seed: " + d.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "free-energy identity", free_energy_identity},
      {2, "normalization and conditionals", normalization},
      {3, "gradient oracles", gradient_oracles},
      {4, "CD-1 gradient at the truth", cd_sanity},
      {5, "Gibbs chain frequencies", gibbs_convergence},
      {6, "parameter recovery", parameter_recovery},
      {7, "fit statistics", table_statistics},
      {8, "two-stage likelihood", two_stage_property},
      {9, "CLI determinism", cli_determinism},
      {10, "C-RBM training progress", crbm_training_progress},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
