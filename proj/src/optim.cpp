#include "rbmchoice/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "rbmchoice/rng.hpp"

namespace rbmchoice {

OptimMethod parse_optim_method(const std::string& name) {
  if (name == "ascent+bfgs" || name == "ascent_bfgs") return OptimMethod::ascent_bfgs;
  if (name == "ascent") return OptimMethod::ascent;
  if (name == "bfgs") return OptimMethod::bfgs;
  if (name == "sgd") return OptimMethod::sgd;
  throw std::invalid_argument("unknown optimizer method '" + name + "'");
}

std::string to_string(OptimMethod method) {
  switch (method) {
    case OptimMethod::ascent_bfgs: return "ascent+bfgs";
    case OptimMethod::ascent: return "ascent";
    case OptimMethod::bfgs: return "bfgs";
    case OptimMethod::sgd: return "sgd";
  }
  return "?";
}

std::vector<std::size_t> free_indices(const std::vector<bool>& fixed) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (!fixed[i]) out.push_back(i);
  return out;
}

namespace {

struct Evaluator {
  const ObjectiveFn& f;
  const std::vector<bool>& fixed;

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    grad.setZero(theta.size());
    const double v = f(theta, &grad);
    for (std::size_t i = 0; i < fixed.size(); ++i)
      if (fixed[i]) grad[static_cast<Eigen::Index>(i)] = 0.0;
    return v;
  }
};

double inf_norm(const Eigen::VectorXd& g) { return g.size() ? g.cwiseAbs().maxCoeff() : 0.0; }

Eigen::VectorXd gather(const Eigen::VectorXd& full, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t q = 0; q < idx.size(); ++q) out[static_cast<Eigen::Index>(q)] = full[static_cast<Eigen::Index>(idx[q])];
  return out;
}

void scatter_add(Eigen::VectorXd& full, const std::vector<std::size_t>& idx, const Eigen::VectorXd& part, double scale) {
  for (std::size_t q = 0; q < idx.size(); ++q)
    full[static_cast<Eigen::Index>(idx[q])] += scale * part[static_cast<Eigen::Index>(q)];
}

}  // namespace

OptimResult maximize(const ObjectiveFn& f, Eigen::VectorXd theta, const std::vector<bool>& fixed,
                     const OptimizerConfig& config) {
  if (fixed.size() != static_cast<std::size_t>(theta.size()))
    throw std::invalid_argument("maximize: fixed mask size mismatch");
  if (config.method == OptimMethod::sgd)
    throw std::invalid_argument("maximize: use maximize_sgd for the sgd method");

  Evaluator eval{f, fixed};
  const auto free = free_indices(fixed);
  OptimResult res;
  Eigen::VectorXd g;
  double v = eval(theta, g);
  if (!std::isfinite(v)) {
    res.theta = theta;
    res.value = v;
    res.message = "objective not finite at the starting point";
    return res;
  }
  double gnorm = inf_norm(g);
  int iter = 0;

  auto finish = [&](bool converged, std::string msg) {
    res.theta = theta;
    res.value = v;
    res.grad_inf_norm = gnorm;
    res.iterations = iter;
    res.converged = converged;
    res.message = std::move(msg);
    return res;
  };

  if (gnorm <= config.tolerance) return finish(true, "converged");
  if (free.empty()) return finish(true, "no free parameters");

  // Adaptive-step gradient ascent.
  if (config.method == OptimMethod::ascent || config.method == OptimMethod::ascent_bfgs) {
    const int budget = config.method == OptimMethod::ascent ? config.max_iterations : config.ascent_iterations;
    double step = config.initial_step;
    Eigen::VectorXd g_new;
    for (int k = 0; k < budget && gnorm > config.tolerance; ++k) {
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        Eigen::VectorXd trial = theta + step * g;
        const double vt = eval(trial, g_new);
        if (std::isfinite(vt) && vt > v) {
          theta = std::move(trial);
          v = vt;
          g = g_new;
          gnorm = inf_norm(g);
          step *= 1.2;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      ++iter;
      if (!accepted) break;
    }
    if (gnorm <= config.tolerance) return finish(true, "converged");
    if (config.method == OptimMethod::ascent)
      return finish(false, iter >= config.max_iterations ? "iteration limit reached" : "step size collapsed");
  }

  // BFGS on the free coordinates, maximizing f (i.e. minimizing -f).
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd gf = gather(g, free);
  Eigen::VectorXd g_new;
  int stalls = 0;
  while (iter < config.max_iterations) {
    if (gnorm <= config.tolerance) return finish(true, "converged");
    Eigen::VectorXd p = hinv * gf;
    double slope = gf.dot(p);
    if (!(slope > 0.0)) {
      hinv.setIdentity();
      scaled = false;
      p = gf;
      slope = gf.squaredNorm();
    }
    double alpha = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(1e-12, p.cwiseAbs().maxCoeff()));
    const double noise = 1e-13 * (1.0 + std::abs(v));
    bool accepted = false;
    double v_new = v;
    Eigen::VectorXd trial;
    for (int ls = 0; ls < 60; ++ls) {
      trial = theta;
      scatter_add(trial, free, p, alpha);
      v_new = eval(trial, g_new);
      if (std::isfinite(v_new) && v_new >= v + 1e-4 * alpha * slope - noise) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++iter;
    if (!accepted) {
      if (scaled) {
        hinv.setIdentity();
        scaled = false;
        continue;
      }
      return finish(false, "line search failed");
    }
    const Eigen::VectorXd gf_new = gather(g_new, free);
    const Eigen::VectorXd s = alpha * p;
    const Eigen::VectorXd y = gf - gf_new;  // gradient change of -f
    const double sy = s.dot(y);
    stalls = (v_new - v <= noise) ? stalls + 1 : 0;
    theta = std::move(trial);
    v = v_new;
    g = g_new;
    gf = gf_new;
    gnorm = inf_norm(g);
    if (stalls > 20) return finish(gnorm <= config.tolerance, "no further progress");
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = hinv * y;
      // Sherman-Morrison form of the inverse BFGS update.
      hinv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  if (gnorm <= config.tolerance) return finish(true, "converged");
  return finish(false, "iteration limit reached");
}

OptimResult maximize_sgd(const BatchObjectiveFn& f, std::size_t n_rows, Eigen::VectorXd theta,
                         const std::vector<bool>& fixed, const OptimizerConfig& config) {
  if (n_rows == 0) throw std::invalid_argument("maximize_sgd: no rows");
  if (config.sgd_batch_size == 0) throw std::invalid_argument("maximize_sgd: batch size must be positive");
  Rng rng(derive_seed(config.seed, 0x5cdULL));
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd g(theta.size());
  OptimResult res;
  int iter = 0;
  for (int epoch = 0; epoch < config.sgd_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_rows; start += config.sgd_batch_size) {
      const std::size_t len = std::min(config.sgd_batch_size, n_rows - start);
      g.setZero();
      f(theta, &g, std::span<const std::size_t>(order.data() + start, len));
      for (std::size_t i = 0; i < fixed.size(); ++i)
        if (fixed[i]) g[static_cast<Eigen::Index>(i)] = 0.0;
      theta += (config.sgd_learning_rate / static_cast<double>(len)) * g;
      ++iter;
    }
  }
  std::vector<std::size_t> all(n_rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  g.setZero();
  res.value = f(theta, &g, all);
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (fixed[i]) g[static_cast<Eigen::Index>(i)] = 0.0;
  res.theta = theta;
  res.grad_inf_norm = inf_norm(g);
  res.iterations = iter;
  res.converged = res.grad_inf_norm <= config.tolerance;
  res.message = res.converged ? "converged" : "epoch budget exhausted";
  return res;
}

Eigen::MatrixXd numerical_hessian(const ObjectiveFn& f, const Eigen::VectorXd& theta,
                                  const std::vector<std::size_t>& free) {
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd gp(theta.size()), gm(theta.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto j = static_cast<Eigen::Index>(free[static_cast<std::size_t>(c)]);
    const double step = std::max(1e-4, 1e-4 * std::abs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += step;
    tm[j] -= step;
    gp.setZero();
    gm.setZero();
    f(tp, &gp);
    f(tm, &gm);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto i = static_cast<Eigen::Index>(free[static_cast<std::size_t>(r)]);
      h(r, c) = (gp[i] - gm[i]) / (2.0 * step);
    }
  }
  return 0.5 * (h + h.transpose());
}

double t_statistic(double value, double std_err) { return value == 0.0 ? 0.0 : value / std_err; }

std::vector<ParamStat> inferential_table(const std::vector<std::string>& names, const Eigen::VectorXd& theta,
                                         const std::vector<bool>& fixed, const Eigen::MatrixXd& hessian_free) {
  const auto free = free_indices(fixed);
  if (hessian_free.rows() != static_cast<Eigen::Index>(free.size()))
    throw std::invalid_argument("inferential_table: Hessian size does not match free parameters");
  std::vector<ParamStat> out(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out[i].name = names[i];
    out[i].value = theta[static_cast<Eigen::Index>(i)];
    out[i].fixed = fixed[i];
  }
  if (free.empty()) return out;

  const Eigen::MatrixXd info = -hessian_free;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  const double top = lambda.cwiseAbs().maxCoeff();
  const double cutoff = std::max(1e-10 * top, 1e-300);
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd null_weight = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(lambda[k]) > cutoff)
      cov.noalias() += vecs.col(k) * vecs.col(k).transpose() / lambda[k];
    else
      null_weight += vecs.col(k).cwiseAbs2();
  }
  for (Eigen::Index q = 0; q < n; ++q) {
    auto& s = out[free[static_cast<std::size_t>(q)]];
    if (null_weight[q] > 1e-8 || !(cov(q, q) > 0.0)) {
      s.flagged = true;
      if (s.value == 0.0) s.t = 0.0;
      continue;
    }
    s.std_err = std::sqrt(cov(q, q));
    s.t = t_statistic(s.value, *s.std_err);
  }
  return out;
}

std::vector<ParamStat> wald_table(const ObjectiveFn& f, const std::vector<std::string>& names,
                                  const Eigen::VectorXd& theta, const std::vector<bool>& fixed) {
  const auto free = free_indices(fixed);
  return inferential_table(names, theta, fixed, numerical_hessian(f, theta, free));
}

}  // namespace rbmchoice
