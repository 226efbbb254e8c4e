#pragma once

// BFGS with backtracking line search and simple lower bounds (projection plus
// an active set). The objective returns nullopt for points it refuses.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace vmem {

struct OptimOptions {
  std::size_t max_iter = 2000;
  double grad_tol = 1e-6;  // on the projected gradient, scaled by max(1, |f|)
  double step_tol = 1e-10;
  double armijo = 1e-4;
  std::size_t max_backtracks = 40;
  double max_step = 1.0;  // cap on the infinity norm of a trial step
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd grad;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  double grad_norm = std::numeric_limits<double>::infinity();
  std::string message;
};

struct ObjectiveValue {
  double f;
  Eigen::VectorXd grad;
};

using Objective = std::function<std::optional<ObjectiveValue>(const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                          const Eigen::VectorXd& lb) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) <= lb(i) && g(i) > 0.0) pg(i) = 0.0;
  return pg;
}

}  // namespace detail

inline OptimResult minimize_bfgs(const Objective& fn, Eigen::VectorXd x0, const Eigen::VectorXd& lb,
                                 const OptimOptions& opt = {}) {
  using Eigen::VectorXd;
  const auto n = x0.size();
  OptimResult res;
  x0 = x0.cwiseMax(lb);
  auto first = fn(x0);
  ++res.evaluations;
  if (!first) {
    res.x = x0;
    res.message = "objective undefined at the starting point";
    return res;
  }
  VectorXd x = x0, g = first->grad;
  double f = first->f;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;

  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    const VectorXd pg = detail::projected_gradient(x, g, lb);
    res.grad_norm = pg.lpNorm<Eigen::Infinity>();
    if (res.grad_norm < opt.grad_tol * std::max(1.0, std::abs(f))) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }

    // Search direction on the free variables only.
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(x(i) <= lb(i) && g(i) > 0.0)) free.push_back(i);
    VectorXd d = VectorXd::Zero(n);
    for (auto i : free)
      for (auto j : free) d(i) -= H(i, j) * g(j);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      for (auto i : free) d(i) = -g(i);
      H.setIdentity();
      fresh = true;
      slope = g.dot(d);
    }
    const double dmax = d.lpNorm<Eigen::Infinity>();
    double a = dmax > opt.max_step ? opt.max_step / dmax : 1.0;

    bool accepted = false;
    VectorXd x_new;
    std::optional<ObjectiveValue> trial;
    for (std::size_t k = 0; k < opt.max_backtracks; ++k, a *= 0.5) {
      x_new = (x + a * d).cwiseMax(lb);
      trial = fn(x_new);
      ++res.evaluations;
      if (trial && std::isfinite(trial->f) && trial->f <= f + opt.armijo * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {  // retry once along steepest descent
        H.setIdentity();
        fresh = true;
        continue;
      }
      res.message = "line search failed";
      break;
    }

    const VectorXd s = x_new - x;
    const VectorXd y = trial->grad - g;
    const double step = s.lpNorm<Eigen::Infinity>();
    x = x_new;
    f = trial->f;
    g = trial->grad;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) H *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
      fresh = false;
    }
    if (step < opt.step_tol) {
      // a tiny quasi-Newton step usually means a poor H; only a stalled
      // steepest-descent step ends the run
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        continue;
      }
      res.grad_norm = detail::projected_gradient(x, g, lb).lpNorm<Eigen::Infinity>();
      res.converged = res.grad_norm < 1e-3 * std::max(1.0, std::abs(f));
      res.message = res.converged ? "step tolerance reached" : "stalled: no progress along steepest descent";
      ++res.iterations;
      break;
    }
  }
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.x = x;
  res.f = f;
  res.grad = g;
  res.grad_norm = detail::projected_gradient(x, g, lb).lpNorm<Eigen::Infinity>();
  return res;
}

}  // namespace vmem
