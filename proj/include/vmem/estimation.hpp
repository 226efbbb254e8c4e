#pragma once

// Maximum-likelihood fitting, expectation targeting and covariance estimators.

#include "vmem/copulas.hpp"
#include "vmem/core_types.hpp"
#include "vmem/likelihood.hpp"
#include "vmem/marginals.hpp"
#include "vmem/mem_recursion.hpp"
#include "vmem/optimizer.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vmem {

struct FitOptions {
  /// Normal copula only: maximize the concentrated likelihood over (theta, phi).
  bool concentrated = false;
  OptimOptions optim;
  /// Skip the built-in start strategy and begin here.
  std::optional<FullParams> start;
  bool covariance = true;
  std::vector<double> nu_grid{4.0, 6.0, 8.0, 12.0, 20.0, 50.0, 1000.0};
};

struct Convergence {
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  std::size_t clamp_count = 0;
  std::string message;
};

struct FitResult {
  ModelSpec spec;
  FullParams full;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  std::size_t T = 0;
  bool concentrated = false;
  std::vector<std::string> names;  // free parameters
  VectorXd estimates;              // natural coordinates
  MatrixXd cov;                    // targeting sandwich when targeting, else cov_robust
  MatrixXd cov_robust;             // H^{-1} (sum s_t s_t') H^{-1}
  std::optional<MatrixXd> cov_targeting;
  VectorXd se;
  VectorXd t_stats;
  Convergence convergence;
  std::string cov_message;

  /// Free parameters, counting the concentrated-out correlations.
  std::size_t n_free() const {
    return static_cast<std::size_t>(estimates.size()) + (concentrated ? n_correlations(spec.K) : 0);
  }
  std::optional<Eigen::Index> index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return static_cast<Eigen::Index>(k);
    return std::nullopt;
  }
};

/// omega = [I - sum_l (alpha_l + beta_l + gamma_l/2)] x_bar.
inline MeanParams targeting_reparam(MeanParams theta, const VectorXd& x_bar) {
  if (static_cast<std::size_t>(x_bar.size()) != theta.K()) throw std::invalid_argument("x_bar has wrong length");
  if (!(impact(theta).spectral_radius < 1.0))
    throw NonStationaryError("expectation targeting needs a stationary parameter point");
  const auto K = x_bar.size();
  theta.omega = (MatrixXd::Identity(K, K) - persistence_sum(theta)) * x_bar;
  return theta;
}

/// Symmetrizes and clips eigenvalues at `floor`.
inline MatrixXd project_psd(const MatrixXd& S, double floor = 1e-10) {
  const MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const VectorXd lam = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Central-difference Jacobian of `g` with per-coordinate steps 1e-4 (1 + |x|).
inline MatrixXd jacobian_fd(const std::function<VectorXd(const VectorXd&)>& g, const VectorXd& x) {
  MatrixXd J;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-4 * (1.0 + std::abs(x(k)));
    VectorXd up = x, dn = x;
    up(k) += h;
    dn(k) -= h;
    const VectorXd d = (g(up) - g(dn)) / (2.0 * h);
    if (J.size() == 0) J.resize(d.size(), x.size());
    J.col(k) = d;
  }
  return J;
}

namespace detail {

inline bool is_rejection(const std::exception& e) {
  return dynamic_cast<const ModelError*>(&e) || dynamic_cast<const std::domain_error*>(&e);
}

/// One likelihood problem: a layout, the data and (under targeting) mu_bar.
class Problem {
 public:
  Problem(const Panel& panel, ParamLayout layout, bool concentrated)
      : panel_(panel), layout_(std::move(layout)), concentrated_(concentrated) {
    if (layout_.spec().targeting) mu_bar_ = panel.sample_mean();
  }

  const ParamLayout& layout() const { return layout_; }
  const std::optional<VectorXd>& mu_bar() const { return mu_bar_; }
  double T() const { return static_cast<double>(panel_.T()); }

  FullParams params(const VectorXd& natural) const { return layout_.from_natural(natural, mu_bar_); }

  Evaluation evaluate_natural(const VectorXd& natural, bool score, bool contributions = false,
                              const std::optional<VectorXd>& mu_bar_override = std::nullopt) const {
    const FullParams p = layout_.from_natural(natural, mu_bar_override ? mu_bar_override : mu_bar_);
    EvalRequest req;
    req.score = score;
    req.contributions = contributions;
    return concentrated_ ? evaluate_concentrated(panel_, p, layout_, req) : evaluate(panel_, p, layout_, req);
  }

  /// Objective for the optimizer: -l/T over packed coordinates.
  std::optional<ObjectiveValue> packed_objective(const VectorXd& packed) const {
    try {
      const VectorXd nat = layout_.packed_to_natural(packed);
      if (layout_.spec().targeting) {
        const FullParams p = params(nat);
        if (!(impact(p.theta).spectral_radius < 1.0)) return std::nullopt;
      }
      const Evaluation ev = evaluate_natural(nat, true);
      if (!std::isfinite(ev.loglik) || !ev.score.allFinite()) return std::nullopt;
      ObjectiveValue out;
      out.f = -ev.loglik / T();
      out.grad = -ev.score.cwiseProduct(layout_.packing_jacobian(nat)) / T();
      return out;
    } catch (const std::exception& e) {
      if (is_rejection(e)) return std::nullopt;
      throw;
    }
  }

  std::optional<double> loglik_at(const FullParams& p) const {
    try {
      return evaluate_natural(layout_.natural(p), false).loglik;
    } catch (const std::exception& e) {
      if (is_rejection(e)) return std::nullopt;
      throw;
    }
  }

 private:
  const Panel& panel_;
  ParamLayout layout_;
  bool concentrated_;
  std::optional<VectorXd> mu_bar_;
};

inline ModelSpec with_copula(ModelSpec s, CopulaFamily f) {
  s.copula = f;
  return s;
}

/// Starting point: diagonal alpha 0.1, beta 0.8, everything else zero, omega
/// from the sample mean; phi from residual moments.
inline FullParams default_start(const Panel& panel, const ModelSpec& spec) {
  const std::size_t K = spec.K;
  FullParams p;
  p.theta = MeanParams::zeros(K, spec.L());
  const auto k = static_cast<Eigen::Index>(K);
  if (spec.L() > 0) {
    const auto& lag = spec.lags[0];
    if (lag.alpha != Structure::Absent) p.theta.alpha[0].diagonal().setConstant(0.1);
    if (lag.beta != Structure::Absent) p.theta.beta[0].diagonal().setConstant(0.8);
    if (lag.alpha == Structure::Absent && lag.beta != Structure::Absent) p.theta.beta[0].diagonal().setConstant(0.5);
  }
  const VectorXd xbar = panel.sample_mean();
  p.theta.omega = (MatrixXd::Identity(k, k) - persistence_sum(p.theta)) * xbar;
  if (spec.targeting) p.mu_bar = xbar;
  p.copula.c_free = VectorXd::Zero(static_cast<Eigen::Index>(n_correlations(K)));
  p.copula.nu = spec.copula == CopulaFamily::StudentT ? 8.0 : std::numeric_limits<double>::infinity();
  const FilterOutput f = filter(panel, p.theta);
  p.marginal.phi.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) p.marginal.phi(i) = gamma_unit::phi_moment_estimator(VectorXd(f.eps.col(i)));
  return p;
}

struct CoreFit {
  FullParams params;
  double loglik;
  Convergence conv;
};

inline CoreFit run_optimizer(const Problem& prob, const FullParams& start, const OptimOptions& opt) {
  const ParamLayout& layout = prob.layout();
  FullParams s = start;
  if (layout.spec().targeting) s.mu_bar = prob.mu_bar();
  const VectorXd x0 = layout.pack(s);
  const auto r = minimize_bfgs([&](const VectorXd& x) { return prob.packed_objective(x); }, x0,
                               layout.lower_bounds(), opt);
  if (!std::isfinite(r.f)) throw ModelError("fit failed: " + r.message);
  CoreFit out;
  out.params = layout.unpack(r.x, prob.mu_bar());
  out.loglik = -r.f * prob.T();
  out.conv.converged = r.converged;
  out.conv.iterations = r.iterations;
  out.conv.evaluations = r.evaluations;
  out.conv.grad_norm = r.grad_norm;
  out.conv.message = r.message;
  return out;
}

/// Copies theta/phi from an independent-copula solution into a copula start.
inline FullParams lift(const FullParams& base, const VectorXd& c_free, double nu) {
  FullParams p = base;
  p.copula.c_free = c_free;
  p.copula.nu = nu;
  return p;
}

}  // namespace detail

inline MatrixXd robust_covariance(const FitResult& fit, const Panel& panel);
inline MatrixXd sandwich_covariance(const FitResult& fit, const Panel& panel);

inline FitResult finalize_fit(const Panel& panel, const ModelSpec& spec, const detail::CoreFit& core,
                              bool concentrated, bool covariance) {
  FitResult res;
  res.spec = spec;
  res.T = panel.T();
  res.concentrated = concentrated;
  res.full = core.params;
  res.loglik = core.loglik;
  res.convergence = core.conv;
  const ParamLayout layout(concentrated ? detail::with_copula(spec, CopulaFamily::Independent) : spec);
  res.names = layout.names();
  res.estimates = layout.natural(core.params);

  // clamp count and, for the concentrated route, the implied correlation
  {
    EvalRequest req;
    const Evaluation ev = concentrated ? evaluate_concentrated(panel, res.full, layout, req)
                                       : evaluate(panel, res.full, layout, req);
    res.convergence.clamp_count = ev.clamp_count;
    if (concentrated) {
      res.full.copula.c_free = c_free_from_R(*ev.R_tilde);
      res.full.copula.nu = std::numeric_limits<double>::infinity();
    }
  }

  const auto P = res.estimates.size();
  res.cov = MatrixXd::Constant(P, P, std::numeric_limits<double>::quiet_NaN());
  res.se = VectorXd::Constant(P, std::numeric_limits<double>::quiet_NaN());
  res.t_stats = res.se;
  if (!covariance) return res;
  try {
    res.cov_robust = robust_covariance(res, panel);
    res.cov = res.cov_robust;
    if (spec.targeting) {
      res.cov_targeting = sandwich_covariance(res, panel);
      res.cov = *res.cov_targeting;
    }
    res.se = res.cov.diagonal().cwiseSqrt();
    res.t_stats = res.estimates.cwiseQuotient(res.se);
  } catch (const std::exception& e) {
    res.cov_message = e.what();
  }
  return res;
}

/// Maximum-likelihood fit. Without an explicit start, the independent-copula
/// model is fitted first; copula models then start from that solution with
/// either Kendall-implied or zero correlations (whichever scores higher), and
/// the Student-T model from the Normal solution with nu picked from a grid.
inline FitResult fit(const Panel& panel, const ModelSpec& spec, const FitOptions& options = {}) {
  spec.validate();
  if (panel.K() != spec.K) throw std::invalid_argument("panel K does not match the model spec");
  if (options.concentrated && spec.copula != CopulaFamily::Normal)
    throw std::invalid_argument("the concentrated likelihood is available for the Normal copula only");

  const ModelSpec indep_spec = detail::with_copula(spec, CopulaFamily::Independent);

  if (options.start) {
    const detail::Problem prob(panel, ParamLayout(options.concentrated ? indep_spec : spec), options.concentrated);
    return finalize_fit(panel, spec, detail::run_optimizer(prob, *options.start, options.optim),
                        options.concentrated, options.covariance);
  }

  const detail::Problem indep(panel, ParamLayout(indep_spec), false);
  FullParams start = detail::default_start(panel, indep_spec);
  detail::CoreFit core = detail::run_optimizer(indep, start, options.optim);
  if (spec.copula == CopulaFamily::Independent) return finalize_fit(panel, spec, core, false, options.covariance);
  if (options.concentrated) {
    const detail::Problem conc(panel, ParamLayout(indep_spec), true);
    return finalize_fit(panel, spec, detail::run_optimizer(conc, core.params, options.optim), true,
                        options.covariance);
  }

  const FullParams base = core.params;
  const ModelSpec normal_spec = detail::with_copula(spec, CopulaFamily::Normal);
  const detail::Problem normal(panel, ParamLayout(normal_spec), false);
  const auto n_c = static_cast<Eigen::Index>(n_correlations(spec.K));
  const double inf = std::numeric_limits<double>::infinity();

  FullParams best = detail::lift(base, VectorXd::Zero(n_c), inf);
  double best_ll = normal.loglik_at(best).value_or(-inf);
  try {
    const FilterOutput f = filter(panel, base.theta, base.marginal);
    const FullParams kendall = detail::lift(base, c_free_from_R(kendall_R(f.u)), inf);
    if (const auto ll = normal.loglik_at(kendall); ll && *ll > best_ll) {
      best = kendall;
      best_ll = *ll;
    }
  } catch (const ModelError&) {
  }
  core = detail::run_optimizer(normal, best, options.optim);
  if (spec.copula == CopulaFamily::Normal) return finalize_fit(panel, spec, core, false, options.covariance);

  const detail::Problem student(panel, ParamLayout(spec), false);
  std::optional<FullParams> t_start;
  double t_best = -inf;
  for (double nu : options.nu_grid) {
    const FullParams cand = detail::lift(core.params, core.params.copula.c_free, nu);
    if (const auto ll = student.loglik_at(cand); ll && *ll > t_best) {
      t_best = *ll;
      t_start = cand;
    }
  }
  if (!t_start) throw ModelError("no admissible Student-T starting point");
  return finalize_fit(panel, spec, detail::run_optimizer(student, *t_start, options.optim), false,
                      options.covariance);
}

// ---------------------------------------------------------------------------
// Covariances

namespace detail {

inline Problem problem_for(const FitResult& fit, const Panel& panel) {
  return Problem(panel,
                 ParamLayout(fit.concentrated ? with_copula(fit.spec, CopulaFamily::Independent) : fit.spec),
                 fit.concentrated);
}

}  // namespace detail

/// H^{-1} (sum_t s_t s_t') H^{-1} with H the finite-difference Hessian of the
/// total log-likelihood, projected to PSD.
inline MatrixXd robust_covariance(const FitResult& fit, const Panel& panel) {
  const detail::Problem prob = detail::problem_for(fit, panel);
  const Evaluation ev = prob.evaluate_natural(fit.estimates, true, true);
  const MatrixXd S = ev.contributions.transpose() * ev.contributions;
  MatrixXd H = jacobian_fd([&](const VectorXd& v) { return prob.evaluate_natural(v, true).score; }, fit.estimates);
  H = 0.5 * (H + H.transpose());
  Eigen::FullPivLU<MatrixXd> lu(H);
  if (!lu.isInvertible()) throw ModelError("singular Hessian: covariance unavailable");
  const MatrixXd Hi = lu.inverse();
  return project_psd(Hi * S * Hi.transpose());
}

/// A^{-1} (B Sigma_v B' + C (Exx o Sigma_I) C') A^{-1}', the long-run variance
/// of sqrt(T)(x_bar - mu). The asymmetric term uses E(x x') = E(mu mu') o (Sigma + 11'),
/// the second moment of x, since x^(-) - x/2 = x (I_t - 1/2).
inline MatrixXd sample_mean_avar(const MeanParams& theta, const MatrixXd& Sigma_v, const MatrixXd& Sigma_I,
                                 const MatrixXd& Exx) {
  const auto K = static_cast<Eigen::Index>(theta.K());
  MatrixXd A = MatrixXd::Identity(K, K) - persistence_sum(theta);
  MatrixXd B = MatrixXd::Identity(K, K);
  MatrixXd C = MatrixXd::Zero(K, K);
  for (std::size_t l = 0; l < theta.L(); ++l) {
    B -= theta.beta[l];
    C += theta.gamma[l];
  }
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) throw ModelError("I - sum A_l is singular");
  const MatrixXd Ai = lu.inverse();
  return Ai * (B * Sigma_v * B.transpose() + C * Exx.cwiseProduct(Sigma_I) * C.transpose()) * Ai.transpose();
}

/// Common scalar indicator: Sigma_I = E[(I_t - 1/2)^2] 11' = 11'/4.
inline MatrixXd sigma_I(std::size_t K) {
  const auto k = static_cast<Eigen::Index>(K);
  return MatrixXd::Constant(k, k, 0.25);
}

struct TargetingBlocks {
  MatrixXd A, B, C_gamma;
  MatrixXd Sigma;    // sample covariance of eps
  MatrixXd Sigma_v;  // mean(mu mu') o Sigma
  MatrixXd Sigma_I;
  MatrixXd Exx;      // mean(x x')
  MatrixXd m;        // T x K, x_t - x_bar
  MatrixXd G_theta;  // mean per-t Hessian over the free parameters
  MatrixXd G_mu;     // mean per-t cross derivative with mu_bar
  MatrixXd M;        // -I
  MatrixXd Omega_tt, Omega_tm, Omega_mm;
  /// Sample means of s_t v_t' and s_t x~_t', and their elementwise standard errors.
  MatrixXd S_v, S_v_se, S_xt, S_xt_se;
};

inline TargetingBlocks targeting_blocks(const FitResult& fit, const Panel& panel) {
  if (!fit.spec.targeting) throw std::invalid_argument("targeting blocks need a targeting fit");
  const detail::Problem prob = detail::problem_for(fit, panel);
  const double T = static_cast<double>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  const VectorXd xbar = panel.sample_mean();
  const MeanParams& theta = fit.full.theta;

  TargetingBlocks b;
  b.A = MatrixXd::Identity(K, K) - persistence_sum(theta);
  b.B = MatrixXd::Identity(K, K);
  b.C_gamma = MatrixXd::Zero(K, K);
  for (std::size_t l = 0; l < theta.L(); ++l) {
    b.B -= theta.beta[l];
    b.C_gamma += theta.gamma[l];
  }
  b.M = -MatrixXd::Identity(K, K);
  b.Sigma_I = sigma_I(panel.K());

  const Evaluation ev = prob.evaluate_natural(fit.estimates, true, true);
  const MatrixXd& s = ev.contributions;
  const MatrixXd& mu = ev.filt.mu;
  const MatrixXd epsc = ev.filt.eps.rowwise() - ev.filt.eps.colwise().mean();
  b.Sigma = epsc.transpose() * epsc / T;
  b.Sigma_v = (mu.transpose() * mu / T).cwiseProduct(b.Sigma);
  b.Exx = panel.values.transpose() * panel.values / T;
  b.m = panel.values.rowwise() - xbar.transpose();

  b.G_theta = jacobian_fd([&](const VectorXd& v) { return prob.evaluate_natural(v, true).score; }, fit.estimates) / T;
  b.G_theta = 0.5 * (b.G_theta + b.G_theta.transpose());
  b.G_mu = jacobian_fd(
               [&](const VectorXd& mb) { return prob.evaluate_natural(fit.estimates, true, false, mb).score; },
               xbar) /
           T;

  // Long-run covariance of the scores with sqrt(T)(x_bar - mu), through
  // x_bar - mu ~ A^{-1}[B v_bar + C x~_bar].
  const MatrixXd v = panel.values - mu;
  MatrixXd xt(panel.T(), K);
  for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(panel.T()); ++t)
    xt.row(t) = panel.values.row(t) * (panel.sign_indicator(t) - 0.5);
  auto mean_and_se = [&](const MatrixXd& z, MatrixXd& mean, MatrixXd& se) {
    const auto P = s.cols();
    mean.resize(P, K);
    se.resize(P, K);
    for (Eigen::Index p = 0; p < P; ++p)
      for (Eigen::Index k = 0; k < K; ++k) {
        const VectorXd prod = s.col(p).cwiseProduct(z.col(k));
        const double m = prod.mean();
        mean(p, k) = m;
        se(p, k) = std::sqrt((prod.array() - m).square().sum() / (T - 1.0) / T);
      }
  };
  mean_and_se(v, b.S_v, b.S_v_se);
  mean_and_se(xt, b.S_xt, b.S_xt_se);
  const MatrixXd Ai = b.A.inverse();
  b.Omega_tt = s.transpose() * s / T;
  b.Omega_tm = (b.S_v * b.B.transpose() + b.S_xt * b.C_gamma.transpose()) * Ai.transpose();
  b.Omega_mm = sample_mean_avar(theta, b.Sigma_v, b.Sigma_I, b.Exx);
  return b;
}

/// Two-step covariance of the targeted estimator:
///   G^{-1}[O_tt + G_mu O_mt + O_tm G_mu' + G_mu O_mm G_mu'] G^{-1}' / T.
inline MatrixXd sandwich_covariance(const FitResult& fit, const Panel& panel) {
  const TargetingBlocks b = targeting_blocks(fit, panel);
  Eigen::FullPivLU<MatrixXd> lu(b.G_theta);
  if (!lu.isInvertible()) throw ModelError("singular G_theta: sandwich covariance unavailable");
  const MatrixXd Gi = lu.inverse();
  const MatrixXd GM = b.G_mu * b.M.inverse();  // = -G_mu
  const MatrixXd inner = b.Omega_tt - GM * b.Omega_tm.transpose() - b.Omega_tm * GM.transpose() +
                         GM * b.Omega_mm * GM.transpose();
  return project_psd(Gi * inner * Gi.transpose() / static_cast<double>(panel.T()));
}

inline VectorXd robust_tstats(const FitResult& fit) { return fit.estimates.cwiseQuotient(fit.cov.diagonal().cwiseSqrt()); }

}  // namespace vmem
