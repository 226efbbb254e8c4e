#pragma once

// Log-likelihood of the copula vMEM with Gamma marginals,
//   l = sum_t [ ln c(u_t) + sum_i ln f_i(eps_ti) - sum_i ln mu_ti ],
// its analytic score, and the concentrated Normal-copula variant.

#include "vmem/copulas.hpp"
#include "vmem/core_types.hpp"
#include "vmem/marginals.hpp"
#include "vmem/mem_recursion.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace vmem {

struct EvalRequest {
  bool score = false;
  bool contributions = false;  // per-t score rows
  /// Pre-sample level for the filter; defaults to the panel sample mean.
  std::optional<VectorXd> presample;
  /// Full pre-sample state; takes precedence over `presample`.
  std::optional<LagState> presample_state;
};

struct Evaluation {
  double loglik = 0.0;
  VectorXd score;          // natural coordinates, ParamLayout order
  MatrixXd contributions;  // T x P, rows sum to `score`
  FilterOutput filt;
  std::size_t clamp_count = 0;
  /// Concentrated evaluations only: the normalized correlation estimate.
  std::optional<MatrixXd> R_tilde;
};

namespace detail {

/// Per-t copula/marginal pieces shared by the full and concentrated paths.
struct ErrorTerms {
  MatrixXd d;       // T x K, d ln c / d u
  MatrixXd pdf;     // f_i(eps)
  double log_marginals = 0.0;
};

/// Assembles theta- and phi-blocks of the score from d_t:
///   w_ti = eps f(eps) d + phi - eps phi,   s_theta = -sum_i J_t(i, .) w_ti / mu_ti,
///   s_phi_i = dF/dphi d_ti + d ln f / d phi.
inline void assemble_mean_and_marginal_scores(const Panel& panel, const FullParams& p, const ParamLayout& layout,
                                              const FilterOutput& filt, const MatrixXd& d, const MatrixXd& pdf,
                                              const LagState& pre, MatrixXd& contrib) {
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  const auto& entries = layout.entries();
  const auto P_theta = static_cast<Eigen::Index>(layout.theta_size());
  const std::size_t L = p.theta.L();
  const bool targeting = layout.spec().targeting;
  const VectorXd mbar = targeting ? *p.mu_bar : VectorXd::Zero(K);

  MatrixXd w(T, K);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < K; ++i) {
      const double e = filt.eps(t, i);
      const double phi = p.marginal.phi(i);
      w(t, i) = e * pdf(t, i) * d(t, i) + gamma_unit::eps_score_term(e, phi);
    }

  // Forward recursion for J_t = d mu_t / d theta' (K x P_theta); pre-sample J = 0.
  std::vector<MatrixXd> J_hist(L, MatrixXd::Zero(K, P_theta));
  MatrixXd J(K, P_theta);
  auto x_lag = [&](Eigen::Index s, Eigen::Index j) {
    return s >= 0 ? panel.values(s, j) : pre.x(-s - 1, j);
  };
  auto xneg_lag = [&](Eigen::Index s, Eigen::Index j) {
    return s >= 0 ? panel.values(s, j) * panel.sign_indicator(s) : pre.x_neg(-s - 1, j);
  };
  auto mu_lag = [&](Eigen::Index s, Eigen::Index j) { return s >= 0 ? filt.mu(s, j) : pre.mu(-s - 1, j); };

  for (Eigen::Index t = 0; t < T; ++t) {
    J.setZero();
    for (Eigen::Index k = 0; k < P_theta; ++k) {
      const auto& e = entries[static_cast<std::size_t>(k)];
      const auto i = static_cast<Eigen::Index>(e.row);
      const auto j = static_cast<Eigen::Index>(e.col);
      const Eigen::Index s = t - static_cast<Eigen::Index>(e.lag) - 1;
      switch (e.block) {
        case Block::Omega: J(i, k) = 1.0; break;
        case Block::Alpha: J(i, k) = x_lag(s, j) - (targeting ? mbar(j) : 0.0); break;
        case Block::Gamma: J(i, k) = xneg_lag(s, j) - (targeting ? 0.5 * mbar(j) : 0.0); break;
        case Block::Beta: J(i, k) = mu_lag(s, j) - (targeting ? mbar(j) : 0.0); break;
        default: break;
      }
    }
    for (std::size_t l = 0; l < L; ++l)
      if (t - static_cast<Eigen::Index>(l) - 1 >= 0) J.noalias() += p.theta.beta[l] * J_hist[l];
    if (L > 0) {
      for (std::size_t l = L - 1; l > 0; --l) J_hist[l] = J_hist[l - 1];
      J_hist[0] = J;
    }
    for (Eigen::Index k = 0; k < P_theta; ++k) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < K; ++i) s -= J(i, k) * w(t, i) / filt.mu(t, i);
      contrib(t, k) = s;
    }
  }

  const auto phi_off = static_cast<Eigen::Index>(layout.phi_offset());
  for (Eigen::Index i = 0; i < K; ++i) {
    const double phi = p.marginal.phi(i);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double e = filt.eps(t, i);
      contrib(t, phi_off + i) = gamma_unit::dF_dphi(e, phi) * d(t, i) + gamma_unit::dlogpdf_dphi(e, phi);
    }
  }
}

inline LagState resolve_presample(const Panel& panel, const MeanParams& theta, const EvalRequest& req) {
  if (req.presample_state) return *req.presample_state;
  return LagState::constant(req.presample ? *req.presample : panel.sample_mean(), theta.L());
}

}  // namespace detail

/// Full log-likelihood and (optionally) the analytic score in natural coordinates.
inline Evaluation evaluate(const Panel& panel, const FullParams& p, const ParamLayout& layout,
                           const EvalRequest& req = {}) {
  const ModelSpec& spec = layout.spec();
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  if (static_cast<std::size_t>(K) != spec.K) throw std::invalid_argument("panel K does not match the model spec");
  const LagState pre = detail::resolve_presample(panel, p.theta, req);

  Evaluation ev;
  ev.filt = filter(panel, p.theta, pre, p.marginal);
  const bool want_score = req.score || req.contributions;

  MatrixXd pdf(T, K);
  double ll = 0.0;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < K; ++i) {
      const double lf = gamma_unit::logpdf(ev.filt.eps(t, i), p.marginal.phi(i));
      ll += lf - std::log(ev.filt.mu(t, i));
      pdf(t, i) = std::exp(lf);
    }

  const std::size_t P = layout.size();
  MatrixXd contrib;
  if (want_score) contrib = MatrixXd::Zero(T, static_cast<Eigen::Index>(P));
  MatrixXd d = MatrixXd::Zero(T, K);

  if (spec.copula != CopulaFamily::Independent) {
    const EllipticalCopula cop(spec.copula, p.copula, spec.K);
    std::optional<EllipticalCopula> up, down;
    if (want_score && spec.copula == CopulaFamily::StudentT) {
      const double h = kNuStep * p.copula.nu;
      up.emplace(spec.copula, CopulaParams{p.copula.c_free, p.copula.nu + h}, spec.K);
      down.emplace(spec.copula, CopulaParams{p.copula.c_free, p.copula.nu - h}, spec.K);
    }
    const auto c_off = static_cast<Eigen::Index>(layout.theta_size());
    const auto n_c = static_cast<Eigen::Index>(n_correlations(spec.K));
    const auto nu_idx = static_cast<Eigen::Index>(layout.nu_index());
    for (Eigen::Index t = 0; t < T; ++t) {
      VectorXd u = ev.filt.u.row(t).transpose();
      for (Eigen::Index i = 0; i < K; ++i) u(i) = EllipticalCopula::clamp_u(u(i), &ev.clamp_count);
      const auto work = cop.work(u);
      ll += cop.logdensity(work);
      if (want_score) {
        d.row(t) = cop.grad_u(work).transpose();
        contrib.block(t, c_off, 1, n_c) = cop.grad_c(work).transpose();
        if (up) contrib(t, nu_idx) = dlogc_dnu(u, cop, *up, *down);
      }
    }
  }
  ev.loglik = ll;

  if (want_score) {
    detail::assemble_mean_and_marginal_scores(panel, p, layout, ev.filt, d, pdf, pre, contrib);
    ev.score = contrib.colwise().sum().transpose();
    if (req.contributions) ev.contributions = std::move(contrib);
  }
  return ev;
}

inline double loglik(const Panel& panel, const FullParams& p, const ModelSpec& spec) {
  return evaluate(panel, p, ParamLayout(spec)).loglik;
}

/// Gradient over all free parameters (natural coordinates, ParamLayout order).
inline VectorXd score(const Panel& panel, const FullParams& p, const ModelSpec& spec) {
  EvalRequest req;
  req.score = true;
  return evaluate(panel, p, ParamLayout(spec), req).score;
}

// ---------------------------------------------------------------------------
// Concentrated Normal-copula likelihood

struct ConcentratedPieces {
  MatrixXd q;        // T x K normal scores
  MatrixXd Q;        // q'q / T
  VectorXd DQ;       // diag(Q)
  MatrixXd R_tilde;  // D_Q^{-1/2} Q D_Q^{-1/2}
};

inline ConcentratedPieces concentrated_pieces(const MatrixXd& U, std::size_t* clamp_count = nullptr) {
  ConcentratedPieces c;
  c.q.resize(U.rows(), U.cols());
  for (Eigen::Index t = 0; t < U.rows(); ++t)
    for (Eigen::Index i = 0; i < U.cols(); ++i)
      c.q(t, i) = detail::normal_quantile(EllipticalCopula::clamp_u(U(t, i), clamp_count));
  c.Q = (c.q.transpose() * c.q) / static_cast<double>(U.rows());
  c.DQ = c.Q.diagonal();
  const VectorXd s = c.DQ.cwiseSqrt().cwiseInverse();
  c.R_tilde = s.asDiagonal() * c.Q * s.asDiagonal();
  c.R_tilde.diagonal().setOnes();
  return c;
}

/// (T/2)[-ln|R~| - tr(R~^{-1} Q) + tr(Q)].
inline double concentrated_copula_term(const ConcentratedPieces& c, Eigen::Index T) {
  Eigen::LLT<MatrixXd> llt(c.R_tilde);
  if (llt.info() != Eigen::Success) throw ModelError("normalized correlation estimate is singular");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double tr = llt.solve(c.Q).trace();
  return 0.5 * static_cast<double>(T) * (-logdet - tr + c.Q.trace());
}

/// Gradient of [-ln|R~| - tr(R~^{-1}Q) + tr Q] with respect to Q:
///   Q^{-1} D^{1/2} Q D^{1/2} Q^{-1} - Q^{-1} + I - R~^{-1} + D^{-1} - D^{-1/2} diag(Q^{-1} D^{1/2} Q).
inline MatrixXd concentrated_C(const ConcentratedPieces& c) {
  const auto K = c.Q.rows();
  const MatrixXd Qinv = c.Q.inverse();
  const VectorXd dh = c.DQ.cwiseSqrt();
  const MatrixXd Dh = dh.asDiagonal();
  const MatrixXd M = Qinv * Dh * c.Q;
  MatrixXd C = M * Dh * Qinv - Qinv + MatrixXd::Identity(K, K) - c.R_tilde.inverse();
  for (Eigen::Index i = 0; i < K; ++i) C(i, i) += 1.0 / c.DQ(i) - M(i, i) / dh(i);
  return C;
}

/// Concentrated Normal-copula log-likelihood over (theta, phi). `layout` must
/// describe an independent-copula parameterization (no c or nu entries).
inline Evaluation evaluate_concentrated(const Panel& panel, const FullParams& p, const ParamLayout& layout,
                                        const EvalRequest& req = {}) {
  if (layout.spec().copula != CopulaFamily::Independent)
    throw std::invalid_argument("concentrated evaluation expects a layout without copula parameters");
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  const LagState pre = detail::resolve_presample(panel, p.theta, req);

  Evaluation ev;
  ev.filt = filter(panel, p.theta, pre, p.marginal);
  MatrixXd pdf(T, K);
  double ll = 0.0;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < K; ++i) {
      const double lf = gamma_unit::logpdf(ev.filt.eps(t, i), p.marginal.phi(i));
      ll += lf - std::log(ev.filt.mu(t, i));
      pdf(t, i) = std::exp(lf);
    }
  const ConcentratedPieces cp = concentrated_pieces(ev.filt.u, &ev.clamp_count);
  ll += concentrated_copula_term(cp, T);
  ev.loglik = ll;
  ev.R_tilde = cp.R_tilde;

  if (req.score || req.contributions) {
    const MatrixXd C = concentrated_C(cp);
    MatrixXd d(T, K);
    for (Eigen::Index t = 0; t < T; ++t) {
      const VectorXd Cq = C * cp.q.row(t).transpose();
      for (Eigen::Index i = 0; i < K; ++i) d(t, i) = Cq(i) / detail::normal_pdf(cp.q(t, i));
    }
    MatrixXd contrib = MatrixXd::Zero(T, static_cast<Eigen::Index>(layout.size()));
    detail::assemble_mean_and_marginal_scores(panel, p, layout, ev.filt, d, pdf, pre, contrib);
    ev.score = contrib.colwise().sum().transpose();
    if (req.contributions) ev.contributions = std::move(contrib);
  }
  return ev;
}

struct ConcentratedValue {
  double value = 0.0;
  MatrixXd R_tilde;
};

/// theta must match `spec` (whose copula field is ignored).
inline ConcentratedValue concentrated_loglik_normal(const Panel& panel, const MeanParams& theta,
                                                    const MarginalParams& phi, const ModelSpec& spec) {
  ModelSpec s = spec;
  s.copula = CopulaFamily::Independent;
  FullParams p;
  p.theta = theta;
  p.marginal = phi;
  const auto ev = evaluate_concentrated(panel, p, ParamLayout(s));
  return {ev.loglik, *ev.R_tilde};
}

/// Gradient over (theta, phi) of the concentrated log-likelihood, in the
/// layout order of `spec` with an independent copula. Under targeting the
/// caller supplies mu_bar through `p`.
inline VectorXd concentrated_score_normal(const Panel& panel, const FullParams& p, const ModelSpec& spec) {
  ModelSpec s = spec;
  s.copula = CopulaFamily::Independent;
  EvalRequest req;
  req.score = true;
  return evaluate_concentrated(panel, p, ParamLayout(s), req).score;
}

/// The unconstrained plug-in variant (T/2)[-ln|Q| - K + tr Q] + marginal terms.
inline double concentrated_loglik_unconstrained(const Panel& panel, const MeanParams& theta,
                                                const MarginalParams& phi) {
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  const FilterOutput f = filter(panel, theta, phi);
  double ll = 0.0;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < K; ++i)
      ll += gamma_unit::logpdf(f.eps(t, i), phi.phi(i)) - std::log(f.mu(t, i));
  const ConcentratedPieces cp = concentrated_pieces(f.u);
  const double logdet = std::log(cp.Q.determinant());
  return ll + 0.5 * static_cast<double>(T) * (-logdet - static_cast<double>(K) + cp.Q.trace());
}

/// Root in [-1, 1] of R^3 - R^2 s12 + R (s11 + s22 - 1) - s12 = 0, the
/// first-order condition of the constrained ML correlation for K = 2. When
/// several roots qualify, the one with the highest Normal-copula likelihood wins.
inline double cubic_check_K2(const MatrixXd& q) {
  if (q.cols() != 2) throw std::invalid_argument("cubic_check_K2 needs K = 2");
  const double T = static_cast<double>(q.rows());
  const double s11 = q.col(0).squaredNorm() / T;
  const double s22 = q.col(1).squaredNorm() / T;
  const double s12 = q.col(0).dot(q.col(1)) / T;
  Eigen::Matrix3d companion;
  // monic cubic R^3 + a2 R^2 + a1 R + a0
  const double a2 = -s12, a1 = s11 + s22 - 1.0, a0 = -s12;
  companion << -a2, -a1, -a0, 1, 0, 0, 0, 1, 0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(companion, false);
  auto cubic = [&](double r) { return ((r + a2) * r + a1) * r + a0; };
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const auto z = es.eigenvalues()(k);
    if (std::abs(z.imag()) > 1e-8) continue;
    double r = z.real();
    if (r < -1.0 - 1e-9 || r > 1.0 + 1e-9) continue;
    for (int it = 0; it < 3; ++it) {  // polish
      const double dp = (3.0 * r + 2.0 * a2) * r + a1;
      if (dp == 0.0) break;
      r -= cubic(r) / dp;
    }
    r = std::clamp(r, -1.0, 1.0);
    const double one_m = 1.0 - r * r;
    const double ll = one_m > 0.0 ? -0.5 * std::log(one_m) - 0.5 * (s11 - 2.0 * r * s12 + s22) / one_m
                                  : std::numeric_limits<double>::infinity();
    if (std::isnan(best) || ll > best_ll) {
      best = r;
      best_ll = ll;
    }
  }
  if (std::isnan(best)) throw ModelError("cubic first-order condition has no root in [-1, 1]");
  return best;
}

}  // namespace vmem
