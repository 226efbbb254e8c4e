#pragma once

#include "vmem/core_types.hpp"
#include "vmem/detail/math.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace vmem {

/// c, D, C = cD and R = D c' c D for a vector of free upper-triangular entries.
struct CorrelationFactor {
  MatrixXd c;  // unit upper-triangular
  VectorXd D;
  MatrixXd C;  // upper-triangular with columns of unit norm
  MatrixXd R;

  /// 0.5 * ln|R| = sum_{i >= 2} ln D_i.
  double half_log_det() const { return D.array().log().sum(); }
};

inline CorrelationFactor build_R(const VectorXd& c_free, std::size_t K) {
  if (static_cast<std::size_t>(c_free.size()) != n_correlations(K))
    throw std::invalid_argument("build_R: c_free must have K(K-1)/2 entries");
  const auto k = static_cast<Eigen::Index>(K);
  CorrelationFactor f;
  f.c = MatrixXd::Identity(k, k);
  for (std::size_t j = 1; j < K; ++j)
    for (std::size_t i = 0; i < j; ++i)
      f.c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c_free(static_cast<Eigen::Index>(c_index(i, j)));
  f.D.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double s = 1.0;
    for (Eigen::Index i = 0; i < j; ++i) s += f.c(i, j) * f.c(i, j);
    f.D(j) = 1.0 / std::sqrt(s);
  }
  f.C = f.c * f.D.asDiagonal();
  f.R = f.C.transpose() * f.C;
  f.R.diagonal().setOnes();  // exact unit diagonal; off-diagonals untouched
  return f;
}

/// Inverse of build_R for a positive definite correlation matrix: C' is the
/// Cholesky factor of R, c_ij = C_ij / C_jj.
inline VectorXd c_free_from_R(const MatrixXd& R) {
  const auto K = static_cast<std::size_t>(R.rows());
  Eigen::LLT<MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw ModelError("c_free_from_R: matrix is not positive definite");
  const MatrixXd C = llt.matrixU();
  VectorXd out(static_cast<Eigen::Index>(n_correlations(K)));
  for (std::size_t j = 1; j < K; ++j)
    for (std::size_t i = 0; i < j; ++i)
      out(static_cast<Eigen::Index>(c_index(i, j))) =
          C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / C(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
  return out;
}

/// Projects a symmetric matrix with unit-ish diagonal onto a positive definite
/// correlation matrix: eigenvalues clipped at `floor`, then rescaled to unit diagonal.
inline MatrixXd nearest_correlation(const MatrixXd& S, double floor = 1e-6) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
  VectorXd ev = es.eigenvalues().cwiseMax(floor);
  MatrixXd P = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const VectorXd s = P.diagonal().cwiseSqrt().cwiseInverse();
  P = s.asDiagonal() * P * s.asDiagonal();
  P.diagonal().setOnes();
  return P;
}

constexpr double kUClamp = 1e-12;

/// Normal, Student-T (or the trivial independent) copula written in the
/// elliptical form ln c = ln K* - sum ln D_i + ln g1(q'R^{-1}q) - sum ln g2(q_i^2).
class EllipticalCopula {
 public:
  struct Work {
    VectorXd q;        // G^{-1}(u)
    VectorXd q_tilde;  // C'^{-1} q
    VectorXd q_star;   // R^{-1} q
    double qq = 0.0;   // q' R^{-1} q
  };

  EllipticalCopula(CopulaFamily family, const CopulaParams& xi, std::size_t K)
      : family_(family), K_(K), nu_(xi.nu) {
    if (family_ == CopulaFamily::Independent) return;
    if (family_ == CopulaFamily::StudentT && !(nu_ > 0.0))
      throw std::invalid_argument("Student-T copula needs nu > 0");
    factor_ = build_R(xi.c_free, K);
    half_log_det_ = factor_.half_log_det();
    if (K_ > 1) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(factor_.R, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < 1e-10)
        throw ModelError("copula correlation matrix is numerically singular");
    }
    if (family_ == CopulaFamily::StudentT) {
      const double k = static_cast<double>(K_);
      log_kstar_ = std::lgamma(0.5 * (nu_ + k)) + (k - 1.0) * std::lgamma(0.5 * nu_) -
                   k * std::lgamma(0.5 * (nu_ + 1.0));
      dlog_kstar_ = 0.5 * (detail::digamma(0.5 * (nu_ + k)) + (k - 1.0) * detail::digamma(0.5 * nu_) -
                           k * detail::digamma(0.5 * (nu_ + 1.0)));
    }
  }

  CopulaFamily family() const { return family_; }
  std::size_t K() const { return K_; }
  double nu() const { return nu_; }
  const CorrelationFactor& factor() const { return factor_; }
  bool independent() const { return family_ == CopulaFamily::Independent; }

  double log_kstar() const { return log_kstar_; }
  /// d ln K* / d nu = 0.5 [psi((nu+K)/2) + (K-1) psi(nu/2) - K psi((nu+1)/2)].
  double dlog_kstar_dnu() const { return dlog_kstar_; }

  // Standardized marginal of the generating distribution.
  double marginal_quantile(double u) const {
    return family_ == CopulaFamily::StudentT ? detail::t_quantile(u, nu_) : detail::normal_quantile(u);
  }
  double marginal_pdf(double q) const {
    return family_ == CopulaFamily::StudentT ? std::exp(detail::t_logpdf(q, nu_)) : detail::normal_pdf(q);
  }
  double marginal_cdf(double q) const {
    return family_ == CopulaFamily::StudentT ? detail::t_cdf(q, nu_) : detail::normal_cdf(q);
  }

  double log_g1(double x) const {
    if (family_ == CopulaFamily::StudentT)
      return -0.5 * (nu_ + static_cast<double>(K_)) * std::log1p(x / nu_);
    return -0.5 * x;
  }
  double dlog_g1(double x) const {
    if (family_ == CopulaFamily::StudentT) return -0.5 * (nu_ + static_cast<double>(K_)) / (nu_ + x);
    return -0.5;
  }
  /// ln g2(q^2).
  double log_g2(double q) const {
    if (family_ == CopulaFamily::StudentT) return -0.5 * (nu_ + 1.0) * std::log1p(q * q / nu_);
    return -0.5 * q * q;
  }
  /// d/dq ln g2(q^2).
  double dlog_g2_dq(double q) const {
    if (family_ == CopulaFamily::StudentT) return -(nu_ + 1.0) * q / (nu_ + q * q);
    return -q;
  }

  static double clamp_u(double u, std::size_t* clamp_count = nullptr) {
    if (u < kUClamp || u > 1.0 - kUClamp) {
      if (clamp_count) ++*clamp_count;
      return std::clamp(u, kUClamp, 1.0 - kUClamp);
    }
    return u;
  }

  VectorXd quantiles(const VectorXd& u, std::size_t* clamp_count = nullptr) const {
    VectorXd q(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) q(i) = marginal_quantile(clamp_u(u(i), clamp_count));
    return q;
  }

  Work work_from_q(const VectorXd& q) const {
    Work w;
    w.q = q;
    w.q_tilde = factor_.C.transpose().triangularView<Eigen::Lower>().solve(q);
    w.q_star = factor_.C.triangularView<Eigen::Upper>().solve(w.q_tilde);
    w.qq = w.q_tilde.squaredNorm();
    return w;
  }

  Work work(const VectorXd& u, std::size_t* clamp_count = nullptr) const {
    return work_from_q(quantiles(u, clamp_count));
  }

  /// ln g1(qq) - sum_i ln g2(q_i^2): the part of ln c that moves with nu at fixed q.
  double shape_terms(const Work& w) const {
    double s = log_g1(w.qq);
    for (Eigen::Index i = 0; i < w.q.size(); ++i) s -= log_g2(w.q(i));
    return s;
  }

  double logdensity(const Work& w) const {
    if (independent()) return 0.0;
    return log_kstar_ - half_log_det_ + shape_terms(w);
  }

  /// d_i = d ln c / d u_i = [2 q*_i g1'(qq) - d ln g2(q_i^2)/dq_i] / g(q_i).
  VectorXd grad_u(const Work& w) const {
    const auto k = static_cast<Eigen::Index>(K_);
    if (independent()) return VectorXd::Zero(k);
    VectorXd d(k);
    const double g1p = dlog_g1(w.qq);
    for (Eigen::Index i = 0; i < k; ++i)
      d(i) = (2.0 * w.q_star(i) * g1p - dlog_g2_dq(w.q(i))) / marginal_pdf(w.q(i));
    return d;
  }

  /// Per-observation gradient of ln c in c_free:
  /// D_j C_ij + 2 D_j q*_j (C_ij q_j - q~_i) g1'(qq).
  VectorXd grad_c(const Work& w) const {
    VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(n_correlations(K_)));
    if (independent()) return g;
    const double g1p = dlog_g1(w.qq);
    for (std::size_t j = 1; j < K_; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double Dj = factor_.D(jj);
      for (std::size_t i = 0; i < j; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double Cij = factor_.C(ii, jj);
        g(static_cast<Eigen::Index>(c_index(i, j))) =
            Dj * Cij + 2.0 * Dj * w.q_star(jj) * (Cij * w.q(jj) - w.q_tilde(ii)) * g1p;
      }
    }
    return g;
  }

 private:
  CopulaFamily family_;
  std::size_t K_;
  double nu_;
  CorrelationFactor factor_;
  double half_log_det_ = 0.0;
  double log_kstar_ = 0.0;
  double dlog_kstar_ = 0.0;
};

// ---------------------------------------------------------------------------
// Free-function surface

inline double copula_logdensity(const VectorXd& u, const CopulaParams& xi, CopulaFamily family,
                                std::size_t* clamp_count = nullptr) {
  if (family == CopulaFamily::Independent) return 0.0;
  EllipticalCopula cop(family, xi, static_cast<std::size_t>(u.size()));
  return cop.logdensity(cop.work(u, clamp_count));
}

inline VectorXd grad_u_logc(const VectorXd& u, const CopulaParams& xi, CopulaFamily family) {
  EllipticalCopula cop(family, xi, static_cast<std::size_t>(u.size()));
  if (cop.independent()) return VectorXd::Zero(u.size());
  return cop.grad_u(cop.work(u));
}

/// Sum over rows of U (T x K) of ln c(u_t).
inline double copula_loglik(const MatrixXd& U, const CopulaParams& xi, CopulaFamily family) {
  if (family == CopulaFamily::Independent) return 0.0;
  EllipticalCopula cop(family, xi, static_cast<std::size_t>(U.cols()));
  double s = 0.0;
  for (Eigen::Index t = 0; t < U.rows(); ++t) s += cop.logdensity(cop.work(U.row(t).transpose()));
  return s;
}

/// Gradient of the copula log-likelihood over c_free.
inline VectorXd score_c(const MatrixXd& U, const CopulaParams& xi, CopulaFamily family) {
  EllipticalCopula cop(family, xi, static_cast<std::size_t>(U.cols()));
  VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(n_correlations(cop.K())));
  if (cop.independent()) return g;
  for (Eigen::Index t = 0; t < U.rows(); ++t) g += cop.grad_c(cop.work(U.row(t).transpose()));
  return g;
}

/// Relative step used for the numerical nu derivative of the shape terms.
constexpr double kNuStep = 1e-4;

/// Per-observation d ln c / d nu: analytic ln K* term plus a central difference
/// of ln g1 - sum ln g2 with the quantiles recomputed at nu +/- h.
inline double dlogc_dnu(const VectorXd& u, const EllipticalCopula& cop, const EllipticalCopula& up,
                        const EllipticalCopula& down) {
  const double h = up.nu() - cop.nu();
  return cop.dlog_kstar_dnu() + (up.shape_terms(up.work(u)) - down.shape_terms(down.work(u))) / (2.0 * h);
}

inline double score_nu(const MatrixXd& U, const CopulaParams& xi) {
  const auto K = static_cast<std::size_t>(U.cols());
  const double h = kNuStep * xi.nu;
  EllipticalCopula cop(CopulaFamily::StudentT, xi, K);
  EllipticalCopula up(CopulaFamily::StudentT, CopulaParams{xi.c_free, xi.nu + h}, K);
  EllipticalCopula down(CopulaFamily::StudentT, CopulaParams{xi.c_free, xi.nu - h}, K);
  double s = 0.0;
  for (Eigen::Index t = 0; t < U.rows(); ++t) s += dlogc_dnu(U.row(t).transpose(), cop, up, down);
  return s;
}

/// n x K draws of u from the copula.
template <class Rng>
MatrixXd sample_copula(const CopulaParams& xi, CopulaFamily family, std::size_t K, std::size_t n, Rng& rng) {
  const auto kk = static_cast<Eigen::Index>(K);
  MatrixXd U(static_cast<Eigen::Index>(n), kk);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (family == CopulaFamily::Independent) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index t = 0; t < U.rows(); ++t)
      for (Eigen::Index i = 0; i < kk; ++i) U(t, i) = unif(rng);
    return U;
  }
  const CorrelationFactor f = build_R(xi.c_free, K);
  const MatrixXd Lower = f.C.transpose();  // R = C'C
  std::chi_squared_distribution<double> chi2(family == CopulaFamily::StudentT ? xi.nu : 1.0);
  VectorXd w(kk);
  for (Eigen::Index t = 0; t < U.rows(); ++t) {
    for (Eigen::Index i = 0; i < kk; ++i) w(i) = normal(rng);
    VectorXd z = Lower.triangularView<Eigen::Lower>() * w;
    if (family == CopulaFamily::StudentT) {
      z *= std::sqrt(xi.nu / chi2(rng));
      for (Eigen::Index i = 0; i < kk; ++i) U(t, i) = detail::t_cdf(z(i), xi.nu);
    } else {
      for (Eigen::Index i = 0; i < kk; ++i) U(t, i) = detail::normal_cdf(z(i));
    }
  }
  return U;
}

/// Kendall tau-b between two equally long samples, O(n^2).
inline double kendall_tau(const VectorXd& x, const VectorXd& y) {
  const Eigen::Index n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("kendall_tau needs two samples of equal length >= 2");
  double concordant = 0.0, discordant = 0.0, ties_x = 0.0, ties_y = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double dx = x(a) - x(b);
      const double dy = y(a) - y(b);
      const double s = dx * dy;
      if (s > 0) concordant += 1;
      else if (s < 0) discordant += 1;
      else {
        if (dx == 0) ties_x += 1;
        if (dy == 0) ties_y += 1;
      }
    }
  }
  const double n0 = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double denom = std::sqrt((n0 - ties_x) * (n0 - ties_y));
  if (denom == 0.0) return 0.0;
  return (concordant - discordant) / denom;
}

/// Correlation matrix from pairwise Kendall tau via R_ij = sin(pi tau / 2),
/// projected to the nearest correlation matrix when not positive definite.
inline MatrixXd kendall_R(const MatrixXd& X) {
  if (X.rows() < 2) throw std::invalid_argument("kendall_R needs T >= 2");
  const Eigen::Index K = X.cols();
  MatrixXd R = MatrixXd::Identity(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = i + 1; j < K; ++j) {
      const double tau = kendall_tau(X.col(i), X.col(j));
      R(i, j) = R(j, i) = std::sin(std::numbers::pi * tau / 2.0);
    }
  if (K > 1) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(R, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-6) R = nearest_correlation(R, 1e-6);
  }
  return R;
}

}  // namespace vmem
