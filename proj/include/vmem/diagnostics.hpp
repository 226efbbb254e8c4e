#pragma once

// Residual portmanteau tests, information criteria, causality Wald tests,
// forecast losses and the Diebold-Mariano comparison.

#include "vmem/core_types.hpp"
#include "vmem/detail/math.hpp"
#include "vmem/estimation.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vmem {

struct LjungBox {
  std::size_t lag = 0;
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Multivariate (Hosking) portmanteau on eps - 1:
///   Q(m) = T(T+2) sum_{h=1}^m tr(C_h' C_0^{-1} C_h C_0^{-1}) / (T-h),  chi2 with K^2 m dof.
inline std::vector<LjungBox> ljung_box_joint(const MatrixXd& eps, const std::vector<std::size_t>& lags = {12, 22, 32}) {
  const auto T = eps.rows();
  const auto K = eps.cols();
  std::size_t max_lag = 0;
  for (auto m : lags) max_lag = std::max(max_lag, m);
  if (static_cast<std::size_t>(T) <= max_lag) throw std::invalid_argument("Ljung-Box needs T > max lag");
  const MatrixXd e = eps.array() - 1.0;
  const double Td = static_cast<double>(T);
  const MatrixXd C0 = e.transpose() * e / Td;
  Eigen::FullPivLU<MatrixXd> lu(C0);
  if (!lu.isInvertible()) throw ModelError("Ljung-Box: singular lag-0 covariance");
  const MatrixXd C0i = lu.inverse();

  std::vector<double> terms(max_lag + 1, 0.0);
  for (std::size_t h = 1; h <= max_lag; ++h) {
    const auto hh = static_cast<Eigen::Index>(h);
    const MatrixXd Ch = e.bottomRows(T - hh).transpose() * e.topRows(T - hh) / Td;
    terms[h] = (Ch.transpose() * C0i * Ch * C0i).trace() / (Td - static_cast<double>(h));
  }
  std::vector<LjungBox> out;
  for (auto m : lags) {
    LjungBox lb;
    lb.lag = m;
    double s = 0.0;
    for (std::size_t h = 1; h <= m; ++h) s += terms[h];
    lb.statistic = Td * (Td + 2.0) * s;
    lb.dof = static_cast<double>(K * K) * static_cast<double>(m);
    lb.p_value = detail::chi2_sf(lb.statistic, lb.dof);
    out.push_back(lb);
  }
  return out;
}

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

inline InformationCriteria information_criteria(double loglik, std::size_t n_free, double T) {
  const double n = static_cast<double>(n_free);
  return {-2.0 * loglik + 2.0 * n, -2.0 * loglik + n * std::log(T)};
}

struct WaldTest {
  double statistic = 0.0;
  std::size_t restrictions = 0;
  double p_value = 1.0;
};

/// Tests that the selected estimates are jointly zero.
inline WaldTest wald_zero(const VectorXd& estimates, const MatrixXd& cov, const std::vector<Eigen::Index>& idx) {
  if (idx.empty()) throw std::invalid_argument("Wald test needs at least one restriction");
  const auto r = static_cast<Eigen::Index>(idx.size());
  VectorXd b(r);
  MatrixXd V(r, r);
  for (Eigen::Index a = 0; a < r; ++a) {
    b(a) = estimates(idx[static_cast<std::size_t>(a)]);
    for (Eigen::Index c = 0; c < r; ++c) V(a, c) = cov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
  }
  Eigen::FullPivLU<MatrixXd> lu(V);
  if (!lu.isInvertible()) throw ModelError("Wald test: singular covariance block");
  WaldTest w;
  w.statistic = b.dot(lu.solve(b));
  w.restrictions = idx.size();
  w.p_value = detail::chi2_sf(w.statistic, static_cast<double>(w.restrictions));
  return w;
}

/// H0: alpha1[target, source] = beta1[target, source] = 0 (zero-based indices);
/// beta is dropped when it is not free in the spec.
inline WaldTest causality_wald(const FitResult& fit, std::size_t source, std::size_t target) {
  const std::string rc = "[" + std::to_string(target + 1) + "," + std::to_string(source + 1) + "]";
  std::vector<Eigen::Index> idx;
  if (auto a = fit.index_of("alpha1" + rc)) idx.push_back(*a);
  else throw std::invalid_argument("alpha1" + rc + " is not a free coefficient of this model");
  if (auto b = fit.index_of("beta1" + rc)) idx.push_back(*b);
  return wald_zero(fit.estimates, fit.cov, idx);
}

struct LossSeries {
  VectorXd e_N;  // (x - mu)^2 / 2
  VectorXd e_G;  // ln(x/mu) - x/mu - 1; NaN where x = 0
  std::size_t missing = 0;
};

inline LossSeries losses(const VectorXd& x, const VectorXd& mu) {
  if (x.size() != mu.size()) throw std::invalid_argument("losses: length mismatch");
  LossSeries l;
  l.e_N.resize(x.size());
  l.e_G.resize(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    if (!(mu(t) > 0.0)) throw std::domain_error("losses: forecasts must be positive");
    if (x(t) < 0.0) throw std::domain_error("losses: observations must be nonnegative");
    l.e_N(t) = 0.5 * (x(t) - mu(t)) * (x(t) - mu(t));
    if (x(t) == 0.0) {
      l.e_G(t) = std::numeric_limits<double>::quiet_NaN();
      ++l.missing;
    } else {
      const double r = x(t) / mu(t);
      l.e_G(t) = std::log(r) - r - 1.0;
    }
  }
  return l;
}

struct DieboldMariano {
  bool defined = false;
  double statistic = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};

/// d_t = lossA_t - lossB_t; DM = mean(d) / sqrt(lrv / T), Bartlett weights
/// 1 - k/h for lags k < h. Positive values favour B. Pairs with a NaN are dropped.
inline DieboldMariano diebold_mariano(const VectorXd& lossA, const VectorXd& lossB, std::size_t horizon = 1) {
  if (lossA.size() != lossB.size()) throw std::invalid_argument("Diebold-Mariano: length mismatch");
  if (horizon < 1) throw std::invalid_argument("Diebold-Mariano: horizon must be >= 1");
  std::vector<double> d;
  for (Eigen::Index t = 0; t < lossA.size(); ++t)
    if (std::isfinite(lossA(t)) && std::isfinite(lossB(t))) d.push_back(lossA(t) - lossB(t));
  if (d.size() < 10) throw std::invalid_argument("Diebold-Mariano needs at least 10 paired losses");
  DieboldMariano dm;
  dm.n = d.size();
  const double n = static_cast<double>(d.size());
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= n;
  auto gamma = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = k; t < d.size(); ++t) s += (d[t] - mean) * (d[t - k] - mean);
    return s / n;
  };
  double lrv = gamma(0);
  for (std::size_t k = 1; k < horizon && k < d.size(); ++k)
    lrv += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(horizon)) * gamma(k);
  if (!(lrv > 0.0)) return dm;
  dm.defined = true;
  dm.statistic = mean / std::sqrt(lrv / n);
  dm.p_value = detail::normal_two_sided_p(dm.statistic);
  return dm;
}

}  // namespace vmem
