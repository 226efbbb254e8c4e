#pragma once

// Gamma(phi, phi) marginals: unit mean, variance 1/phi.

#include "vmem/core_types.hpp"
#include "vmem/detail/math.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace vmem::gamma_unit {

inline void check_phi(double phi) {
  if (!(phi > 0.0) || !std::isfinite(phi))
    throw std::domain_error("Gamma shape phi must be positive and finite");
}

inline double logpdf(double eps, double phi) {
  check_phi(phi);
  if (eps < 0.0) throw std::domain_error("Gamma logpdf: eps must be nonnegative");
  if (eps == 0.0) {
    if (phi < 1.0) return std::numeric_limits<double>::infinity();
    if (phi > 1.0) return -std::numeric_limits<double>::infinity();
    return 0.0;  // Exponential(1) at zero
  }
  return phi * std::log(phi) - std::lgamma(phi) + (phi - 1.0) * std::log(eps) - phi * eps;
}

inline double pdf(double eps, double phi) { return std::exp(logpdf(eps, phi)); }

inline double cdf(double eps, double phi) {
  check_phi(phi);
  if (eps < 0.0) throw std::domain_error("Gamma cdf: eps must be nonnegative");
  if (eps == 0.0) return 0.0;
  return detail::gamma_p(phi, phi * eps);
}

inline double quantile(double u, double phi) {
  check_phi(phi);
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("Gamma quantile: u must lie in (0,1)");
  // Upper-tail inversion keeps precision when u is close to one.
  if (u > 0.5) return detail::gamma_q_inv(phi, 1.0 - u) / phi;
  return detail::gamma_p_inv(phi, u) / phi;
}

/// d log f / d phi = ln(phi) - psi(phi) + ln(eps) - eps + 1.
inline double dlogpdf_dphi(double eps, double phi) {
  check_phi(phi);
  if (!(eps > 0.0)) throw std::domain_error("dlogpdf_dphi: eps must be positive");
  return std::log(phi) - detail::digamma(phi) + std::log(eps) - eps + 1.0;
}

/// d F / d phi by central differences (relative step 1e-5) with one level of
/// Richardson extrapolation.
inline double dF_dphi(double eps, double phi) {
  check_phi(phi);
  if (eps <= 0.0) return 0.0;
  const double h = 1e-5 * phi;
  auto central = [&](double step) {
    return (cdf(eps, phi + step) - cdf(eps, phi - step)) / (2.0 * step);
  };
  const double coarse = central(h);
  const double fine = central(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

/// eps * d log f / d eps + 1 = phi - eps * phi.
inline double eps_score_term(double eps, double phi) {
  if (eps < 0.0) throw std::domain_error("eps_score_term: eps must be nonnegative");
  return phi - eps * phi;
}

/// phi_hat = 1 / sample variance (divisor T) of residuals with unit mean.
inline double phi_moment_estimator(std::span<const double> eps) {
  if (eps.size() < 2) throw std::invalid_argument("phi_moment_estimator needs at least 2 observations");
  double mean = 0.0;
  for (double e : eps) mean += e;
  mean /= static_cast<double>(eps.size());
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  var /= static_cast<double>(eps.size());
  if (!(var > 0.0)) throw std::invalid_argument("phi_moment_estimator: residuals have zero variance");
  return 1.0 / var;
}

inline double phi_moment_estimator(const VectorXd& eps) {
  return phi_moment_estimator(std::span<const double>(eps.data(), static_cast<std::size_t>(eps.size())));
}

}  // namespace vmem::gamma_unit
