#pragma once

// Small builders shared by the test binaries.

#include "vmem/core_types.hpp"
#include "vmem/mem_recursion.hpp"

#include <string>
#include <vector>

namespace vmem::tu {

inline Panel make_panel(const MatrixXd& values, const VectorXd& indicator) {
  Panel p;
  p.values = values;
  p.sign_indicator = indicator;
  for (Eigen::Index t = 0; t < values.rows(); ++t) p.dates.push_back(business_date(static_cast<std::size_t>(t)));
  for (Eigen::Index i = 0; i < values.cols(); ++i) p.labels.push_back("s" + std::to_string(i + 1));
  return p;
}

inline Panel make_panel(const MatrixXd& values) {
  VectorXd ind(values.rows());
  for (Eigen::Index t = 0; t < ind.size(); ++t) ind(t) = static_cast<double>(t % 2);
  return make_panel(values, ind);
}

/// A stationary vMEM(1,1) with the requested structures; off-diagonal
/// entries are small and positive so mu stays positive.
inline MeanParams example_theta(std::size_t K, Structure alpha, Structure beta, bool with_gamma) {
  MeanParams th = MeanParams::zeros(K, 1);
  const auto k = static_cast<Eigen::Index>(K);
  for (Eigen::Index i = 0; i < k; ++i) {
    th.alpha[0](i, i) = 0.15 + 0.03 * static_cast<double>(i);
    th.beta[0](i, i) = 0.6 - 0.05 * static_cast<double>(i);
    if (with_gamma) th.gamma[0](i, i) = 0.06;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      if (alpha == Structure::Full) th.alpha[0](i, j) = 0.03 + 0.01 * static_cast<double>(j);
      if (beta == Structure::Full) th.beta[0](i, j) = 0.02;
    }
  }
  if (beta == Structure::Absent) th.beta[0].setZero();
  if (alpha == Structure::Absent) th.alpha[0].setZero();
  const MatrixXd A = persistence_sum(th);
  // unconditional mean (1, 1.5, 2, ...)
  VectorXd m(k);
  for (Eigen::Index i = 0; i < k; ++i) m(i) = 1.0 + 0.5 * static_cast<double>(i);
  th.omega = (MatrixXd::Identity(k, k) - A) * m;
  return th;
}

inline CopulaParams example_copula(std::size_t K, double nu = 8.0) {
  VectorXd c(static_cast<Eigen::Index>(n_correlations(K)));
  for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = 0.4 + 0.1 * static_cast<double>(k % 3);
  return CopulaParams{c, nu};
}

inline MarginalParams example_phi(std::size_t K) {
  VectorXd phi(static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi(i) = 6.0 + 3.0 * static_cast<double>(i);
  return MarginalParams{phi};
}

}  // namespace vmem::tu
