#pragma once

// Conditional-mean recursion
//   mu_t = omega + sum_l [alpha_l x_{t-l} + gamma_l x^(-)_{t-l} + beta_l mu_{t-l}],
// its companion form, forecasting and simulation.

#include "vmem/copulas.hpp"
#include "vmem/core_types.hpp"
#include "vmem/marginals.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace vmem {

class NonStationaryError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct ImpactMatrices {
  std::vector<MatrixXd> A;  // A_l = alpha_l + beta_l + gamma_l / 2
  MatrixXd A_star;          // KL x KL companion matrix
  double spectral_radius = 0.0;
};

inline ImpactMatrices impact(const MeanParams& theta) {
  const auto K = static_cast<Eigen::Index>(theta.K());
  const auto L = static_cast<Eigen::Index>(theta.L());
  ImpactMatrices out;
  out.A_star = MatrixXd::Zero(K * L, K * L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    out.A.push_back(theta.alpha[ul] + theta.beta[ul] + 0.5 * theta.gamma[ul]);
    out.A_star.block(0, l * K, K, K) = out.A.back();
  }
  if (L > 1) out.A_star.block(K, 0, K * (L - 1), K * (L - 1)).setIdentity();
  Eigen::EigenSolver<MatrixXd> es(out.A_star, false);
  out.spectral_radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return out;
}

/// mu = [I - sum_l A_l]^{-1} omega; requires a companion spectral radius below one.
inline VectorXd unconditional_mean(const MeanParams& theta) {
  const auto imp = impact(theta);
  if (!(imp.spectral_radius < 1.0))
    throw NonStationaryError("unconditional mean undefined: spectral radius " +
                             std::to_string(imp.spectral_radius) + " >= 1");
  const auto K = static_cast<Eigen::Index>(theta.K());
  const MatrixXd A = MatrixXd::Identity(K, K) - persistence_sum(theta);
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) throw NonStationaryError("I - sum A_l is singular");
  return lu.solve(theta.omega);
}

struct FilterOutput {
  MatrixXd mu;   // T x K conditional means
  MatrixXd eps;  // x / mu
  MatrixXd u;    // Gamma PITs (empty when no marginals were supplied)
};

/// Last L observations of x, x^(-) and mu; row 0 is the most recent. Serves
/// both as the pre-sample of the filter and as the origin of forecasts.
struct LagState {
  MatrixXd x;
  MatrixXd x_neg;
  MatrixXd mu;

  /// x and mu held at `level`, x^(-) at level / 2.
  static LagState constant(const VectorXd& level, std::size_t L) {
    const auto l = static_cast<Eigen::Index>(L);
    const auto K = level.size();
    LagState s{MatrixXd(l, K), MatrixXd(l, K), MatrixXd(l, K)};
    for (Eigen::Index r = 0; r < l; ++r) {
      s.x.row(r) = level.transpose();
      s.x_neg.row(r) = 0.5 * level.transpose();
      s.mu.row(r) = level.transpose();
    }
    return s;
  }
};

/// mu_t for every row of the panel; throws FilterError when any mu_{t,i} <= 0.
inline MatrixXd conditional_means(const Panel& panel, const MeanParams& theta, const LagState& pre) {
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  if (static_cast<std::size_t>(K) != theta.K())
    throw std::invalid_argument("filter: panel and parameters disagree on K");
  const std::size_t L = theta.L();
  if (static_cast<std::size_t>(pre.x.rows()) < L)
    throw std::invalid_argument("filter: pre-sample holds fewer than L rows");
  MatrixXd mu(T, K);
  VectorXd acc(K);
  for (Eigen::Index t = 0; t < T; ++t) {
    acc = theta.omega;
    for (std::size_t l = 1; l <= L; ++l) {
      const Eigen::Index s = t - static_cast<Eigen::Index>(l);
      if (s >= 0) {
        acc.noalias() += theta.alpha[l - 1] * panel.values.row(s).transpose();
        acc.noalias() += theta.gamma[l - 1] * (panel.values.row(s).transpose() * panel.sign_indicator(s));
        acc.noalias() += theta.beta[l - 1] * mu.row(s).transpose();
      } else {
        const Eigen::Index r = -s - 1;
        acc.noalias() += theta.alpha[l - 1] * pre.x.row(r).transpose();
        acc.noalias() += theta.gamma[l - 1] * pre.x_neg.row(r).transpose();
        acc.noalias() += theta.beta[l - 1] * pre.mu.row(r).transpose();
      }
    }
    for (Eigen::Index i = 0; i < K; ++i)
      if (!(acc(i) > 0.0)) throw FilterError(static_cast<std::size_t>(t), static_cast<std::size_t>(i), acc(i));
    mu.row(t) = acc.transpose();
  }
  return mu;
}

/// Pre-sample x and mu at `init` (default: the panel's sample mean), x^(-) at half of it.
inline MatrixXd conditional_means(const Panel& panel, const MeanParams& theta,
                                  const std::optional<VectorXd>& init = std::nullopt) {
  return conditional_means(panel, theta, LagState::constant(init ? *init : panel.sample_mean(), theta.L()));
}

inline FilterOutput filter_from_means(const Panel& panel, MatrixXd mu, const std::optional<MarginalParams>& phi) {
  FilterOutput out;
  out.mu = std::move(mu);
  out.eps = panel.values.cwiseQuotient(out.mu);
  if (phi) {
    out.u.resize(out.eps.rows(), out.eps.cols());
    for (Eigen::Index i = 0; i < out.eps.cols(); ++i) {
      const double p = phi->phi(i);
      for (Eigen::Index t = 0; t < out.eps.rows(); ++t) out.u(t, i) = gamma_unit::cdf(out.eps(t, i), p);
    }
  }
  return out;
}

inline FilterOutput filter(const Panel& panel, const MeanParams& theta, const LagState& pre,
                           const std::optional<MarginalParams>& phi = std::nullopt) {
  return filter_from_means(panel, conditional_means(panel, theta, pre), phi);
}

inline FilterOutput filter(const Panel& panel, const MeanParams& theta,
                           const std::optional<MarginalParams>& phi = std::nullopt,
                           const std::optional<VectorXd>& init = std::nullopt) {
  return filter_from_means(panel, conditional_means(panel, theta, init), phi);
}

using ForecastState = LagState;

/// State at the end of the panel for forecasting beyond it.
inline LagState forecast_state(const Panel& panel, const MatrixXd& mu, std::size_t L) {
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto K = static_cast<Eigen::Index>(panel.K());
  const auto l = static_cast<Eigen::Index>(L);
  if (T < l) throw std::invalid_argument("forecast_state: panel shorter than the lag order");
  LagState s{MatrixXd(l, K), MatrixXd(l, K), MatrixXd(l, K)};
  for (Eigen::Index r = 0; r < l; ++r) {
    s.x.row(r) = panel.values.row(T - 1 - r);
    s.x_neg.row(r) = panel.values.row(T - 1 - r) * panel.sign_indicator(T - 1 - r);
    s.mu.row(r) = mu.row(T - 1 - r);
  }
  return s;
}

/// h x K forecasts of mu. Step one uses the observed lags; later steps replace
/// unobserved x by its forecast and x^(-) by half of it.
inline MatrixXd forecast(const MeanParams& theta, const ForecastState& state, std::size_t h) {
  if (h < 1) throw std::invalid_argument("forecast horizon must be >= 1");
  const std::size_t L = theta.L();
  const auto K = static_cast<Eigen::Index>(theta.K());
  if (static_cast<std::size_t>(state.x.rows()) < L)
    throw std::invalid_argument("forecast state holds fewer than L observations");
  // history[r] is r steps back from the forecast origin
  std::vector<VectorXd> hx, hneg, hmu;
  for (std::size_t r = 0; r < L; ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    hx.push_back(state.x.row(rr).transpose());
    hneg.push_back(state.x_neg.row(rr).transpose());
    hmu.push_back(state.mu.row(rr).transpose());
  }
  MatrixXd out(static_cast<Eigen::Index>(h), K);
  for (std::size_t s = 0; s < h; ++s) {
    VectorXd f = theta.omega;
    for (std::size_t l = 0; l < L; ++l)
      f += theta.alpha[l] * hx[l] + theta.gamma[l] * hneg[l] + theta.beta[l] * hmu[l];
    out.row(static_cast<Eigen::Index>(s)) = f.transpose();
    hx.insert(hx.begin(), f);
    hneg.insert(hneg.begin(), 0.5 * f);
    hmu.insert(hmu.begin(), f);
    hx.pop_back();
    hneg.pop_back();
    hmu.pop_back();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

/// ISO date `offset` business days after 2000-01-03.
inline std::string business_date(std::size_t offset) {
  using namespace std::chrono;
  sys_days d = year{2000} / January / 3;  // a Monday
  const auto weeks = static_cast<int>(offset / 5);
  const auto rem = static_cast<int>(offset % 5);
  d += days{7 * weeks + rem};
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

constexpr std::size_t kBurnIn = 500;

struct SimulatedPath {
  Panel panel;
  MatrixXd mu;        // T x K conditional means used to generate the panel
  MatrixXd eps;       // T x K innovations
  LagState presample; // state at the end of the burn-in
};

/// Simulates T days from the vMEM: u_t from the copula, eps = Gamma quantile,
/// x = mu * eps, indicator iid Bernoulli(1/2). The first 500 draws are discarded.
inline SimulatedPath simulate_path(const FullParams& params, const ModelSpec& spec, std::size_t T,
                                   std::uint64_t seed, std::vector<std::string> labels = {}) {
  spec.validate();
  const MeanParams& theta = params.theta;
  const std::size_t K = spec.K;
  const auto k = static_cast<Eigen::Index>(K);
  const std::size_t L = theta.L();
  const VectorXd mbar = unconditional_mean(theta);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);

  const std::size_t total = T + kBurnIn;
  const MatrixXd U = sample_copula(params.copula, spec.copula, K, total, rng);
  std::vector<VectorXd> hx(L, mbar), hneg(L, 0.5 * mbar), hmu(L, mbar);

  SimulatedPath out;
  Panel& panel = out.panel;
  const auto TT = static_cast<Eigen::Index>(T);
  panel.values.resize(TT, k);
  panel.sign_indicator.resize(TT);
  out.mu.resize(TT, k);
  out.eps.resize(TT, k);
  auto snapshot = [&] {
    const auto l = static_cast<Eigen::Index>(L);
    LagState s{MatrixXd(l, k), MatrixXd(l, k), MatrixXd(l, k)};
    for (Eigen::Index r = 0; r < l; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      s.x.row(r) = hx[ur].transpose();
      s.x_neg.row(r) = hneg[ur].transpose();
      s.mu.row(r) = hmu[ur].transpose();
    }
    return s;
  };
  for (std::size_t t = 0; t < total; ++t) {
    if (t == kBurnIn) out.presample = snapshot();
    VectorXd mu = theta.omega;
    for (std::size_t l = 0; l < L; ++l)
      mu += theta.alpha[l] * hx[l] + theta.gamma[l] * hneg[l] + theta.beta[l] * hmu[l];
    for (Eigen::Index i = 0; i < k; ++i)
      if (!(mu(i) > 0.0)) throw FilterError(t, static_cast<std::size_t>(i), mu(i));
    VectorXd eps(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double u = EllipticalCopula::clamp_u(U(static_cast<Eigen::Index>(t), i));
      eps(i) = gamma_unit::quantile(u, params.marginal.phi(i));
    }
    const VectorXd x = mu.cwiseProduct(eps);
    const double ind = coin(rng) ? 1.0 : 0.0;
    if (t >= kBurnIn) {
      const auto r = static_cast<Eigen::Index>(t - kBurnIn);
      panel.values.row(r) = x.transpose();
      panel.sign_indicator(r) = ind;
      out.mu.row(r) = mu.transpose();
      out.eps.row(r) = eps.transpose();
    }
    hx.insert(hx.begin(), x);
    hneg.insert(hneg.begin(), x * ind);
    hmu.insert(hmu.begin(), mu);
    hx.pop_back();
    hneg.pop_back();
    hmu.pop_back();
  }
  for (std::size_t t = 0; t < T; ++t) panel.dates.push_back(business_date(t));
  if (labels.empty())
    for (std::size_t i = 0; i < K; ++i) labels.push_back("x" + std::to_string(i + 1));
  panel.labels = std::move(labels);
  return out;
}

inline Panel simulate(const FullParams& params, const ModelSpec& spec, std::size_t T, std::uint64_t seed,
                      std::vector<std::string> labels = {}) {
  return simulate_path(params, spec, T, seed, std::move(labels)).panel;
}

}  // namespace vmem
