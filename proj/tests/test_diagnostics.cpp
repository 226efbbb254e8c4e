#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vmem/diagnostics.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <random>

using namespace vmem;

namespace {

// Textbook univariate Ljung-Box on e = eps - 1 (no demeaning, same as the joint test).
double univariate_lb(const VectorXd& eps, std::size_t m) {
  const VectorXd e = eps.array() - 1.0;
  const auto T = e.size();
  const double c0 = e.squaredNorm();
  double q = 0.0;
  for (std::size_t h = 1; h <= m; ++h) {
    const auto hh = static_cast<Eigen::Index>(h);
    const double r = e.tail(T - hh).dot(e.head(T - hh)) / c0;
    q += r * r / static_cast<double>(T - hh);
  }
  return static_cast<double>(T) * static_cast<double>(T + 2) * q;
}

MatrixXd ar1_residuals(Eigen::Index T, Eigen::Index K, double coef, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 0.3);
  MatrixXd e(T, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double prev = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      prev = coef * prev + z(rng);
      e(t, k) = 1.0 + prev;
    }
  }
  return e;
}

}  // namespace

TEST(LjungBox, UnivariateReduction) {
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> g(5.0, 0.2);
  MatrixXd eps(300, 1);
  for (Eigen::Index t = 0; t < eps.rows(); ++t) eps(t, 0) = g(rng);
  const auto lb = ljung_box_joint(eps, {1, 5, 12});
  ASSERT_EQ(lb.size(), 3u);
  for (const auto& r : lb) {
    EXPECT_NEAR(r.statistic, univariate_lb(eps.col(0), r.lag), 1e-8);
    EXPECT_EQ(r.dof, static_cast<double>(r.lag));
    const boost::math::chi_squared chi(r.dof);
    EXPECT_NEAR(r.p_value, boost::math::cdf(boost::math::complement(chi, r.statistic)), 1e-12);
  }
}

TEST(LjungBox, InvariantToRelabeling) {
  std::mt19937_64 rng(2);
  MatrixXd e = ar1_residuals(400, 3, 0.1, rng);
  MatrixXd perm(400, 3);
  perm << e.col(2), e.col(0), e.col(1);
  const auto a = ljung_box_joint(e), b = ljung_box_joint(perm);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].statistic, b[i].statistic, 1e-9 * a[i].statistic);
    EXPECT_EQ(a[i].dof, 9.0 * static_cast<double>(a[i].lag));
  }
}

TEST(LjungBox, SizeUnderIidResiduals) {
  std::mt19937_64 rng(3);
  int reject = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto lb = ljung_box_joint(ar1_residuals(2000, 2, 0.0, rng), {12});
    EXPECT_GE(lb[0].p_value, 0.0);
    EXPECT_LE(lb[0].p_value, 1.0);
    reject += lb[0].p_value < 0.05;
  }
  // 5% nominal; binomial sd at 200 reps is about 1.5%
  EXPECT_GE(reject, 3);
  EXPECT_LE(reject, 20);
}

TEST(LjungBox, PowerAgainstAr1) {
  std::mt19937_64 rng(4);
  int reject = 0;
  for (int r = 0; r < 100; ++r) reject += ljung_box_joint(ar1_residuals(2000, 2, 0.3, rng))[0].p_value < 0.01;
  EXPECT_GE(reject, 95);
}

TEST(LjungBox, Errors) {
  EXPECT_THROW(ljung_box_joint(MatrixXd::Ones(32, 2)), std::invalid_argument);
  EXPECT_THROW(ljung_box_joint(MatrixXd::Ones(100, 2)), ModelError);
}

TEST(InformationCriteria, Examples) {
  const auto ic = information_criteria(0.0, 1, std::exp(2.0));
  EXPECT_NEAR(ic.aic, 2.0, 1e-12);
  EXPECT_NEAR(ic.bic, 2.0, 1e-12);
  const auto small = information_criteria(100.0, 5, 500.0), big = information_criteria(100.0, 9, 500.0);
  EXPECT_GT(big.bic - small.bic, big.aic - small.aic);
  EXPECT_NEAR(small.aic, -200.0 + 10.0, 1e-12);
}

TEST(Wald, SingleRestrictionIsSquaredTStat) {
  VectorXd est(3);
  est << 0.2, -0.7, 1.3;
  MatrixXd cov(3, 3);
  cov << 0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.25;
  for (Eigen::Index i = 0; i < 3; ++i) {
    const auto w = wald_zero(est, cov, {i});
    const double t = est(i) / std::sqrt(cov(i, i));
    EXPECT_NEAR(w.statistic, t * t, 1e-10);
    EXPECT_EQ(w.restrictions, 1u);
  }
  const auto joint = wald_zero(est, cov, {0, 1});
  const Eigen::Vector2d b(0.2, -0.7);
  EXPECT_NEAR(joint.statistic, b.dot(cov.topLeftCorner(2, 2).inverse() * b), 1e-10);
  EXPECT_THROW(wald_zero(est, cov, {}), std::invalid_argument);
  EXPECT_THROW(wald_zero(est, MatrixXd::Zero(3, 3), {0}), ModelError);
}

TEST(Causality, SelectsAlphaAndBetaCrossTerms) {
  FullParams truth{tu::example_theta(2, Structure::Full, Structure::Full, false), {}, tu::example_phi(2), std::nullopt};
  const ModelSpec spec = ModelSpec::one_one(2, Structure::Full, Structure::Full, CopulaFamily::Independent);
  const Panel p = simulate(truth, spec, 1500, 11);
  const FitResult f = fit(p, spec);
  const auto w = causality_wald(f, 1, 0);
  EXPECT_EQ(w.restrictions, 2u);
  const auto expect = wald_zero(f.estimates, f.cov, {*f.index_of("alpha1[1,2]"), *f.index_of("beta1[1,2]")});
  EXPECT_EQ(w.statistic, expect.statistic);
  EXPECT_GE(w.p_value, 0.0);
  EXPECT_LE(w.p_value, 1.0);

  const ModelSpec diag_beta = ModelSpec::one_one(2, Structure::Full, Structure::Diagonal, CopulaFamily::Independent);
  const FitResult g = fit(p, diag_beta);
  EXPECT_EQ(causality_wald(g, 0, 1).restrictions, 1u);

  const ModelSpec diag = ModelSpec::one_one(2, Structure::Diagonal, Structure::Diagonal, CopulaFamily::Independent);
  EXPECT_THROW(causality_wald(fit(p, diag), 0, 1), std::invalid_argument);
}

TEST(Losses, Examples) {
  const auto l = losses(Eigen::Vector3d(1.0, 2.0, 0.0), Eigen::Vector3d(1.0, 1.0, 1.0));
  EXPECT_EQ(l.e_N(0), 0.0);
  EXPECT_EQ(l.e_G(0), -2.0);
  EXPECT_EQ(l.e_N(1), 0.5);
  EXPECT_NEAR(l.e_G(1), std::log(2.0) - 3.0, 1e-15);
  EXPECT_NEAR(l.e_G(1), -2.3069, 1e-4);
  EXPECT_TRUE(std::isnan(l.e_G(2)));
  EXPECT_EQ(l.missing, 1u);
  EXPECT_THROW(losses(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0)), std::domain_error);
  EXPECT_THROW(losses(Eigen::Vector2d(-1, 1), Eigen::Vector2d(1, 1)), std::domain_error);
  EXPECT_THROW(losses(Eigen::Vector2d(1, 1), Eigen::Vector3d(1, 1, 1)), std::invalid_argument);
}

TEST(Losses, GammaLossPeaksAtPerfectForecast) {
  const VectorXd x = VectorXd::LinSpaced(2001, 0.01, 5.0);
  const double mu = 1.7;
  const auto l = losses(x, VectorXd::Constant(x.size(), mu));
  Eigen::Index arg = 0;
  l.e_G.maxCoeff(&arg);
  EXPECT_NEAR(x(arg), mu, 0.0025);
  EXPECT_LE(l.e_G.maxCoeff(), -2.0);
  EXPECT_GE(l.e_N.minCoeff(), 0.0);
}

TEST(DieboldMariano, AntisymmetryAndEdgeCases) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(1.0);
  VectorXd a(50), b(50);
  for (Eigen::Index t = 0; t < 50; ++t) {
    a(t) = ex(rng);
    b(t) = ex(rng);
  }
  for (std::size_t h : {1u, 3u}) {
    const auto ab = diebold_mariano(a, b, h), ba = diebold_mariano(b, a, h);
    EXPECT_EQ(ab.statistic, -ba.statistic);
    EXPECT_EQ(ab.p_value, ba.p_value);
  }
  EXPECT_FALSE(diebold_mariano(a, a).defined);
  EXPECT_THROW(diebold_mariano(a.head(9), b.head(9)), std::invalid_argument);
  EXPECT_THROW(diebold_mariano(a, b.head(20)), std::invalid_argument);
  EXPECT_THROW(diebold_mariano(a, b, 0), std::invalid_argument);

  // NaN pairs are dropped
  VectorXd an = a;
  an(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(diebold_mariano(an, b).n, 49u);
}

TEST(DieboldMariano, MatchesHandComputation) {
  VectorXd a(12), b = VectorXd::Zero(12);
  a << 0.3, -0.1, 0.5, 0.2, 0.0, 0.9, -0.4, 0.1, 0.6, 0.2, -0.2, 0.4;
  const double n = 12.0, m = a.mean();
  const VectorXd c = a.array() - m;
  const double g0 = c.squaredNorm() / n;
  const double g1 = c.tail(11).dot(c.head(11)) / n;
  const double g2 = c.tail(10).dot(c.head(10)) / n;
  EXPECT_NEAR(diebold_mariano(a, b, 1).statistic, m / std::sqrt(g0 / n), 1e-12);
  const double lrv3 = g0 + 2.0 * (2.0 / 3.0) * g1 + 2.0 * (1.0 / 3.0) * g2;
  EXPECT_NEAR(diebold_mariano(a, b, 3).statistic, m / std::sqrt(lrv3 / n), 1e-12);
}

TEST(DieboldMariano, PowerAtMeanDifference) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.2, 1.0);
  int reject = 0;
  double avg = 0.0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    VectorXd d(400);
    for (auto& v : d) v = z(rng);
    const auto dm = diebold_mariano(d, VectorXd::Zero(400));
    reject += dm.p_value < 0.05;
    avg += dm.statistic / reps;
  }
  EXPECT_GE(reject, static_cast<int>(0.97 * reps));
  EXPECT_NEAR(avg, 4.0, 0.25);
}

TEST(DieboldMariano, BothLossesAgreeOnAScaledForecast) {
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> g(8.0, 1.0 / 8.0);
  const Eigen::Index T = 500;
  VectorXd mu(T), x(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    mu(t) = 1.0 + 0.5 * std::sin(static_cast<double>(t) / 9.0);
    x(t) = mu(t) * g(rng);
  }
  const auto bad = losses(x, 1.4 * mu), good = losses(x, mu);
  const auto dn = diebold_mariano(bad.e_N, good.e_N);
  const auto dg = diebold_mariano(-bad.e_G, -good.e_G);
  EXPECT_GT(dn.statistic, 0.0);
  EXPECT_GT(dg.statistic, 0.0);
}
