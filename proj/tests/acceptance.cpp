// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Tolerances are fixed below.

#include "vmem/cli.hpp"
#include "vmem/copulas.hpp"
#include "vmem/diagnostics.hpp"
#include "vmem/estimation.hpp"
#include "vmem/likelihood.hpp"
#include "vmem/measures.hpp"
#include "vmem/mem_recursion.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace vmem;
namespace fs = std::filesystem;

namespace {

constexpr double kGradRelTol = 1e-5;
constexpr double kQuadTol = 1e-3;
constexpr double kRecoveryBias = 0.05;
constexpr double kCoverage = 0.90;
constexpr double kConcentratedGap = 1.0;
constexpr double kAvarTolGamma = 0.15;
constexpr double kAvarTolPlain = 0.10;
constexpr double kTargetLoglikGap = 1.0;
constexpr double kRkMedianTol = 0.10;
constexpr double kSizeLo = 0.02, kSizeHi = 0.09;
constexpr double kDmPower = 0.97;
constexpr double kNestTol = 1e-4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmtd(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// The K-series test model used by several criteria: moderately persistent,
// positive spillovers where the structure allows them.
MeanParams test_theta(std::size_t K, Structure alpha, Structure beta, bool gamma) {
  MeanParams th = MeanParams::zeros(K, 1);
  const auto k = static_cast<Eigen::Index>(K);
  for (Eigen::Index i = 0; i < k; ++i) {
    th.alpha[0](i, i) = 0.15 + 0.03 * static_cast<double>(i);
    th.beta[0](i, i) = 0.6 - 0.05 * static_cast<double>(i);
    if (gamma) th.gamma[0](i, i) = 0.06;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      if (alpha == Structure::Full) th.alpha[0](i, j) = 0.03 + 0.01 * static_cast<double>(j);
      if (beta == Structure::Full) th.beta[0](i, j) = 0.02;
    }
  }
  VectorXd m(k);
  for (Eigen::Index i = 0; i < k; ++i) m(i) = 1.0 + 0.5 * static_cast<double>(i);
  th.omega = (MatrixXd::Identity(k, k) - persistence_sum(th)) * m;
  return th;
}

CopulaParams test_copula(std::size_t K, double nu = 8.0) {
  VectorXd c(static_cast<Eigen::Index>(n_correlations(K)));
  for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = 0.4 + 0.1 * static_cast<double>(j % 3);
  return {c, nu};
}

MarginalParams test_phi(std::size_t K) {
  VectorXd phi(static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi(i) = 6.0 + 3.0 * static_cast<double>(i);
  return {phi};
}

double c_from_rho(double rho) { return rho / std::sqrt(1.0 - rho * rho); }

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  struct Cell {
    const char* name;
    Structure alpha, beta;
  };
  double worst = 0.0;
  std::string where;
  for (const Cell cell : {Cell{"D", Structure::Diagonal, Structure::Diagonal}, Cell{"A", Structure::Full, Structure::Diagonal},
                          Cell{"AB", Structure::Full, Structure::Full}})
    for (auto fam : {CopulaFamily::Independent, CopulaFamily::Normal, CopulaFamily::StudentT}) {
      const ModelSpec spec = ModelSpec::one_one(3, cell.alpha, cell.beta, fam, true);
      const FullParams truth{test_theta(3, cell.alpha, cell.beta, true), test_copula(3), test_phi(3), std::nullopt};
      const Panel p = simulate(truth, spec, 200, 101);
      const ParamLayout layout(spec);
      VectorXd x = layout.natural(truth);
      for (Eigen::Index k = 0; k < x.size(); ++k) x(k) *= 1.0 + 0.03 * std::sin(static_cast<double>(k) + 1.0);
      EvalRequest req;
      req.score = true;
      const VectorXd s = evaluate(p, layout.from_natural(x), layout, req).score;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
        VectorXd up = x, dn = x;
        up(k) += h;
        dn(k) -= h;
        const double fd =
            (evaluate(p, layout.from_natural(up), layout).loglik - evaluate(p, layout.from_natural(dn), layout).loglik) /
            (2.0 * h);
        const double rel = std::abs(s(k) - fd) / std::max(1.0, std::abs(fd));
        if (rel > worst) {
          worst = rel;
          where = std::string(cell.name) + "-" + to_string(fam) + " " + layout.names()[static_cast<std::size_t>(k)];
        }
      }
    }
  return {worst < kGradRelTol, "max relative error " + fmtd(worst) + " at " + where + " (tol 1e-5)"};
}

Outcome copula_normalization() {
  boost::math::quadrature::tanh_sinh<double> ts(8);
  struct Case {
    CopulaFamily fam;
    double rho, nu;
  };
  double worst = 0.0;
  std::ostringstream d;
  for (const Case cs : {Case{CopulaFamily::Normal, 0.0, 0.0}, Case{CopulaFamily::Normal, 0.5, 0.0},
                        Case{CopulaFamily::Normal, 0.9, 0.0}, Case{CopulaFamily::StudentT, 0.5, 4.0},
                        Case{CopulaFamily::StudentT, 0.5, 8.0}, Case{CopulaFamily::StudentT, 0.5, 30.0}}) {
    const EllipticalCopula cop(cs.fam, CopulaParams{VectorXd::Constant(1, c_from_rho(cs.rho)), cs.nu}, 2);
    auto inner = [&](double u1) {
      return ts.integrate(
          [&](double u2) {
            VectorXd u(2);
            u << u1, u2;
            return std::exp(cop.logdensity(cop.work(u)));
          },
          0.0, 1.0, 1e-7);
    };
    const double v = ts.integrate(inner, 0.0, 1.0, 1e-6);
    worst = std::max(worst, std::abs(v - 1.0));
    d << (cs.fam == CopulaFamily::Normal ? "N" : "T") << "(rho " << cs.rho;
    if (cs.fam == CopulaFamily::StudentT) d << ", nu " << cs.nu;
    d << ") " << fmtd(v, "%.6f") << "; ";
  }
  return {worst < kQuadTol, d.str() + "max |I - 1| " + fmtd(worst)};
}

Outcome recovery() {
  MeanParams th = MeanParams::zeros(2, 1);
  th.alpha[0].diagonal() << 0.2, 0.15;
  th.beta[0].diagonal() << 0.7, 0.75;
  th.omega = (MatrixXd::Identity(2, 2) - persistence_sum(th)) * Eigen::Vector2d(1.0, 2.0);
  const FullParams truth{th, CopulaParams{VectorXd::Constant(1, c_from_rho(0.5)), 8.0},
                         MarginalParams{Eigen::Vector2d(20.0, 15.0)}, std::nullopt};
  const ModelSpec spec = ModelSpec::one_one(2, Structure::Diagonal, Structure::Diagonal, CopulaFamily::StudentT);
  const VectorXd x0 = ParamLayout(spec).natural(truth);
  const int reps = 50;
  VectorXd sum = VectorXd::Zero(x0.size());
  Eigen::VectorXi covered = Eigen::VectorXi::Zero(x0.size());
  std::vector<std::string> names;
  int failed = 0;
  for (int r = 0; r < reps; ++r) {
    const Panel p = simulate(truth, spec, 4000, 1000 + static_cast<std::uint64_t>(r));
    const FitResult f = fit(p, spec);
    if (!f.convergence.converged) ++failed;
    names = f.names;
    sum += f.estimates;
    for (Eigen::Index k = 0; k < x0.size(); ++k) covered(k) += std::abs(f.estimates(k) - x0(k)) <= 3.0 * f.se(k);
  }
  const VectorXd mean = sum / reps;
  bool ok = failed == 0;
  double worst_bias = 0.0, worst_cov = 1.0;
  std::string wb, wc;
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    const double bias = std::abs(mean(k) / x0(k) - 1.0);
    const double cov = covered(k) / static_cast<double>(reps);
    if (bias > worst_bias) {
      worst_bias = bias;
      wb = names[static_cast<std::size_t>(k)];
    }
    if (cov < worst_cov) {
      worst_cov = cov;
      wc = names[static_cast<std::size_t>(k)];
    }
    ok = ok && bias < kRecoveryBias && cov >= kCoverage;
  }
  return {ok, "worst mean deviation " + fmtd(100 * worst_bias, "%.2f") + "% (" + wb + "), worst 3-SE coverage " +
                  fmtd(100 * worst_cov, "%.0f") + "% (" + wc + "), non-converged " + std::to_string(failed) + "/" +
                  std::to_string(reps)};
}

Outcome concentrated_vs_full() {
  const ModelSpec spec = ModelSpec::one_one(3, Structure::Full, Structure::Diagonal, CopulaFamily::Normal, true);
  const FullParams truth{test_theta(3, Structure::Full, Structure::Diagonal, true), test_copula(3), test_phi(3),
                         std::nullopt};
  const Panel p = simulate(truth, spec, 2000, 202);
  FitOptions opt;
  opt.covariance = false;
  const FitResult full = fit(p, spec, opt);
  opt.concentrated = true;
  const FitResult conc = fit(p, spec, opt);
  const double gap = std::abs(full.loglik - conc.loglik);
  const bool conv = full.convergence.converged && conc.convergence.converged;
  return {conv && gap < kConcentratedGap, "full " + fmtd(full.loglik, "%.2f") + ", concentrated " +
                                              fmtd(conc.loglik, "%.2f") + ", |diff| " + fmtd(gap, "%.3f")};
}

// MC variance of sqrt(T)(x_bar - mu) against the closed form, relative Frobenius error.
double avar_error(const MeanParams& th, std::uint64_t seed0) {
  const ModelSpec spec = ModelSpec::one_one(2, Structure::Full, Structure::Diagonal, CopulaFamily::Normal, true);
  const FullParams fp{th, CopulaParams{VectorXd::Constant(1, c_from_rho(0.5)), 8.0},
                      MarginalParams{Eigen::Vector2d(8.0, 12.0)}, std::nullopt};
  const VectorXd mu = unconditional_mean(th);
  const std::size_t T = 2000;
  const int paths = 2000;
  MatrixXd z(paths, 2);
  MatrixXd Emm = MatrixXd::Zero(2, 2), Eee = MatrixXd::Zero(2, 2), Exx = MatrixXd::Zero(2, 2);
  VectorXd Ee = VectorXd::Zero(2);
  const double n = static_cast<double>(T) * paths;
  for (int r = 0; r < paths; ++r) {
    const auto path = simulate_path(fp, spec, T, seed0 + static_cast<std::uint64_t>(r));
    z.row(r) = std::sqrt(static_cast<double>(T)) * (path.panel.sample_mean() - mu).transpose();
    Emm += path.mu.transpose() * path.mu / n;
    Eee += path.eps.transpose() * path.eps / n;
    Ee += path.eps.colwise().sum().transpose() / n;
    Exx += path.panel.values.transpose() * path.panel.values / n;
  }
  const MatrixXd mc = z.transpose() * z / paths;
  const MatrixXd Sigma = Eee - Ee * Ee.transpose();
  const MatrixXd closed = sample_mean_avar(th, Emm.cwiseProduct(Sigma), sigma_I(2), Exx);
  return (mc - closed).norm() / closed.norm();
}

Outcome asymptotics() {
  MeanParams th = test_theta(2, Structure::Full, Structure::Diagonal, true);
  const double eg = avar_error(th, 30000);
  th.gamma[0].setZero();
  th.omega = (MatrixXd::Identity(2, 2) - persistence_sum(th)) * Eigen::Vector2d(1.0, 1.5);
  const double e0 = avar_error(th, 40000);
  return {eg < kAvarTolGamma && e0 < kAvarTolPlain,
          "relative error with gamma " + fmtd(100 * eg, "%.1f") + "% (tol 15%), gamma = 0 " + fmtd(100 * e0, "%.1f") +
              "% (tol 10%)"};
}

Outcome targeting_equivalence() {
  MeanParams th = MeanParams::zeros(2, 1);
  th.alpha[0].diagonal() << 0.2, 0.15;
  th.beta[0].diagonal() << 0.675, 0.725;
  th.gamma[0].diagonal() << 0.05, 0.04;
  th.omega = (MatrixXd::Identity(2, 2) - persistence_sum(th)) * Eigen::Vector2d(1.0, 2.0);
  const FullParams truth{th, CopulaParams{VectorXd::Constant(1, c_from_rho(0.5)), 8.0},
                         MarginalParams{Eigen::Vector2d(20.0, 15.0)}, std::nullopt};
  ModelSpec spec = ModelSpec::one_one(2, Structure::Full, Structure::Diagonal, CopulaFamily::Normal, true);
  const Panel p = simulate(truth, spec, 3000, 303);
  const FitResult plain = fit(p, spec);
  spec.targeting = true;
  const FitResult targ = fit(p, spec);
  bool ok = plain.convergence.converged && targ.convergence.converged;
  const double gap = std::abs(plain.loglik - targ.loglik);
  ok = ok && gap < kTargetLoglikGap;
  double worst_ratio = 0.0;
  for (std::size_t k = 0; k < targ.names.size(); ++k) {
    const auto j = plain.index_of(targ.names[k]);
    if (!j) return {false, targ.names[k] + " missing from the untargeted fit"};
    const auto kk = static_cast<Eigen::Index>(k);
    worst_ratio = std::max(worst_ratio, std::abs(targ.estimates(kk) - plain.estimates(*j)) / targ.se(kk));
  }
  ok = ok && worst_ratio < 1.0;
  // Omega_theta,mu: each element of mean(s_t v_t') and mean(s_t x~_t') against
  // its standard error, Bonferroni-corrected at 5%.
  const TargetingBlocks b = targeting_blocks(targ, p);
  const MatrixXd zv = b.S_v.cwiseQuotient(b.S_v_se).cwiseAbs();
  MatrixXd zx = b.S_xt.cwiseQuotient(b.S_xt_se).cwiseAbs();
  zx = zx.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
  const double n_tests = static_cast<double>(zv.size() + zx.size());
  const boost::math::normal_distribution<double> n01;
  const double crit = boost::math::quantile(n01, 1.0 - 0.025 / n_tests);
  const double zmax = std::max(zv.maxCoeff(), zx.maxCoeff());
  ok = ok && zmax < crit;
  return {ok, "|loglik diff| " + fmtd(gap, "%.3f") + ", max |diff|/SE " + fmtd(worst_ratio, "%.3f") +
                  ", Omega_theta,mu max |z| " + fmtd(zmax, "%.2f") + " (Bonferroni critical " + fmtd(crit, "%.2f") + ")"};
}

Outcome realized_kernel_check() {
  const bool parzen_ok = parzen(0.25) == 0.71875 && parzen(0.75) == 0.03125;
  std::mt19937_64 rng(404);
  const double sigma = 0.012;
  const int n = 780;
  std::normal_distribution<double> z(0.0, sigma / std::sqrt(static_cast<double>(n)));
  std::vector<double> est;
  bool h0_ok = true;
  for (int day = 0; day < 200; ++day) {
    TickDay d;
    d.date = business_date(static_cast<std::size_t>(day));
    double lp = std::log(40.0);
    for (int j = 0; j <= n; ++j) {
      if (j > 0) lp += z(rng);
      d.times.push_back(34200.0 + 30.0 * j);
      d.prices.push_back(std::exp(lp));
      d.sizes.push_back(100.0);
    }
    est.push_back(realized_kernel(d).rkv);
    double rv = 0.0;
    for (std::size_t j = 1; j < d.size(); ++j) {
      const double r = std::log(d.prices[j]) - std::log(d.prices[j - 1]);
      rv += r * r;
    }
    h0_ok = h0_ok && realized_kernel(d, {}, 0).rk2 == rv;
  }
  std::nth_element(est.begin(), est.begin() + 100, est.end());
  const double ratio = est[100] / sigma;
  return {parzen_ok && h0_ok && std::abs(ratio - 1.0) < kRkMedianTol,
          std::string("Parzen values ") + (parzen_ok ? "exact" : "WRONG") + ", median rkv / sigma " +
              fmtd(ratio, "%.4f") + ", H=0 equals RV " + (h0_ok ? "on every day" : "NOT on every day")};
}

Outcome diagnostics_calibration() {
  const int reps = 500;
  // Ljung-Box on iid unit-mean residuals with copula dependence across series
  const ModelSpec lb_spec = ModelSpec::one_one(2, Structure::Diagonal, Structure::Diagonal, CopulaFamily::Normal);
  const FullParams lb_truth{test_theta(2, Structure::Diagonal, Structure::Diagonal, false),
                            CopulaParams{VectorXd::Constant(1, c_from_rho(0.4)), 8.0}, MarginalParams{Eigen::Vector2d(5.0, 9.0)},
                            std::nullopt};
  int lb_rej = 0;
  for (int r = 0; r < reps; ++r) {
    const auto path = simulate_path(lb_truth, lb_spec, 2000, 5000 + static_cast<std::uint64_t>(r));
    lb_rej += ljung_box_joint(path.eps, {12})[0].p_value < 0.05;
  }
  const double lb_size = lb_rej / static_cast<double>(reps);

  // causality Wald: alpha1[1,2] and beta1[1,2] both zero in the data
  const ModelSpec c_spec = ModelSpec::one_one(2, Structure::Full, Structure::Full, CopulaFamily::Independent);
  const FullParams c_truth{test_theta(2, Structure::Diagonal, Structure::Diagonal, false), {}, test_phi(2), std::nullopt};
  int w_rej = 0, w_fail = 0;
  for (int r = 0; r < reps; ++r) {
    const Panel p = simulate(c_truth, c_spec, 2000, 6000 + static_cast<std::uint64_t>(r));
    try {
      const FitResult f = fit(p, c_spec);
      w_rej += causality_wald(f, 1, 0).p_value < 0.05;
    } catch (const std::exception&) {
      ++w_fail;
    }
  }
  const double w_size = w_rej / static_cast<double>(reps - w_fail);

  // DM antisymmetry and power on d ~ N(0.2, 1), T = 400
  std::mt19937_64 rng(707);
  std::normal_distribution<double> dz(0.2, 1.0), e(0.0, 1.0);
  bool anti = true;
  int dm_rej = 0;
  for (int r = 0; r < reps; ++r) {
    VectorXd la(400), lb(400);
    for (Eigen::Index t = 0; t < 400; ++t) {
      lb(t) = e(rng) * e(rng);
      la(t) = lb(t) + dz(rng);
    }
    const auto ab = diebold_mariano(la, lb), ba = diebold_mariano(lb, la);
    anti = anti && ab.statistic == -ba.statistic;
    dm_rej += ab.p_value < 0.05;
  }
  const double power = dm_rej / static_cast<double>(reps);
  const bool ok = lb_size >= kSizeLo && lb_size <= kSizeHi && w_fail == 0 && w_size >= kSizeLo &&
                  w_size <= kSizeHi && anti && power >= kDmPower;
  return {ok, "LB(12) size " + fmtd(100 * lb_size, "%.1f") + "%, causality Wald size " + fmtd(100 * w_size, "%.1f") +
                  "% (" + std::to_string(w_fail) + " failed fits), DM antisymmetry " + (anti ? "exact" : "BROKEN") +
                  ", DM power " + fmtd(100 * power, "%.1f") + "%"};
}

Outcome nesting() {
  struct Data {
    std::size_t K;
    Structure alpha, beta;
    CopulaFamily truth_family;
    std::size_t T;
  };
  double worst = std::numeric_limits<double>::infinity();
  int n = 0;
  std::uint64_t seed = 808;
  for (const Data d : {Data{2, Structure::Diagonal, Structure::Diagonal, CopulaFamily::StudentT, 1500},
                       Data{2, Structure::Full, Structure::Diagonal, CopulaFamily::Normal, 1500},
                       Data{3, Structure::Diagonal, Structure::Diagonal, CopulaFamily::StudentT, 1000},
                       Data{3, Structure::Full, Structure::Diagonal, CopulaFamily::Independent, 1000},
                       Data{2, Structure::Diagonal, Structure::Diagonal, CopulaFamily::StudentT, 500}}) {
    ModelSpec spec = ModelSpec::one_one(d.K, d.alpha, d.beta, d.truth_family, true);
    const FullParams truth{test_theta(d.K, d.alpha, d.beta, true), test_copula(d.K, 6.0), test_phi(d.K), std::nullopt};
    const Panel p = simulate(truth, spec, d.T, seed++);
    FitOptions opt;
    opt.covariance = false;
    double ll[3];
    int i = 0;
    for (auto fam : {CopulaFamily::Independent, CopulaFamily::Normal, CopulaFamily::StudentT}) {
      spec.copula = fam;
      ll[i++] = fit(p, spec, opt).loglik;
    }
    worst = std::min({worst, ll[1] - ll[0], ll[2] - ll[1]});
    ++n;
  }
  return {worst >= -kNestTol, std::to_string(n) + " datasets, smallest step up the I <= N <= T chain " + fmtd(worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vmem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome golden_pipeline() {
  const std::string ticks = (fs::path(VMEM_TEST_DATA) / "ticks_200day.csv").string();
  const std::string split = "2000-08-14";
  std::vector<fs::path> dirs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir =
        fs::temp_directory_path() / ("vmem_acceptance_" + std::to_string(::getpid()) + "_" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    int rc = cli({"measure", "--ticks", ticks, "-o", d + "/panel.csv"});
    if (rc == 0) rc = cli({"detrend", "-i", d + "/panel.csv", "-o", d + "/detrended.csv", "--split", split});
    if (rc == 0) rc = cli({"fit", "-i", d + "/detrended.csv", "-d", d, "--split", split, "--grid", "default"});
    if (rc == 0) rc = cli({"forecast", "-i", d + "/detrended.csv", "--fits-dir", d, "-d", d, "--split", split});
    if (rc != 0) return {false, "pipeline exited with status " + std::to_string(rc)};
    dirs.push_back(dir);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const auto name = entry.path().filename();
    if (!fs::exists(dirs[1] / name) || slurp(entry.path()) != slurp(dirs[1] / name))
      return {false, name.string() + " differs between runs"};
    ++files;
  }
  for (const auto& d : dirs) fs::remove_all(d);
  return {files >= 10, std::to_string(files) + " output files byte-identical across two runs"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"analytic score vs finite differences", gradient_check},
      {"copula density integrates to one", copula_normalization},
      {"parameter recovery", recovery},
      {"concentrated vs full Normal likelihood", concentrated_vs_full},
      {"sample-mean asymptotic variance", asymptotics},
      {"expectation targeting equivalence", targeting_equivalence},
      {"realized kernel", realized_kernel_check},
      {"diagnostics calibration", diagnostics_calibration},
      {"nesting monotonicity", nesting},
      {"golden-file pipeline", golden_pipeline},
  };
  int failures = 0, id = 0;
  for (const auto& c : criteria) {
    ++id;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << id << ' ' << c.name << ": " << o.detail << " ["
              << fmtd(secs, "%.1f") << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
