#pragma once

// Daily trading-activity measures from intraday trades: realized kernel
// volatility, volume, trade counts, and multiplicative spline detrending.

#include "vmem/core_types.hpp"
#include "vmem/panel_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vmem {

struct TickDay {
  std::string date;
  std::vector<double> times;  // seconds since midnight, strictly increasing
  std::vector<double> prices;
  std::vector<double> sizes;

  std::size_t size() const { return prices.size(); }
};

struct RKConfig {
  double bin_minutes = 15.0;
  double bandwidth_const = 3.51;
  /// Report sqrt(252) * 100 * rkv (annualized percentage) instead of the daily value.
  bool annualize = false;
};

/// The kernel sum came out negative; `raw_sum` carries the value.
class NegativeKernelError : public ModelError {
 public:
  explicit NegativeKernelError(double raw)
      : ModelError("realized kernel sum is negative: " + std::to_string(raw)), raw_sum(raw) {}
  double raw_sum;
};

inline double parzen(double x) {
  x = std::abs(x);
  if (x <= 0.5) return 1.0 - 6.0 * x * x + 6.0 * x * x * x;
  if (x <= 1.0) return 2.0 * (1.0 - x) * (1.0 - x) * (1.0 - x);
  return 0.0;
}

struct RealizedKernel {
  double rkv = 0.0;
  double rk2 = 0.0;  // gamma_0 + 2 sum_h k(h/H) gamma_h
  std::size_t H = 0;
  std::size_t n = 0;  // number of high-frequency returns
};

namespace detail {

inline std::vector<double> log_returns(const std::vector<double>& prices) {
  std::vector<double> r;
  if (prices.size() < 2) return r;
  r.reserve(prices.size() - 1);
  for (std::size_t j = 1; j < prices.size(); ++j) r.push_back(std::log(prices[j]) - std::log(prices[j - 1]));
  return r;
}

/// Returns over consecutive bins of `bin_seconds`, sampling the last price at
/// or before each boundary, starting from the first trade.
inline std::vector<double> bin_returns(const TickDay& day, double bin_seconds) {
  std::vector<double> out;
  if (day.size() < 2) return out;
  const double t0 = day.times.front();
  const double t1 = day.times.back();
  double prev = std::log(day.prices.front());
  std::size_t j = 0;
  for (double b = t0 + bin_seconds;; b += bin_seconds) {
    const bool last = b >= t1;
    const double edge = last ? t1 : b;
    while (j + 1 < day.size() && day.times[j + 1] <= edge) ++j;
    const double lp = std::log(day.prices[j]);
    out.push_back(lp - prev);
    prev = lp;
    if (last) break;
  }
  return out;
}

inline double autocov(const std::vector<double>& x, std::size_t h) {
  double s = 0.0;
  for (std::size_t j = h; j < x.size(); ++j) s += x[j] * x[j - h];
  return s;
}

}  // namespace detail

/// H = ceil(c n^{3/5} (sum x^2 / (2n) / sum x~^2)^{2/5}), capped at n - 1.
inline std::size_t rk_bandwidth(const std::vector<double>& x, const std::vector<double>& x_bin, double c) {
  const std::size_t n = x.size();
  if (n < 2) return 0;
  double rv = 0.0, rv_bin = 0.0;
  for (double v : x) rv += v * v;
  for (double v : x_bin) rv_bin += v * v;
  if (rv == 0.0) return 0;
  if (rv_bin == 0.0) return n - 1;
  const double omega2 = rv / (2.0 * static_cast<double>(n));
  const double h = c * std::pow(static_cast<double>(n), 0.6) * std::pow(omega2 / rv_bin, 0.4);
  return std::min<std::size_t>(static_cast<std::size_t>(std::ceil(h)), n - 1);
}

/// Realized kernel from the returns themselves, with an explicit bandwidth.
inline RealizedKernel realized_kernel_from_returns(const std::vector<double>& x, std::size_t H) {
  if (x.empty()) throw std::invalid_argument("realized kernel needs at least one return");
  RealizedKernel rk;
  rk.n = x.size();
  rk.H = std::min(H, x.size() - 1);
  double s = detail::autocov(x, 0);
  for (std::size_t h = 1; h <= rk.H; ++h)
    s += 2.0 * parzen(static_cast<double>(h) / static_cast<double>(rk.H)) * detail::autocov(x, h);
  if (s < 0.0) throw NegativeKernelError(s);
  rk.rk2 = s;
  rk.rkv = std::sqrt(s);
  return rk;
}

/// Realized kernel volatility of one day; `H_override` fixes the bandwidth.
inline RealizedKernel realized_kernel(const TickDay& day, const RKConfig& cfg = {},
                                      std::optional<std::size_t> H_override = std::nullopt) {
  if (day.size() < 2) throw std::invalid_argument("realized kernel needs at least 2 ticks");
  if (!(cfg.bin_minutes > 0.0)) throw std::invalid_argument("bin_minutes must be positive");
  const auto x = detail::log_returns(day.prices);
  const std::size_t H =
      H_override ? *H_override
                 : rk_bandwidth(x, detail::bin_returns(day, 60.0 * cfg.bin_minutes), cfg.bandwidth_const);
  auto rk = realized_kernel_from_returns(x, H);
  if (cfg.annualize) rk.rkv *= std::sqrt(252.0) * 100.0;
  return rk;
}

struct DailyAggregate {
  double volume = 0.0;
  std::size_t n_trades = 0;
  bool empty = false;  // flagged so callers can warn
};

inline DailyAggregate aggregate_daily(const TickDay& day) {
  DailyAggregate a;
  for (double s : day.sizes) a.volume += s;
  a.n_trades = day.size();
  a.empty = day.size() == 0;
  return a;
}

// ---------------------------------------------------------------------------
// Tick input

/// Seconds since midnight from either a plain number or HH:MM:SS[.fff].
inline double parse_timestamp(const std::string& s, std::size_t line_no) {
  if (s.find(':') == std::string::npos) return csv::parse_double(s, line_no);
  const auto parts = csv::split(s, ':');
  if (parts.size() != 3) throw IoError("line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
  return 3600.0 * csv::parse_double(parts[0], line_no) + 60.0 * csv::parse_double(parts[1], line_no) +
         csv::parse_double(parts[2], line_no);
}

/// Reads `date,timestamp,price,size` rows (or `timestamp,price,size` with the
/// date supplied by the caller) into days in order of first appearance.
inline std::vector<TickDay> read_ticks(std::istream& in, const std::string& default_date = "") {
  std::string line;
  if (!std::getline(in, line)) throw IoError("tick file is empty");
  const auto header = csv::split(line);
  const bool has_date = !header.empty() && header[0] == "date";
  const std::size_t off = has_date ? 1 : 0;
  if (header.size() != off + 3 || header[off] != "timestamp" || header[off + 1] != "price" ||
      header[off + 2] != "size")
    throw IoError("tick header must be [date,]timestamp,price,size");
  if (!has_date && default_date.empty()) throw IoError("tick file without a date column needs a date");

  std::vector<TickDay> days;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size())
      throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
    const std::string date = has_date ? f[0] : default_date;
    if (!is_iso_date(date)) throw IoError("line " + std::to_string(line_no) + ": bad date '" + date + "'");
    auto [it, inserted] = index.emplace(date, days.size());
    if (inserted) days.push_back(TickDay{date, {}, {}, {}});
    TickDay& d = days[it->second];
    const double t = parse_timestamp(f[off], line_no);
    const double p = csv::parse_double(f[off + 1], line_no);
    const double s = csv::parse_double(f[off + 2], line_no);
    if (!(p > 0.0)) throw IoError("line " + std::to_string(line_no) + ": price must be positive");
    if (s < 0.0) throw IoError("line " + std::to_string(line_no) + ": size must be nonnegative");
    if (!d.times.empty() && !(t > d.times.back()))
      throw IoError("line " + std::to_string(line_no) + ": timestamps must increase within a day");
    d.times.push_back(t);
    d.prices.push_back(p);
    d.sizes.push_back(s);
  }
  return days;
}

struct MeasureOptions {
  RKConfig rk;
  /// Volume in millions and trades in thousands, rkv annualized in percent.
  bool scaled_units = true;
};

struct MeasureOutput {
  Panel panel;  // labels rkv, volume, trades
  std::vector<std::string> warnings;
};

/// One panel row per day with at least 2 ticks; the sign indicator flags a
/// negative close-to-close return (open-to-close on the first day).
inline MeasureOutput build_measures(const std::vector<TickDay>& days, MeasureOptions opt = {}) {
  if (opt.scaled_units) opt.rk.annualize = true;
  MeasureOutput out;
  out.panel.labels = {"rkv", "volume", "trades"};
  std::vector<std::array<double, 3>> rows;
  std::vector<double> neg;
  std::optional<double> prev_close;
  for (const auto& d : days) {
    if (d.size() < 2) {
      out.warnings.push_back(d.date + ": fewer than 2 ticks, day skipped");
      continue;
    }
    const auto rk = realized_kernel(d, opt.rk);
    const auto agg = aggregate_daily(d);
    double vol = agg.volume, ntr = static_cast<double>(agg.n_trades);
    if (opt.scaled_units) {
      vol /= 1e6;
      ntr /= 1e3;
    }
    const double ref = prev_close ? *prev_close : d.prices.front();
    neg.push_back(d.prices.back() < ref ? 1.0 : 0.0);
    prev_close = d.prices.back();
    rows.push_back({rk.rkv, vol, ntr});
    out.panel.dates.push_back(d.date);
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  out.panel.values.resize(T, 3);
  out.panel.sign_indicator.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index k = 0; k < 3; ++k) out.panel.values(t, k) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
    out.panel.sign_indicator(t) = neg[static_cast<std::size_t>(t)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detrending

struct TrendModel {
  double knot_spacing = 20.0;
  std::vector<double> knots;  // full knot vector, including the outer ones
  VectorXd coefficients;
  double lambda = 0.0;
  VectorXd log_trend;  // fitted values on the log scale
  double last_level = 1.0;
};

namespace detail {

/// Cubic B-spline basis on an equally spaced knot grid covering [0, n-1].
inline MatrixXd bspline_basis(std::size_t n, double spacing, std::vector<double>& knots) {
  const double xmax = static_cast<double>(n - 1);
  const auto nseg = static_cast<std::size_t>(std::max(1.0, std::ceil(xmax / spacing)));
  const double dx = xmax > 0.0 ? xmax / static_cast<double>(nseg) : 1.0;
  knots.clear();
  for (int k = -3; k <= static_cast<int>(nseg) + 3; ++k) knots.push_back(k * dx);
  const auto nb = static_cast<Eigen::Index>(nseg + 3);
  MatrixXd B = MatrixXd::Zero(static_cast<Eigen::Index>(n), nb);
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    // Cox-de Boor on uniform knots via the segment-local cubic pieces.
    std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(x / dx), nseg - 1);
    const double u = x / dx - static_cast<double>(seg);
    const double w0 = (1 - u) * (1 - u) * (1 - u) / 6.0;
    const double w1 = (3 * u * u * u - 6 * u * u + 4) / 6.0;
    const double w2 = (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6.0;
    const double w3 = u * u * u / 6.0;
    const auto r = static_cast<Eigen::Index>(t);
    const auto c = static_cast<Eigen::Index>(seg);
    B(r, c) = w0;
    B(r, c + 1) = w1;
    B(r, c + 2) = w2;
    B(r, c + 3) = w3;
  }
  return B;
}

inline MatrixXd second_difference(Eigen::Index nb) {
  MatrixXd D = MatrixXd::Zero(std::max<Eigen::Index>(nb - 2, 0), nb);
  for (Eigen::Index i = 0; i + 2 < nb; ++i) {
    D(i, i) = 1.0;
    D(i, i + 1) = -2.0;
    D(i, i + 2) = 1.0;
  }
  return D;
}

}  // namespace detail

struct DetrendResult {
  TrendModel trend;
  VectorXd detrended;
};

/// Penalized cubic regression spline on log(series). The smoothing parameter
/// comes from GCV over 25 log-spaced values unless `lambda` is given.
inline DetrendResult detrend(const VectorXd& series, std::optional<double> lambda = std::nullopt,
                             double knot_spacing = 20.0) {
  const auto n = series.size();
  if (n < 4) throw std::invalid_argument("detrend needs at least 4 observations");
  for (Eigen::Index t = 0; t < n; ++t)
    if (!(series(t) > 0.0)) throw std::domain_error("detrend needs positive values (row " + std::to_string(t + 1) + ")");
  const VectorXd y = series.array().log();

  TrendModel tm;
  tm.knot_spacing = knot_spacing;
  const MatrixXd B = detail::bspline_basis(static_cast<std::size_t>(n), knot_spacing, tm.knots);
  const MatrixXd D = detail::second_difference(B.cols());
  const MatrixXd BtB = B.transpose() * B;
  const MatrixXd P = D.transpose() * D;
  const VectorXd Bty = B.transpose() * y;

  auto solve = [&](double lam, VectorXd& a, double& edf) {
    Eigen::LDLT<MatrixXd> ldlt(BtB + lam * P);
    a = ldlt.solve(Bty);
    edf = ldlt.solve(BtB).trace();
  };

  std::vector<double> grid;
  if (lambda) {
    grid = {*lambda};
  } else {
    for (int k = 0; k < 25; ++k) grid.push_back(std::pow(10.0, -2.0 + 8.0 * k / 24.0));
  }
  double best_gcv = std::numeric_limits<double>::infinity();
  for (double lam : grid) {
    VectorXd a;
    double edf = 0.0;
    solve(lam, a, edf);
    const double rss = (y - B * a).squaredNorm();
    const double denom = static_cast<double>(n) - edf;
    const double gcv = denom > 0.0 ? static_cast<double>(n) * rss / (denom * denom)
                                   : std::numeric_limits<double>::infinity();
    if (gcv < best_gcv || tm.coefficients.size() == 0) {
      best_gcv = gcv;
      tm.coefficients = a;
      tm.lambda = lam;
    }
  }
  tm.log_trend = B * tm.coefficients;
  tm.last_level = std::exp(tm.log_trend(n - 1));
  DetrendResult out;
  out.detrended = (y - tm.log_trend).array().exp();
  out.trend = std::move(tm);
  return out;
}

/// Forecasts of the detrended series back in original units: the trend is
/// held at its last in-sample level.
inline VectorXd retrend(const VectorXd& forecasts, const TrendModel& trend) { return forecasts * trend.last_level; }
inline double retrend(double forecast, double last_level) { return forecast * last_level; }

}  // namespace vmem
