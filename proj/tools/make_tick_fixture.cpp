// Writes a deterministic synthetic tick file: one trading day per row block,
// with daily volatility and activity driven by persistent latent factors plus
// a slow upward trend in activity, and bid-ask style noise on prices.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "vmem/mem_recursion.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic tick data"};
  std::size_t days = 200, ticks = 150;
  std::uint64_t seed = 7;
  std::string output;
  app.add_option("--days", days)->capture_default_str();
  app.add_option("--ticks", ticks, "Average ticks per day")->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--output,-o", output)->required();
  CLI11_PARSE(app, argc, argv);

  std::ofstream out(output);
  if (!out) {
    std::cerr << "cannot write " << output << '\n';
    return 2;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  out << "date,timestamp,price,size\n";
  double log_vol = 0.0, log_act = 0.0, price = 50.0;
  const double open = 9.5 * 3600.0, close = 16.0 * 3600.0;
  for (std::size_t d = 0; d < days; ++d) {
    log_vol = 0.9 * log_vol + 0.3 * z(rng);
    log_act = 0.8 * log_act + 0.5 * log_vol * 0.3 + 0.2 * z(rng);
    const double trend = 1.0 + 0.5 * static_cast<double>(d) / static_cast<double>(days);
    const double sigma_day = 0.012 * std::exp(log_vol);
    const double lambda = static_cast<double>(ticks) * trend * std::exp(log_act);
    std::poisson_distribution<int> count(lambda);
    const int n = std::max(3, count(rng));
    const double step = sigma_day / std::sqrt(static_cast<double>(n));
    const std::string date = vmem::business_date(d);
    const double dt = (close - open) / (n + 1);
    for (int k = 0; k < n; ++k) {
      const double t = open + dt * (k + 0.6 + 0.8 * unif(rng));
      price *= std::exp(step * z(rng));
      const double noise = 0.0002 * (unif(rng) < 0.5 ? -1.0 : 1.0);
      const double traded = price * std::exp(noise);
      const double size = 100.0 * std::ceil(10.0 * trend * std::exp(0.7 * z(rng) + 0.5 * log_act));
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s,%.3f,%.4f,%.0f\n", date.c_str(), t, traded, size);
      out << buf;
    }
  }
  return 0;
}
