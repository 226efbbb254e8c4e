#pragma once

// Command-line front end: measure, detrend, simulate, fit, forecast, diagnose.
// Exit codes: 0 success, 1 model error, 2 I/O or usage error.

#include "vmem/diagnostics.hpp"
#include "vmem/estimation.hpp"
#include "vmem/measures.hpp"
#include "vmem/mem_recursion.hpp"
#include "vmem/panel_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace vmem::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Model grid

inline const std::vector<std::string>& default_grid() {
  static const std::vector<std::string> g{"D-I", "A-I", "A-N", "A-T", "AB-N", "AB-T"};
  return g;
}

inline const std::vector<std::string>& full_grid() {
  static const std::vector<std::string> g{"D-I", "D-N", "D-T", "A-I", "A-N", "A-T", "AB-I", "AB-N", "AB-T"};
  return g;
}

/// Conditional mean mu_t = omega + a1 x_{t-1} + a2 x_{t-2} + g1 x^(-)_{t-1} + b1 mu_{t-1}
/// with a2, g1 diagonal; "D", "A", "AB" set a1 and b1; "I", "N", "T" the copula.
inline ModelSpec grid_spec(const std::string& code, std::size_t K, bool targeting) {
  const auto dash = code.find('-');
  if (dash == std::string::npos) throw std::invalid_argument("model code '" + code + "' is not <D|A|AB>-<I|N|T>");
  const std::string mean = code.substr(0, dash);
  const std::string cop = code.substr(dash + 1);
  ModelSpec s;
  s.K = K;
  s.targeting = targeting;
  LagStructure l1, l2;
  l1.gamma = Structure::Diagonal;
  l2.alpha = Structure::Diagonal;
  if (mean == "D") {
    l1.alpha = Structure::Diagonal;
    l1.beta = Structure::Diagonal;
  } else if (mean == "A") {
    l1.alpha = Structure::Full;
    l1.beta = Structure::Diagonal;
  } else if (mean == "AB") {
    l1.alpha = Structure::Full;
    l1.beta = Structure::Full;
  } else {
    throw std::invalid_argument("unknown conditional-mean label '" + mean + "'");
  }
  if (cop == "I") s.copula = CopulaFamily::Independent;
  else if (cop == "N") s.copula = CopulaFamily::Normal;
  else if (cop == "T") s.copula = CopulaFamily::StudentT;
  else throw std::invalid_argument("unknown copula label '" + cop + "'");
  s.lags = {l1, l2};
  s.validate();
  return s;
}

inline std::vector<std::string> parse_grid(const std::string& text) {
  if (text == "default") return default_grid();
  if (text == "all") return full_grid();
  std::vector<std::string> out;
  for (auto& c : csv::split(text))
    if (!c.empty()) {
      grid_spec(c, 2, false);  // validates the code
      out.push_back(c);
    }
  if (out.empty()) throw std::invalid_argument("model grid is empty");
  return out;
}

/// Simulation defaults in the spirit of the empirical estimates: moderately
/// persistent means, strong positive innovation correlation.
inline FullParams default_params(const ModelSpec& spec) {
  const std::size_t K = spec.K;
  const auto k = static_cast<Eigen::Index>(K);
  FullParams p;
  p.theta = MeanParams::zeros(K, spec.L());
  for (std::size_t l = 0; l < spec.L(); ++l) {
    const auto& ls = spec.lags[l];
    auto fill = [&](MatrixXd& m, Structure s, double diag, double off) {
      if (s == Structure::Absent) return;
      m.diagonal().setConstant(diag);
      if (s == Structure::Full)
        for (Eigen::Index i = 0; i < k; ++i)
          for (Eigen::Index j = 0; j < k; ++j)
            if (i != j) m(i, j) = off;
    };
    if (l == 0) {
      fill(p.theta.alpha[0], ls.alpha, 0.2, 0.02);
      fill(p.theta.gamma[0], ls.gamma, 0.04, 0.0);
      fill(p.theta.beta[0], ls.beta, 0.6, 0.01);
    } else {
      fill(p.theta.alpha[l], ls.alpha, 0.05, 0.0);
      fill(p.theta.gamma[l], ls.gamma, 0.0, 0.0);
      fill(p.theta.beta[l], ls.beta, 0.05, 0.0);
    }
  }
  p.theta.omega = (MatrixXd::Identity(k, k) - persistence_sum(p.theta)) * VectorXd::Ones(k);
  MatrixXd R = MatrixXd::Constant(k, k, 0.5);
  if (K == 3) R << 1.0, 0.5, 0.6, 0.5, 1.0, 0.9, 0.6, 0.9, 1.0;
  R.diagonal().setOnes();
  p.copula.c_free = c_free_from_R(R);
  p.copula.nu = spec.copula == CopulaFamily::StudentT ? 9.0 : std::numeric_limits<double>::infinity();
  p.marginal.phi = VectorXd::Constant(k, 18.0);
  if (K == 3) p.marginal.phi << 23.0, 16.0, 19.0;
  if (spec.targeting) p.mu_bar = VectorXd::Ones(k);
  return p;
}

// ---------------------------------------------------------------------------
// JSON round trip

inline json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(VectorXd(m.row(r).transpose())));
  return a;
}

inline VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
  return v;
}

inline MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = vector_from_json(j[static_cast<std::size_t>(r)]).transpose();
  return m;
}

inline Structure structure_from(const std::string& s) {
  if (s == "absent") return Structure::Absent;
  if (s == "diagonal") return Structure::Diagonal;
  if (s == "full") return Structure::Full;
  throw IoError("unknown structure '" + s + "'");
}

inline CopulaFamily family_from(const std::string& s) {
  if (s == "independent") return CopulaFamily::Independent;
  if (s == "normal") return CopulaFamily::Normal;
  if (s == "student_t") return CopulaFamily::StudentT;
  throw IoError("unknown copula '" + s + "'");
}

inline json spec_to_json(const ModelSpec& s) {
  json j;
  j["K"] = s.K;
  j["copula"] = to_string(s.copula);
  j["targeting"] = s.targeting;
  json lags = json::array();
  for (const auto& l : s.lags)
    lags.push_back({{"alpha", to_string(l.alpha)}, {"gamma", to_string(l.gamma)}, {"beta", to_string(l.beta)}});
  j["lags"] = lags;
  return j;
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.K = j.at("K").get<std::size_t>();
  s.copula = family_from(j.at("copula").get<std::string>());
  s.targeting = j.at("targeting").get<bool>();
  for (const auto& l : j.at("lags"))
    s.lags.push_back({structure_from(l.at("alpha")), structure_from(l.at("gamma")), structure_from(l.at("beta"))});
  s.validate();
  return s;
}

inline json params_to_json(const FullParams& p) {
  json j;
  j["omega"] = to_json(p.theta.omega);
  json a = json::array(), g = json::array(), b = json::array();
  for (std::size_t l = 0; l < p.theta.L(); ++l) {
    a.push_back(to_json(p.theta.alpha[l]));
    g.push_back(to_json(p.theta.gamma[l]));
    b.push_back(to_json(p.theta.beta[l]));
  }
  j["alpha"] = a;
  j["gamma"] = g;
  j["beta"] = b;
  j["c_free"] = to_json(p.copula.c_free);
  j["nu"] = std::isfinite(p.copula.nu) ? json(p.copula.nu) : json(nullptr);
  j["phi"] = to_json(p.marginal.phi);
  j["mu_bar"] = p.mu_bar ? to_json(*p.mu_bar) : json(nullptr);
  return j;
}

inline FullParams params_from_json(const json& j) {
  FullParams p;
  p.theta.omega = vector_from_json(j.at("omega"));
  for (const auto& m : j.at("alpha")) p.theta.alpha.push_back(matrix_from_json(m));
  for (const auto& m : j.at("gamma")) p.theta.gamma.push_back(matrix_from_json(m));
  for (const auto& m : j.at("beta")) p.theta.beta.push_back(matrix_from_json(m));
  p.copula.c_free = vector_from_json(j.at("c_free"));
  p.copula.nu = j.at("nu").is_null() ? std::numeric_limits<double>::infinity() : j.at("nu").get<double>();
  p.marginal.phi = vector_from_json(j.at("phi"));
  if (!j.at("mu_bar").is_null()) p.mu_bar = vector_from_json(j.at("mu_bar"));
  return p;
}

struct StoredFit {
  std::string model;
  std::vector<std::string> labels;
  std::string first_date, last_date;
  VectorXd insample_mean;
  FitResult fit;
};

inline json fit_to_json(const StoredFit& s) {
  const FitResult& f = s.fit;
  json j;
  j["model"] = s.model;
  j["labels"] = s.labels;
  j["sample"] = {{"first", s.first_date}, {"last", s.last_date}, {"T", f.T}};
  j["insample_mean"] = to_json(s.insample_mean);
  j["spec"] = spec_to_json(f.spec);
  j["concentrated"] = f.concentrated;
  j["params"] = params_to_json(f.full);
  j["loglik"] = f.loglik;
  const auto ic = information_criteria(f.loglik, f.n_free(), static_cast<double>(f.T));
  j["n_free"] = f.n_free();
  j["aic"] = ic.aic;
  j["bic"] = ic.bic;
  j["names"] = f.names;
  j["estimates"] = to_json(f.estimates);
  j["se"] = to_json(f.se);
  j["cov"] = to_json(f.cov);
  j["cov_robust"] = f.cov_robust.size() ? to_json(f.cov_robust) : json(nullptr);
  j["convergence"] = {{"converged", f.convergence.converged},
                      {"iterations", f.convergence.iterations},
                      {"grad_norm", f.convergence.grad_norm},
                      {"clamp_count", f.convergence.clamp_count},
                      {"message", f.convergence.message}};
  if (!f.cov_message.empty()) j["cov_message"] = f.cov_message;
  return j;
}

inline StoredFit fit_from_json(const json& j) {
  StoredFit s;
  s.model = j.at("model").get<std::string>();
  s.labels = j.at("labels").get<std::vector<std::string>>();
  s.first_date = j.at("sample").at("first").get<std::string>();
  s.last_date = j.at("sample").at("last").get<std::string>();
  s.insample_mean = vector_from_json(j.at("insample_mean"));
  FitResult& f = s.fit;
  f.T = j.at("sample").at("T").get<std::size_t>();
  f.spec = spec_from_json(j.at("spec"));
  f.concentrated = j.at("concentrated").get<bool>();
  f.full = params_from_json(j.at("params"));
  f.loglik = j.at("loglik").get<double>();
  f.names = j.at("names").get<std::vector<std::string>>();
  f.estimates = vector_from_json(j.at("estimates"));
  f.se = vector_from_json(j.at("se"));
  f.cov = matrix_from_json(j.at("cov"));
  if (!j.at("cov_robust").is_null()) f.cov_robust = matrix_from_json(j.at("cov_robust"));
  f.t_stats = f.estimates.cwiseQuotient(f.se);
  const auto& c = j.at("convergence");
  f.convergence.converged = c.at("converged").get<bool>();
  f.convergence.iterations = c.at("iterations").get<std::size_t>();
  f.convergence.grad_norm = c.at("grad_norm").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                         : c.at("grad_norm").get<double>();
  f.convergence.clamp_count = c.at("clamp_count").get<std::size_t>();
  f.convergence.message = c.at("message").get<std::string>();
  return s;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline StoredFit load_fit(const fs::path& path) {
  try {
    return fit_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw IoError("malformed fit file '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sample split and worker pool

/// Index of the first row dated on or after `split`; T when absent.
inline std::size_t split_index(const Panel& panel, const std::string& split) {
  if (split.empty()) return panel.T();
  if (!is_iso_date(split)) throw std::invalid_argument("split date '" + split + "' is not YYYY-MM-DD");
  const auto it = std::lower_bound(panel.dates.begin(), panel.dates.end(), split);
  const auto n = static_cast<std::size_t>(it - panel.dates.begin());
  if (n == 0 || n == panel.T()) throw std::invalid_argument("split date " + split + " is not inside the sample");
  return n;
}

inline std::size_t thread_count() {
  if (const char* env = std::getenv("VMEM_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i < n on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Text tables

class Table {
 public:
  explicit Table(std::vector<std::string> header, std::size_t first_width = 24, std::size_t width = 12)
      : header_(std::move(header)), first_(first_width), width_(width) {}
  void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
  void rule() { rows_.push_back({}); }

  std::string str() const {
    std::ostringstream os;
    emit(os, header_);
    os << std::string(first_ + width_ * (header_.size() - 1), '-') << '\n';
    for (const auto& r : rows_) {
      if (r.empty()) os << std::string(first_ + width_ * (header_.size() - 1), '-') << '\n';
      else emit(os, r);
    }
    return os.str();
  }

 private:
  void emit(std::ostream& os, const std::vector<std::string>& cells) const {
    std::string line;
    for (std::size_t c = 0; c < header_.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      const std::size_t w = c == 0 ? first_ : width_;
      std::string padded = c == 0 ? cell + std::string(w > cell.size() ? w - cell.size() : 1, ' ')
                                  : std::string(w > cell.size() ? w - cell.size() : 1, ' ') + cell;
      line += padded;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::size_t first_, width_;
};

inline std::string num(double v, int decimals) {
  if (!std::isfinite(v)) return "NA";
  std::string s = csv::fixed(v, decimals);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);  // no "-0.0000"
  return s;
}

// ---------------------------------------------------------------------------
// Reports

struct CellOutcome {
  std::string model;
  std::optional<StoredFit> fit;
  std::vector<LjungBox> lb;
  std::string error;
};

/// Coefficient table for equation `i` with robust t-stats, causality p-values,
/// logLik/AIC/BIC and Ljung-Box p-values, one column per model.
inline std::string coefficient_table(const std::vector<CellOutcome>& cells, const std::vector<std::string>& labels,
                                     std::size_t i) {
  std::vector<std::string> header{""};
  for (const auto& c : cells) header.push_back(c.model);
  Table tab(header);
  const std::size_t K = labels.size();
  const std::string row = std::to_string(i + 1);
  auto coef_rows = [&](const std::string& name, const std::string& title) {
    std::vector<std::string> est{title}, ts{""};
    bool any = false;
    for (const auto& c : cells) {
      std::optional<Eigen::Index> k;
      if (c.fit) k = c.fit->fit.index_of(name);
      if (k) {
        any = true;
        est.push_back(num(c.fit->fit.estimates(*k), 4));
        ts.push_back("(" + num(c.fit->fit.t_stats(*k), 2) + ")");
      } else {
        est.emplace_back();
        ts.emplace_back();
      }
    }
    if (any) {
      tab.row(est);
      tab.row(ts);
    }
  };
  coef_rows("omega[" + row + "]", "omega");
  for (std::size_t j = 0; j < K; ++j)
    coef_rows("alpha1[" + row + "," + std::to_string(j + 1) + "]", labels[j] + "_{t-1}");
  coef_rows("alpha2[" + row + "," + row + "]", labels[i] + "_{t-2}");
  coef_rows("gamma1[" + row + "," + row + "]", labels[i] + "_{t-1}^(-)");
  for (std::size_t j = 0; j < K; ++j)
    coef_rows("beta1[" + row + "," + std::to_string(j + 1) + "]", "mu(" + labels[j] + ")_{t-1}");
  tab.rule();
  for (std::size_t j = 0; j < K; ++j) {
    if (j == i) continue;
    std::vector<std::string> r{labels[i] + "_t <- " + labels[j] + "_{t-1}"};
    for (const auto& c : cells) {
      std::string cell;
      if (c.fit) {
        try {
          cell = num(causality_wald(c.fit->fit, j, i).p_value, 4);
        } catch (const std::invalid_argument&) {
        } catch (const ModelError&) {
          cell = "NA";
        }
      }
      r.push_back(cell);
    }
    tab.row(r);
  }
  tab.rule();
  std::vector<std::string> ll{"logLik"}, aic{"AIC"}, bic{"BIC"};
  for (const auto& c : cells) {
    if (!c.fit) {
      ll.push_back("failed");
      aic.emplace_back();
      bic.emplace_back();
      continue;
    }
    const auto& f = c.fit->fit;
    const auto ic = information_criteria(f.loglik, f.n_free(), static_cast<double>(f.T));
    ll.push_back(num(f.loglik, 2));
    aic.push_back(num(ic.aic, 2));
    bic.push_back(num(ic.bic, 2));
  }
  tab.row(ll);
  tab.row(aic);
  tab.row(bic);
  tab.rule();
  if (!cells.empty()) {
    std::size_t n_lb = 0;
    for (const auto& c : cells) n_lb = std::max(n_lb, c.lb.size());
    for (std::size_t k = 0; k < n_lb; ++k) {
      std::string title;
      std::vector<std::string> r{""};
      for (const auto& c : cells) {
        if (k < c.lb.size()) {
          title = "LB(" + std::to_string(c.lb[k].lag) + ")";
          r.push_back(num(c.lb[k].p_value, 4));
        } else {
          r.emplace_back();
        }
      }
      r[0] = title;
      tab.row(r);
    }
  }
  return tab.str();
}

inline std::string phi_table(const std::vector<CellOutcome>& cells, std::size_t K) {
  std::vector<std::string> header{""};
  for (const auto& c : cells) header.push_back(c.model);
  Table tab(header, 12);
  for (std::size_t i = 0; i < K; ++i) {
    std::vector<std::string> r{"phi_" + std::to_string(i + 1)};
    for (const auto& c : cells) r.push_back(c.fit ? num(c.fit->fit.full.marginal.phi(static_cast<Eigen::Index>(i)), 2) : "");
    tab.row(r);
  }
  std::vector<std::string> nu{"nu"};
  bool any_nu = false;
  for (const auto& c : cells) {
    if (c.fit && c.fit->fit.spec.copula == CopulaFamily::StudentT) {
      nu.push_back(num(c.fit->fit.full.copula.nu, 2));
      any_nu = true;
    } else {
      nu.emplace_back();
    }
  }
  if (any_nu) tab.row(nu);
  return tab.str();
}

inline std::string correlation_table(const std::vector<CellOutcome>& cells, const std::vector<std::string>& labels) {
  const std::size_t K = labels.size();
  std::vector<const CellOutcome*> cop;
  for (const auto& c : cells)
    if (c.fit && c.fit->fit.spec.copula != CopulaFamily::Independent) cop.push_back(&c);
  if (cop.empty() || K < 2) return "(no copula models)\n";
  std::vector<std::string> header{""};
  for (const auto* c : cop)
    for (std::size_t j = 1; j < K; ++j) header.push_back(c->model + ":" + labels[j]);
  Table tab(header, 12, 14);
  for (std::size_t i = 0; i + 1 < K; ++i) {
    std::vector<std::string> r{labels[i]};
    for (const auto* c : cop) {
      const MatrixXd R = build_R(c->fit->fit.full.copula.c_free, K).R;
      for (std::size_t j = 1; j < K; ++j)
        r.push_back(j > i ? num(R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 3) : "");
    }
    tab.row(r);
  }
  return tab.str();
}

// ---------------------------------------------------------------------------
// Commands

struct MeasureArgs {
  std::string ticks, output, date;
  bool raw_units = false;
  double bin_minutes = 15.0;
};

inline void cmd_measure(const MeasureArgs& a, std::ostream& err) {
  std::ifstream in(a.ticks);
  if (!in) throw IoError("cannot open tick file '" + a.ticks + "'");
  const auto days = read_ticks(in, a.date);
  MeasureOptions opt;
  opt.scaled_units = !a.raw_units;
  opt.rk.bin_minutes = a.bin_minutes;
  const auto m = build_measures(days, opt);
  for (const auto& w : m.warnings) err << "warning: " << w << '\n';
  if (a.output.empty() || a.output == "-") write_panel_csv(std::cout, m.panel);
  else write_panel_csv(a.output, m.panel);
}

struct DetrendArgs {
  std::string input, output, split;
  double lambda = -1.0;  // negative: GCV
};

inline void cmd_detrend(const DetrendArgs& a) {
  const PanelFile pf = read_panel_csv(a.input);
  const Panel& panel = pf.panel;
  const std::size_t n_in = split_index(panel, a.split);
  Panel out = panel;
  MatrixXd trend(panel.T(), panel.K());
  for (std::size_t i = 0; i < panel.K(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const VectorXd in_sample = panel.values.col(ii).head(static_cast<Eigen::Index>(n_in));
    const auto d = detrend(in_sample, a.lambda >= 0.0 ? std::optional<double>(a.lambda) : std::nullopt);
    for (std::size_t t = 0; t < panel.T(); ++t) {
      const auto tt = static_cast<Eigen::Index>(t);
      const double level = t < n_in ? std::exp(d.trend.log_trend(tt)) : d.trend.last_level;
      trend(tt, ii) = level;
      out.values(tt, ii) = panel.values(tt, ii) / level;
    }
  }
  write_panel_csv(a.output, out, trend);
}

struct SimulateArgs {
  std::string model = "A-T", output, params;
  std::size_t K = 3, T = 1000;
  std::uint64_t seed = 1;
};

inline void cmd_simulate(const SimulateArgs& a) {
  ModelSpec spec;
  FullParams p;
  if (!a.params.empty()) {
    const StoredFit s = load_fit(a.params);
    spec = s.fit.spec;
    p = s.fit.full;
  } else {
    spec = grid_spec(a.model, a.K, false);
    p = default_params(spec);
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < spec.K; ++i) labels.push_back("x" + std::to_string(i + 1));
  const Panel panel = simulate(p, spec, a.T, a.seed, labels);
  write_panel_csv(a.output, panel);
}

struct FitArgs {
  std::string input, output_dir = ".", split, grid = "default";
  bool no_targeting = false;
  bool full_normal = false;  // full ML instead of the concentrated likelihood for N cells
  std::size_t max_iter = 2000;
  std::vector<std::size_t> lb_lags{12, 22, 32};
};

inline std::vector<CellOutcome> cmd_fit(const FitArgs& a, std::ostream& err) {
  const PanelFile pf = read_panel_csv(a.input);
  if (const auto v = validate_panel(pf.panel); !v.empty()) throw IoError("invalid panel: " + v.front().message);
  const std::size_t n_in = split_index(pf.panel, a.split);
  const Panel panel = pf.panel.slice(0, n_in);
  const auto grid = parse_grid(a.grid);
  fs::create_directories(a.output_dir);

  // Mean structures nest D < A < AB. Richer cells are fitted after their
  // parent and also started from the parent's optimum; the better fit is kept.
  auto depth = [](const std::string& code) {
    const std::string mean = code.substr(0, code.find('-'));
    return mean == "D" ? 0 : mean == "A" ? 1 : 2;
  };
  auto parent_of = [&](const std::string& code) -> std::optional<std::size_t> {
    const auto dash = code.find('-');
    const std::string mean = code.substr(0, dash);
    const std::string up = mean == "AB" ? "A" : mean == "A" ? "D" : "";
    if (up.empty()) return std::nullopt;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (grid[g] == up + code.substr(dash)) return g;
    return std::nullopt;
  };

  std::vector<CellOutcome> cells(grid.size());
  std::mutex err_mutex;
  auto fit_cell = [&](std::size_t g) {
    CellOutcome& cell = cells[g];
    cell.model = grid[g];
    try {
      const ModelSpec spec = grid_spec(grid[g], panel.K(), !a.no_targeting);
      FitOptions opt;
      opt.optim.max_iter = a.max_iter;
      opt.concentrated = spec.copula == CopulaFamily::Normal && !a.full_normal;
      StoredFit s;
      s.model = grid[g];
      s.labels = panel.labels;
      s.first_date = panel.dates.front();
      s.last_date = panel.dates.back();
      s.insample_mean = panel.sample_mean();
      s.fit = fit(panel, spec, opt);
      if (const auto pg = parent_of(grid[g]); pg && cells[*pg].fit) {
        FitOptions warm = opt;
        warm.start = cells[*pg].fit->fit.full;
        try {
          FitResult w = fit(panel, spec, warm);
          if (w.loglik > s.fit.loglik) s.fit = std::move(w);
        } catch (const ModelError&) {
        }
      }
      const FilterOutput f = filter(panel, s.fit.full.theta);
      cell.lb = ljung_box_joint(f.eps, a.lb_lags);
      if (!s.fit.convergence.converged) {
        std::lock_guard lock(err_mutex);
        err << "warning: " << grid[g] << " did not converge (" << s.fit.convergence.message << ")\n";
      }
      cell.fit = std::move(s);
    } catch (const std::exception& e) {
      cell.error = e.what();
      std::lock_guard lock(err_mutex);
      err << "warning: " << grid[g] << " failed: " << e.what() << '\n';
    }
  };
  for (int level = 0; level < 3; ++level) {
    std::vector<std::size_t> batch;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (depth(grid[g]) == level) batch.push_back(g);
    parallel_for(batch.size(), thread_count(), [&](std::size_t b) { fit_cell(batch[b]); });
  }

  std::ostringstream report;
  report << "Sample " << panel.dates.front() << " to " << panel.dates.back() << " (T = " << panel.T() << ")\n";
  report << "Expectation targeting: " << (a.no_targeting ? "no" : "yes")
         << "; Normal copula: " << (a.full_normal ? "full ML" : "concentrated likelihood") << "\n";
  report << "Robust t-stats in parentheses; causality rows report Wald p-values.\n\n";
  for (std::size_t i = 0; i < panel.K(); ++i)
    report << "Coefficients of the " << panel.labels[i] << " equation\n"
           << coefficient_table(cells, panel.labels, i) << '\n';
  report << "Gamma marginal shapes\n" << phi_table(cells, panel.K()) << '\n';
  report << "Copula correlations\n" << correlation_table(cells, panel.labels);
  for (const auto& c : cells)
    if (!c.fit) report << "\n" << c.model << " failed: " << c.error << '\n';
  write_text(fs::path(a.output_dir) / "report.txt", report.str());

  std::ostringstream coef, diag;
  coef << "model,parameter,estimate,se,t_stat\n";
  diag << "model,test,lag,statistic,p_value\n";
  for (const auto& c : cells) {
    if (!c.fit) continue;
    const auto& f = c.fit->fit;
    write_text(fs::path(a.output_dir) / ("fit_" + c.model + ".json"), fit_to_json(*c.fit).dump(2) + "\n");
    for (std::size_t k = 0; k < f.names.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      coef << c.model << ',' << f.names[k] << ',' << csv::fmt(f.estimates(kk)) << ',' << csv::fmt(f.se(kk)) << ','
           << csv::fmt(f.t_stats(kk)) << '\n';
    }
    for (const auto& lb : c.lb)
      diag << c.model << ",ljung_box," << lb.lag << ',' << csv::fmt(lb.statistic) << ',' << csv::fmt(lb.p_value)
           << '\n';
  }
  write_text(fs::path(a.output_dir) / "coefficients.csv", coef.str());
  write_text(fs::path(a.output_dir) / "diagnostics.csv", diag.str());
  return cells;
}

struct ForecastArgs {
  std::string input, fits_dir = ".", output_dir = ".", split, benchmark = "D-I";
  std::size_t horizon = 1;
};

inline void cmd_forecast(const ForecastArgs& a) {
  const PanelFile pf = read_panel_csv(a.input);
  const Panel& panel = pf.panel;
  if (a.split.empty()) throw std::invalid_argument("forecast needs a split date");
  const std::size_t n_in = split_index(panel, a.split);
  const std::size_t T = panel.T(), K = panel.K();
  const MatrixXd trend = pf.trend ? *pf.trend : MatrixXd::Ones(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));

  std::vector<StoredFit> fits;
  for (const auto& code : full_grid()) {
    const fs::path p = fs::path(a.fits_dir) / ("fit_" + code + ".json");
    if (fs::exists(p)) fits.push_back(load_fit(p));
  }
  if (fits.empty()) throw IoError("no fit files found in '" + a.fits_dir + "'");
  const auto bench = std::find_if(fits.begin(), fits.end(), [&](const StoredFit& s) { return s.model == a.benchmark; });
  if (bench == fits.end()) throw IoError("benchmark fit " + a.benchmark + " is missing");

  const auto n_out = static_cast<Eigen::Index>(T - n_in);
  // Rolling one-step forecasts with fixed in-sample estimates.
  std::map<std::string, MatrixXd> fc;
  std::ostringstream fcsv;
  fcsv << "date,model";
  for (const auto& l : panel.labels) fcsv << ",x_" << l << ",mu_" << l << ",x_orig_" << l << ",mu_orig_" << l;
  fcsv << '\n';
  for (const auto& s : fits) {
    if (s.labels != panel.labels) throw IoError("fit " + s.model + " was estimated on different series");
    const MatrixXd mu = conditional_means(panel, s.fit.full.theta, LagState::constant(s.insample_mean, s.fit.full.theta.L()));
    fc[s.model] = mu.bottomRows(n_out);
    for (Eigen::Index r = 0; r < n_out; ++r) {
      const auto t = static_cast<Eigen::Index>(n_in) + r;
      fcsv << panel.dates[static_cast<std::size_t>(t)] << ',' << s.model;
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(K); ++i) {
        const double lvl = trend(t - 1, i);
        fcsv << ',' << csv::fmt(panel.values(t, i)) << ',' << csv::fmt(mu(t, i)) << ','
             << csv::fmt(panel.values(t, i) * trend(t, i)) << ',' << csv::fmt(mu(t, i) * lvl);
      }
      fcsv << '\n';
    }
  }
  write_text(fs::path(a.output_dir) / "forecasts.csv", fcsv.str());

  // Diebold-Mariano against the benchmark; e_G enters negated so that smaller is better.
  std::ostringstream dm_csv, dm_txt;
  dm_csv << "model,series,loss,scale,dm,p_value\n";
  dm_txt << "Diebold-Mariano statistics against " << a.benchmark << ", " << a.horizon
         << "-step forecasts over " << panel.dates[n_in] << " to " << panel.dates.back() << " (" << n_out
         << " observations)\nPositive values favour the listed model; * marks 5% significance.\n"
         << "e_G is compared through -e_G.\n\n";
  for (std::size_t i = 0; i < K; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Table tab({"", "e_N detr", "e_N orig", "e_G detr", "e_G orig"}, 12);
    auto loss_of = [&](const MatrixXd& mu, bool original) {
      VectorXd x(n_out), m(n_out);
      for (Eigen::Index r = 0; r < n_out; ++r) {
        const auto t = static_cast<Eigen::Index>(n_in) + r;
        x(r) = panel.values(t, ii) * (original ? trend(t, ii) : 1.0);
        m(r) = mu(r, ii) * (original ? trend(t - 1, ii) : 1.0);
      }
      return losses(x, m);
    };
    const auto b_det = loss_of(fc[a.benchmark], false);
    const auto b_org = loss_of(fc[a.benchmark], true);
    for (const auto& s : fits) {
      if (s.model == a.benchmark) continue;
      const auto m_det = loss_of(fc[s.model], false);
      const auto m_org = loss_of(fc[s.model], true);
      std::vector<std::string> r{s.model};
      auto add = [&](const VectorXd& la, const VectorXd& lb, const char* loss, const char* scale) {
        DieboldMariano dm;
        try {
          dm = diebold_mariano(la, lb, a.horizon);
        } catch (const std::invalid_argument&) {
        }
        dm_csv << s.model << ',' << panel.labels[i] << ',' << loss << ',' << scale << ','
               << (dm.defined ? csv::fmt(dm.statistic) : "NA") << ',' << (dm.defined ? csv::fmt(dm.p_value) : "NA")
               << '\n';
        r.push_back(dm.defined ? num(dm.statistic, 3) + (dm.p_value < 0.05 ? "*" : "") : "undefined");
      };
      add(b_det.e_N, m_det.e_N, "e_N", "detrended");
      add(b_org.e_N, m_org.e_N, "e_N", "original");
      add(-b_det.e_G, -m_det.e_G, "e_G", "detrended");
      add(-b_org.e_G, -m_org.e_G, "e_G", "original");
      tab.row(r);
    }
    // raw average losses; e_G is reported as printed, larger is better
    Table avg({"", "mean e_N detr", "mean e_N orig", "mean e_G detr", "mean e_G orig"}, 12, 16);
    for (const auto& s : fits) {
      const auto det = loss_of(fc[s.model], false);
      const auto org = loss_of(fc[s.model], true);
      auto nanmean = [](const VectorXd& v) {
        double sum = 0.0;
        std::size_t n = 0;
        for (Eigen::Index t = 0; t < v.size(); ++t)
          if (std::isfinite(v(t))) {
            sum += v(t);
            ++n;
          }
        return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
      };
      avg.row({s.model, num(nanmean(det.e_N), 4), num(nanmean(org.e_N), 4), num(nanmean(det.e_G), 4),
               num(nanmean(org.e_G), 4)});
    }
    dm_txt << panel.labels[i] << '\n' << tab.str() << '\n' << avg.str() << '\n';
  }
  write_text(fs::path(a.output_dir) / "dm.csv", dm_csv.str());
  write_text(fs::path(a.output_dir) / "dm.txt", dm_txt.str());
}

struct DiagnoseArgs {
  std::string input, fit, output, split;
  std::vector<std::size_t> lb_lags{12, 22, 32};
};

inline void cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const PanelFile pf = read_panel_csv(a.input);
  const std::size_t n_in = split_index(pf.panel, a.split);
  const Panel panel = pf.panel.slice(0, n_in);
  const StoredFit s = load_fit(a.fit);
  const FitResult& f = s.fit;
  if (panel.T() != f.T) throw IoError("panel rows do not match the fitted sample (check --split)");
  const FilterOutput filt = filter(panel, f.full.theta, std::nullopt, s.insample_mean);
  std::ostringstream csv_out;
  csv_out << "model,test,lag,statistic,p_value\n";
  for (const auto& lb : ljung_box_joint(filt.eps, a.lb_lags))
    csv_out << s.model << ",ljung_box," << lb.lag << ',' << csv::fmt(lb.statistic) << ',' << csv::fmt(lb.p_value)
            << '\n';
  const auto ic = information_criteria(f.loglik, f.n_free(), static_cast<double>(f.T));
  csv_out << s.model << ",loglik,," << csv::fmt(f.loglik) << ",\n";
  csv_out << s.model << ",aic,," << csv::fmt(ic.aic) << ",\n";
  csv_out << s.model << ",bic,," << csv::fmt(ic.bic) << ",\n";
  for (std::size_t i = 0; i < panel.K(); ++i)
    for (std::size_t j = 0; j < panel.K(); ++j) {
      if (i == j) continue;
      try {
        const auto w = causality_wald(f, j, i);
        csv_out << s.model << ",causality " << panel.labels[j] << "->" << panel.labels[i] << ",,"
                << csv::fmt(w.statistic) << ',' << csv::fmt(w.p_value) << '\n';
      } catch (const std::invalid_argument&) {
      }
    }
  if (a.output.empty() || a.output == "-") out << csv_out.str();
  else write_text(a.output, csv_out.str());
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Vector multiplicative error models with copula innovations"};
  app.set_config("--config", "", "INI file with one section per command");
  app.require_subcommand(1);

  MeasureArgs ma;
  auto* measure = app.add_subcommand("measure", "Daily realized kernel, volume and trade counts from ticks");
  measure->add_option("--ticks", ma.ticks, "Tick CSV: date,timestamp,price,size")->required();
  measure->add_option("--output,-o", ma.output, "Panel CSV (stdout when omitted)");
  measure->add_option("--date", ma.date, "Date for tick files without a date column");
  measure->add_option("--bin-minutes", ma.bin_minutes, "Bin length for the bandwidth pilot")->capture_default_str();
  measure->add_flag("--raw-units", ma.raw_units, "Keep daily rkv, shares and trade counts unscaled");

  DetrendArgs da;
  auto* dtr = app.add_subcommand("detrend", "Multiplicative spline detrending of each series");
  dtr->add_option("--input,-i", da.input, "Panel CSV")->required();
  dtr->add_option("--output,-o", da.output, "Detrended panel CSV with trend_<label> columns")->required();
  dtr->add_option("--split", da.split, "First out-of-sample date; the trend is fitted before it");
  dtr->add_option("--lambda", da.lambda, "Fixed smoothing parameter (default: GCV)");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a panel from a model");
  sim->add_option("--model", sa.model, "Model code such as A-T")->capture_default_str();
  sim->add_option("--params", sa.params, "Fit JSON to simulate from instead of the defaults");
  sim->add_option("--K", sa.K, "Number of series")->capture_default_str();
  sim->add_option("--T", sa.T, "Number of observations")->capture_default_str();
  sim->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  sim->add_option("--output,-o", sa.output, "Panel CSV")->required();

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit a grid of models and write the estimation report");
  fitc->add_option("--input,-i", fa.input, "Panel CSV")->required();
  fitc->add_option("--output-dir,-d", fa.output_dir, "Output directory")->capture_default_str();
  fitc->add_option("--split", fa.split, "First out-of-sample date");
  fitc->add_option("--grid", fa.grid, "Comma-separated codes, 'default' or 'all'")->capture_default_str();
  fitc->add_flag("--no-targeting", fa.no_targeting, "Estimate omega freely");
  fitc->add_flag("--full-normal", fa.full_normal, "Full ML for Normal copula cells");
  fitc->add_option("--max-iter", fa.max_iter, "Optimizer iteration limit")->capture_default_str();
  fitc->add_option("--lb-lags", fa.lb_lags, "Ljung-Box lags")->capture_default_str();

  ForecastArgs fo;
  auto* fc = app.add_subcommand("forecast", "One-step forecasts and Diebold-Mariano comparisons");
  fc->add_option("--input,-i", fo.input, "Detrended panel CSV")->required();
  fc->add_option("--fits-dir", fo.fits_dir, "Directory with fit_<model>.json files")->capture_default_str();
  fc->add_option("--output-dir,-d", fo.output_dir, "Output directory")->capture_default_str();
  fc->add_option("--split", fo.split, "First out-of-sample date")->required();
  fc->add_option("--benchmark", fo.benchmark, "Reference model")->capture_default_str();
  fc->add_option("--horizon", fo.horizon, "Forecast horizon for the long-run variance")->capture_default_str();

  DiagnoseArgs dg;
  auto* dgc = app.add_subcommand("diagnose", "Residual diagnostics for one fitted model");
  dgc->add_option("--input,-i", dg.input, "Panel CSV used for the fit")->required();
  dgc->add_option("--fit", dg.fit, "Fit JSON")->required();
  dgc->add_option("--split", dg.split, "First out-of-sample date used for the fit");
  dgc->add_option("--output,-o", dg.output, "CSV output (stdout when omitted)");
  dgc->add_option("--lb-lags", dg.lb_lags, "Ljung-Box lags")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*measure) cmd_measure(ma, err);
    else if (*dtr) cmd_detrend(da);
    else if (*sim) cmd_simulate(sa);
    else if (*fitc) cmd_fit(fa, err);
    else if (*fc) {
      fs::create_directories(fo.output_dir);
      cmd_forecast(fo);
    } else if (*dgc) cmd_diagnose(dg, out);
    return 0;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace vmem::cli
