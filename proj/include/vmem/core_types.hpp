#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Errors raised when a parameter point cannot be evaluated (non-positive
/// conditional mean, non-stationary targeting point, degenerate correlation).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The conditional mean hit a non-positive value at (t, i).
class FilterError : public ModelError {
 public:
  FilterError(std::size_t t, std::size_t i, double value)
      : ModelError(make_message(t, i, value)), t_(t), i_(i) {}
  std::size_t t() const noexcept { return t_; }
  std::size_t i() const noexcept { return i_; }

 private:
  static std::string make_message(std::size_t t, std::size_t i, double v) {
    std::ostringstream os;
    os << "conditional mean non-positive at (t=" << t + 1 << ", i=" << i + 1 << "): " << v;
    return os.str();
  }
  std::size_t t_;
  std::size_t i_;
};

// ---------------------------------------------------------------------------
// Data panel

/// T days by K nonnegative series plus a common 0/1 negative-return indicator.
struct Panel {
  std::vector<std::string> dates;
  std::vector<std::string> labels;
  MatrixXd values;          // T x K
  VectorXd sign_indicator;  // T, 1 = negative daily return

  std::size_t T() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t K() const { return static_cast<std::size_t>(values.cols()); }

  VectorXd sample_mean() const { return values.colwise().mean().transpose(); }

  /// Rows [begin, end).
  Panel slice(std::size_t begin, std::size_t end) const {
    Panel out;
    out.labels = labels;
    out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     dates.begin() + static_cast<std::ptrdiff_t>(end));
    const auto n = static_cast<Eigen::Index>(end - begin);
    out.values = values.middleRows(static_cast<Eigen::Index>(begin), n);
    out.sign_indicator = sign_indicator.segment(static_cast<Eigen::Index>(begin), n);
    return out;
  }
};

struct PanelViolation {
  std::size_t row = 0;  // 1-based, 0 when not row specific
  std::size_t col = 0;  // 1-based, 0 when not column specific
  std::string message;
};

inline bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') return false;
  const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(s.substr(0, 4))},
                                        std::chrono::month{static_cast<unsigned>(std::stoi(s.substr(5, 2)))},
                                        std::chrono::day{static_cast<unsigned>(std::stoi(s.substr(8, 2)))}};
  return ymd.ok();
}

/// Lists every violated panel invariant; empty when the panel is valid.
inline std::vector<PanelViolation> validate_panel(const Panel& panel) {
  std::vector<PanelViolation> out;
  const std::size_t T = panel.T();
  const std::size_t K = panel.K();
  if (T < 1) out.push_back({0, 0, "panel has no rows"});
  if (K < 1) out.push_back({0, 0, "panel has no series"});
  if (panel.labels.size() != K)
    out.push_back({0, 0, "label count " + std::to_string(panel.labels.size()) +
                             " does not match K=" + std::to_string(K)});
  if (panel.dates.size() != T)
    out.push_back({0, 0, "date count does not match T=" + std::to_string(T)});
  if (static_cast<std::size_t>(panel.sign_indicator.size()) != T)
    out.push_back({0, 0, "sign indicator length does not match T=" + std::to_string(T)});

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < K; ++i) {
      const double v = panel.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
      if (!std::isfinite(v) || v < 0.0) {
        std::ostringstream os;
        os << "value " << v << " at (" << t + 1 << "," << i + 1 << ") is not a nonnegative number";
        out.push_back({t + 1, i + 1, os.str()});
      }
    }
  }
  const auto n_sign = std::min<std::size_t>(T, static_cast<std::size_t>(panel.sign_indicator.size()));
  for (std::size_t t = 0; t < n_sign; ++t) {
    const double s = panel.sign_indicator(static_cast<Eigen::Index>(t));
    if (s != 0.0 && s != 1.0) {
      std::ostringstream os;
      os << "sign indicator " << s << " at row " << t + 1 << " is not 0 or 1";
      out.push_back({t + 1, K + 1, os.str()});
    }
  }
  const auto n_dates = std::min(T, panel.dates.size());
  for (std::size_t t = 0; t < n_dates; ++t) {
    if (!is_iso_date(panel.dates[t])) {
      out.push_back({t + 1, 0, "date '" + panel.dates[t] + "' is not YYYY-MM-DD"});
    } else if (t > 0 && !(panel.dates[t - 1] < panel.dates[t])) {
      out.push_back({t + 1, 0, "date '" + panel.dates[t] + "' does not increase"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model structure

enum class Structure { Absent, Diagonal, Full };
enum class CopulaFamily { Independent, Normal, StudentT };

inline const char* to_string(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::Independent: return "independent";
    case CopulaFamily::Normal: return "normal";
    case CopulaFamily::StudentT: return "student_t";
  }
  return "?";
}

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::Absent: return "absent";
    case Structure::Diagonal: return "diagonal";
    case Structure::Full: return "full";
  }
  return "?";
}

struct LagStructure {
  Structure alpha = Structure::Absent;
  Structure gamma = Structure::Absent;
  Structure beta = Structure::Absent;
};

struct ModelSpec {
  std::size_t K = 1;
  std::vector<LagStructure> lags;  // lags[l-1] describes lag l
  CopulaFamily copula = CopulaFamily::Independent;
  bool targeting = false;

  std::size_t L() const { return lags.size(); }

  void validate() const {
    if (K < 1) throw std::invalid_argument("ModelSpec: K must be >= 1");
    if (lags.empty()) throw std::invalid_argument("ModelSpec: at least one lag is required");
    if (lags[0].alpha == Structure::Absent && lags[0].beta == Structure::Absent)
      throw std::invalid_argument("ModelSpec: alpha_1 or beta_1 must be present");
  }

  /// vMEM(1,1): alpha_1, beta_1 with the given structures, optional diagonal gamma_1.
  static ModelSpec one_one(std::size_t K, Structure alpha, Structure beta,
                           CopulaFamily family, bool with_gamma = false) {
    ModelSpec s;
    s.K = K;
    s.lags = {LagStructure{alpha, with_gamma ? Structure::Diagonal : Structure::Absent, beta}};
    s.copula = family;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Parameters

/// theta: omega plus per-lag alpha, gamma, beta coefficient matrices.
struct MeanParams {
  VectorXd omega;
  std::vector<MatrixXd> alpha;
  std::vector<MatrixXd> gamma;
  std::vector<MatrixXd> beta;

  static MeanParams zeros(std::size_t K, std::size_t L) {
    MeanParams p;
    const auto k = static_cast<Eigen::Index>(K);
    p.omega = VectorXd::Zero(k);
    p.alpha.assign(L, MatrixXd::Zero(k, k));
    p.gamma.assign(L, MatrixXd::Zero(k, k));
    p.beta.assign(L, MatrixXd::Zero(k, k));
    return p;
  }

  std::size_t K() const { return static_cast<std::size_t>(omega.size()); }
  std::size_t L() const { return alpha.size(); }
};

/// Sum over lags of alpha_l + beta_l + gamma_l / 2.
inline MatrixXd persistence_sum(const MeanParams& theta) {
  const auto k = static_cast<Eigen::Index>(theta.K());
  MatrixXd S = MatrixXd::Zero(k, k);
  for (std::size_t l = 0; l < theta.L(); ++l)
    S += theta.alpha[l] + theta.beta[l] + 0.5 * theta.gamma[l];
  return S;
}

/// Zero-valued entries a structure flag forbids must be exactly zero.
inline bool respects(const MatrixXd& m, Structure s) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const bool allowed = s == Structure::Full || (s == Structure::Diagonal && i == j);
      if (!allowed && m(i, j) != 0.0) return false;
    }
  return true;
}

inline bool respects(const MeanParams& theta, const ModelSpec& spec) {
  if (theta.K() != spec.K || theta.L() != spec.L()) return false;
  for (std::size_t l = 0; l < spec.L(); ++l)
    if (!respects(theta.alpha[l], spec.lags[l].alpha) ||
        !respects(theta.gamma[l], spec.lags[l].gamma) ||
        !respects(theta.beta[l], spec.lags[l].beta))
      return false;
  return true;
}

/// xi: the K(K-1)/2 free upper-triangular entries of c, and the Student-T shape.
struct CopulaParams {
  VectorXd c_free;
  double nu = 10.0;
};

/// phi: Gamma(phi_i, phi_i) shapes, unit mean and variance 1/phi_i.
struct MarginalParams {
  VectorXd phi;
};

struct FullParams {
  MeanParams theta;
  CopulaParams copula;
  MarginalParams marginal;
  /// Unconditional mean used under expectation targeting; omega is then implied.
  std::optional<VectorXd> mu_bar;
};

inline std::size_t n_correlations(std::size_t K) { return K * (K - 1) / 2; }

/// Position of c_ij (i < j, zero-based) inside c_free: column-major over the
/// strict upper triangle.
inline std::size_t c_index(std::size_t i, std::size_t j) { return j * (j - 1) / 2 + i; }

// ---------------------------------------------------------------------------
// Free-parameter layout

enum class Block { Omega, Alpha, Gamma, Beta, Corr, Nu, Phi };

struct ParamEntry {
  Block block;
  std::size_t lag = 0;  // zero-based lag for Alpha/Gamma/Beta
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t index = 0;  // c_free index for Corr

  std::string name() const {
    auto rc = [&] { return "[" + std::to_string(row + 1) + "," + std::to_string(col + 1) + "]"; };
    switch (block) {
      case Block::Omega: return "omega[" + std::to_string(row + 1) + "]";
      case Block::Alpha: return "alpha" + std::to_string(lag + 1) + rc();
      case Block::Gamma: return "gamma" + std::to_string(lag + 1) + rc();
      case Block::Beta: return "beta" + std::to_string(lag + 1) + rc();
      case Block::Corr: return "c" + rc();
      case Block::Nu: return "nu";
      case Block::Phi: return "phi[" + std::to_string(row + 1) + "]";
    }
    return "?";
  }

  bool is_mean() const {
    return block == Block::Omega || block == Block::Alpha || block == Block::Gamma ||
           block == Block::Beta;
  }
};

/// Enumerates the free parameters implied by a ModelSpec and converts between
/// FullParams, the natural coordinate vector and the unconstrained (packed)
/// vector used by the optimizer.
///
/// Order: omega (skipped when targeting), then per lag alpha, gamma, beta
/// (diagonal entries, or full matrices row-major), c_free, nu, phi.
/// Packing maps phi -> log(phi) and nu -> log(nu - 2); everything else is
/// passed through.
class ParamLayout {
 public:
  explicit ParamLayout(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t K = spec_.K;
    if (!spec_.targeting)
      for (std::size_t i = 0; i < K; ++i) entries_.push_back({Block::Omega, 0, i, i, 0});
    for (std::size_t l = 0; l < spec_.L(); ++l) {
      add_matrix(Block::Alpha, l, spec_.lags[l].alpha);
      add_matrix(Block::Gamma, l, spec_.lags[l].gamma);
      add_matrix(Block::Beta, l, spec_.lags[l].beta);
    }
    n_theta_ = entries_.size();
    if (spec_.copula != CopulaFamily::Independent)
      for (std::size_t j = 1; j < K; ++j)
        for (std::size_t i = 0; i < j; ++i) entries_.push_back({Block::Corr, 0, i, j, c_index(i, j)});
    n_copula_ = entries_.size() - n_theta_;
    if (spec_.copula == CopulaFamily::StudentT) {
      entries_.push_back({Block::Nu, 0, 0, 0, 0});
      ++n_copula_;
    }
    for (std::size_t i = 0; i < K; ++i) entries_.push_back({Block::Phi, 0, i, i, 0});
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t theta_size() const { return n_theta_; }
  std::size_t copula_size() const { return n_copula_; }
  std::size_t phi_offset() const { return n_theta_ + n_copula_; }
  /// Index of nu, or size() when absent.
  std::size_t nu_index() const {
    return spec_.copula == CopulaFamily::StudentT ? n_theta_ + n_copula_ - 1 : size();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name());
    return out;
  }

  VectorXd natural(const FullParams& p) const {
    check_shapes(p);
    VectorXd v(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) v(static_cast<Eigen::Index>(k)) = get(p, entries_[k]);
    return v;
  }

  /// Builds FullParams from natural coordinates. Under targeting omega is
  /// implied by mu_bar: omega = (I - sum_l A_l) mu_bar.
  FullParams from_natural(const VectorXd& v, const std::optional<VectorXd>& mu_bar = std::nullopt) const {
    check_length(v);
    FullParams p;
    p.theta = MeanParams::zeros(spec_.K, spec_.L());
    p.copula.c_free = VectorXd::Zero(static_cast<Eigen::Index>(n_correlations(spec_.K)));
    if (spec_.copula != CopulaFamily::StudentT) p.copula.nu = std::numeric_limits<double>::infinity();
    p.marginal.phi = VectorXd::Zero(static_cast<Eigen::Index>(spec_.K));
    for (std::size_t k = 0; k < size(); ++k) set(p, entries_[k], v(static_cast<Eigen::Index>(k)));
    if (spec_.targeting) {
      if (!mu_bar) throw std::invalid_argument("targeting layout requires mu_bar");
      if (static_cast<std::size_t>(mu_bar->size()) != spec_.K)
        throw std::invalid_argument("mu_bar has wrong length");
      p.mu_bar = *mu_bar;
      const auto k = static_cast<Eigen::Index>(spec_.K);
      p.theta.omega = (MatrixXd::Identity(k, k) - persistence_sum(p.theta)) * *mu_bar;
    }
    return p;
  }

  VectorXd pack(const FullParams& p) const {
    VectorXd v = natural(p);
    for (std::size_t k = 0; k < size(); ++k) {
      auto& x = v(static_cast<Eigen::Index>(k));
      if (entries_[k].block == Block::Phi) {
        if (!(x > 0.0)) throw std::invalid_argument("phi must be positive");
        x = std::log(x);
      } else if (entries_[k].block == Block::Nu) {
        if (!(x > 2.0)) throw std::invalid_argument("nu must exceed 2");
        x = std::log(x - 2.0);
      }
    }
    return v;
  }

  VectorXd packed_to_natural(const VectorXd& packed) const {
    check_length(packed);
    VectorXd v = packed;
    for (std::size_t k = 0; k < size(); ++k) {
      auto& x = v(static_cast<Eigen::Index>(k));
      if (entries_[k].block == Block::Phi) x = std::exp(x);
      else if (entries_[k].block == Block::Nu) x = 2.0 + std::exp(x);
    }
    return v;
  }

  FullParams unpack(const VectorXd& packed, const std::optional<VectorXd>& mu_bar = std::nullopt) const {
    return from_natural(packed_to_natural(packed), mu_bar);
  }

  /// d natural / d packed, elementwise (the transforms are coordinate-wise).
  VectorXd packing_jacobian(const VectorXd& natural_values) const {
    check_length(natural_values);
    VectorXd d = VectorXd::Ones(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (entries_[k].block == Block::Phi) d(kk) = natural_values(kk);
      else if (entries_[k].block == Block::Nu) d(kk) = natural_values(kk) - 2.0;
    }
    return d;
  }

  /// Lower bounds in packed space: omega and diagonal alpha/beta entries are
  /// nonnegative; everything else is unbounded.
  VectorXd lower_bounds() const {
    VectorXd lb = VectorXd::Constant(static_cast<Eigen::Index>(size()),
                                     -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < size(); ++k) {
      const auto& e = entries_[k];
      const bool diag_ab = (e.block == Block::Alpha || e.block == Block::Beta) && e.row == e.col;
      if (e.block == Block::Omega || diag_ab) lb(static_cast<Eigen::Index>(k)) = 0.0;
    }
    return lb;
  }

 private:
  void add_matrix(Block b, std::size_t lag, Structure s) {
    const std::size_t K = spec_.K;
    if (s == Structure::Diagonal) {
      for (std::size_t i = 0; i < K; ++i) entries_.push_back({b, lag, i, i, 0});
    } else if (s == Structure::Full) {
      for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) entries_.push_back({b, lag, i, j, 0});
    }
  }

  void check_length(const VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != size())
      throw std::invalid_argument("parameter vector has length " + std::to_string(v.size()) +
                                  ", layout expects " + std::to_string(size()));
  }

  void check_shapes(const FullParams& p) const {
    if (p.theta.K() != spec_.K || p.theta.L() != spec_.L())
      throw std::invalid_argument("mean parameters do not match the model spec");
    if (static_cast<std::size_t>(p.marginal.phi.size()) != spec_.K)
      throw std::invalid_argument("phi has wrong length");
    if (spec_.copula != CopulaFamily::Independent &&
        static_cast<std::size_t>(p.copula.c_free.size()) != n_correlations(spec_.K))
      throw std::invalid_argument("c_free has wrong length");
  }

  static double get(const FullParams& p, const ParamEntry& e) {
    const auto r = static_cast<Eigen::Index>(e.row);
    const auto c = static_cast<Eigen::Index>(e.col);
    switch (e.block) {
      case Block::Omega: return p.theta.omega(r);
      case Block::Alpha: return p.theta.alpha[e.lag](r, c);
      case Block::Gamma: return p.theta.gamma[e.lag](r, c);
      case Block::Beta: return p.theta.beta[e.lag](r, c);
      case Block::Corr: return p.copula.c_free(static_cast<Eigen::Index>(e.index));
      case Block::Nu: return p.copula.nu;
      case Block::Phi: return p.marginal.phi(r);
    }
    return 0.0;
  }

  static void set(FullParams& p, const ParamEntry& e, double x) {
    const auto r = static_cast<Eigen::Index>(e.row);
    const auto c = static_cast<Eigen::Index>(e.col);
    switch (e.block) {
      case Block::Omega: p.theta.omega(r) = x; break;
      case Block::Alpha: p.theta.alpha[e.lag](r, c) = x; break;
      case Block::Gamma: p.theta.gamma[e.lag](r, c) = x; break;
      case Block::Beta: p.theta.beta[e.lag](r, c) = x; break;
      case Block::Corr: p.copula.c_free(static_cast<Eigen::Index>(e.index)) = x; break;
      case Block::Nu: p.copula.nu = x; break;
      case Block::Phi: p.marginal.phi(r) = x; break;
    }
  }

  ModelSpec spec_;
  std::vector<ParamEntry> entries_;
  std::size_t n_theta_ = 0;
  std::size_t n_copula_ = 0;
};

inline VectorXd pack_params(const FullParams& p, const ModelSpec& spec) {
  return ParamLayout(spec).pack(p);
}

inline FullParams unpack_params(const VectorXd& v, const ModelSpec& spec,
                                const std::optional<VectorXd>& mu_bar = std::nullopt) {
  return ParamLayout(spec).unpack(v, mu_bar);
}

}  // namespace vmem
