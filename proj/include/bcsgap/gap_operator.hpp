#pragma once

#include <algorithm>
#include <atomic>
#include <cfloat>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "bcsgap/errors.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/simple_gap.hpp"

namespace bcsgap {

/// Gap values u(T, x_i) at the quadrature nodes for one temperature.
using GapRow = Eigen::VectorXd;

/// Nystrom discretization of the gap operator
///   (Au)(x_i) = sum_j w_j U(x_i, xi_j) u_j tanh(E_j / 2T) / E_j,  E_j = sqrt(xi_j^2 + u_j^2).
/// Kernels with an exact low-rank form are applied through their factors.
class GapOperator {
 public:
  explicit GapOperator(Model model, bool force_dense = false)
      : model_(std::move(model)),
        lower_(model_.params().u1, model_.params(), model_.rule()),
        upper_(model_.params().u2, model_.params(), model_.rule()) {
    const auto& rule = model_.rule();
    const auto n = static_cast<Eigen::Index>(rule.size());
    nodes_ = Eigen::Map<const Eigen::VectorXd>(rule.nodes.data(), n);
    weights_ = Eigen::Map<const Eigen::VectorXd>(rule.weights.data(), n);
    if (!force_dense) factors_ = model_.kernel().factors(rule.nodes);
    if (factors_) {
      factors_->right = factors_->right * weights_.asDiagonal();
    } else {
      dense_ = kernel_matrix(model_.kernel(), rule) * weights_.asDiagonal();
    }
  }

  const Model& model() const { return model_; }
  const ModelParams& params() const { return model_.params(); }
  const QuadratureRule& rule() const { return model_.rule(); }
  Eigen::Index size() const { return nodes_.size(); }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  bool factored() const { return factors_.has_value(); }

  /// Delta_1 (coupling u1) and Delta_2 (coupling u2) envelopes.
  const SimpleGap& lower_envelope() const { return lower_; }
  const SimpleGap& upper_envelope() const { return upper_; }

  /// y_i = sum_j w_j U(x_i, xi_j) f_j
  Eigen::VectorXd kernel_apply(const Eigen::VectorXd& f) const {
    if (factors_) return factors_->left * (factors_->right * f);
    return dense_ * f;
  }

  /// Weighted kernel as a dense matrix (materialized on demand for factored kernels).
  Eigen::MatrixXd weighted_kernel() const {
    if (factors_) return factors_->left * factors_->right;
    return dense_;
  }

  GapRow apply(const GapRow& u, double t) const {
    Eigen::VectorXd f(size());
    for (Eigen::Index j = 0; j < size(); ++j) {
      const double e = std::hypot(nodes_[j], u[j]);
      f[j] = u[j] * std::tanh(e / (2.0 * t)) / e;
    }
    return kernel_apply(f);
  }

  /// Linearization of A at u = 0: (L_T x)_i = sum_j w_j U(x_i, xi_j) tanh(xi_j/2T)/xi_j x_j.
  Eigen::VectorXd linearized_apply(const Eigen::VectorXd& x, double t) const {
    return kernel_apply(linear_weights(t).cwiseProduct(x));
  }

  Eigen::VectorXd linear_weights(double t) const {
    Eigen::VectorXd d(size());
    for (Eigen::Index j = 0; j < size(); ++j) d[j] = std::tanh(nodes_[j] / (2.0 * t)) / nodes_[j];
    return d;
  }

 private:
  Model model_;
  SimpleGap lower_;
  SimpleGap upper_;
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
  std::optional<KernelFactors> factors_;
  Eigen::MatrixXd dense_;
};

/// One-shot application of A without a prebuilt operator.
inline GapRow apply_A(const GapRow& u_row, double t, const ModelParams& params,
                      const PotentialKernel& kernel, const QuadratureRule& rule) {
  return GapOperator(validate(params, kernel, rule)).apply(u_row, t);
}

// ---------------------------------------------------------------------------
// Contraction constant

struct AlphaBound {
  double value = 0.0;
  double t_at_max = 0.0;
  double x_at_max = 0.0;
  double first_term = 0.0;   // at the maximizer
  double second_term = 0.0;  // at the maximizer
};

/// Maximizes over (T, x_i) the Lipschitz bound
///   int U(x,xi) tanh(E2/2T)/E2 dxi + Delta2(tau)^2/(2 eps^2) int U(x,xi) tanh(xi/2T)/xi dxi,
/// E2 = sqrt(xi^2 + Delta2(T)^2). With strict = false the second term uses
/// Delta2(T) instead of Delta2(tau), the pointwise form of the same bound.
inline AlphaBound alpha_bound(double tau, const GapOperator& op, std::span<const double> t_grid,
                              bool strict = true) {
  const double eps = op.params().epsilon;
  const double d2_tau = op.upper_envelope()(tau);
  AlphaBound best;
  best.value = -std::numeric_limits<double>::infinity();
  const auto& xi = op.nodes();
  for (double t : t_grid) {
    const double d2 = op.upper_envelope()(t);
    Eigen::VectorXd f(op.size());
    for (Eigen::Index j = 0; j < op.size(); ++j) {
      const double e = std::hypot(xi[j], d2);
      f[j] = std::tanh(e / (2.0 * t)) / e;
    }
    const Eigen::VectorXd first = op.kernel_apply(f);
    const double d = strict ? d2_tau : d2;
    const Eigen::VectorXd second =
        (d * d / (2.0 * eps * eps)) * op.kernel_apply(op.linear_weights(t));
    for (Eigen::Index i = 0; i < op.size(); ++i) {
      const double a = first[i] + second[i];
      if (a > best.value) {
        best = {a, t, xi[i], first[i], second[i]};
      }
    }
  }
  return best;
}

struct Window {
  double tau = 0.0;
  double alpha = 0.0;
};

inline std::vector<double> window_grid(double tau, double t_c, int points) {
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k)
    g[k] = (k + 1 == points) ? t_c : tau + (t_c - tau) * k / (points - 1);
  return g;
}

/// Smallest window start tau < t_c whose contraction bound is <= alpha_max.
inline Window auto_tau(const GapOperator& op, double t_c, double alpha_max,
                       int grid_points = 17) {
  if (!(alpha_max > 0.0 && alpha_max < 1.0))
    throw std::invalid_argument("auto_tau: alpha_max must lie in (0, 1)");
  auto alpha_at = [&](double tau) {
    auto g = window_grid(tau, t_c, grid_points);
    return alpha_bound(tau, op, g).value;
  };
  double hi = t_c * (1.0 - 1e-4);
  const double a_hi = alpha_at(hi);
  if (a_hi > alpha_max) throw NoCertifiedWindow(a_hi, hi, alpha_max);
  double lo = 1e-3 * t_c;
  if (alpha_at(lo) <= alpha_max) return {lo, alpha_at(lo)};
  for (int it = 0; it < 60 && hi - lo > 1e-12 * t_c; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (alpha_at(mid) <= alpha_max)
      hi = mid;
    else
      lo = mid;
  }
  return {hi, alpha_at(hi)};
}

// ---------------------------------------------------------------------------
// Picard iteration

struct Certificate {
  double tau = 0.0;
  double t_c = 0.0;
  double alpha = 0.0;
};

struct PicardOptions {
  double tol = 1e-12;
  long max_iter = 500000;
  std::optional<GapRow> init;           // default Delta2(t) * 1
  std::optional<double> t_c;            // enables the near-T_c tolerance relaxation
  std::optional<Certificate> certificate;
};

struct SolveReport {
  double temperature = 0.0;
  long iterations = 0;
  double final_residual = 0.0;   // sup-norm of the last step
  double empirical_ratio = 0.0;  // max observed ratio of successive steps
  double last_ratio = 0.0;
  double error_estimate = 0.0;   // last_ratio * residual / (1 - last_ratio)
  std::optional<double> fixed_point_error_bound;  // alpha * residual / (1 - alpha)
  double tolerance_used = 0.0;
  bool relaxed = false;
  bool certified = false;
  bool monotone = true;          // iterates entrywise non-increasing
  bool assigned_zero = false;    // row set to zero at T >= T_c
};

struct PicardResult {
  GapRow row;
  SolveReport report;
};

/// Tolerance actually used at t: tol * T_c/(T_c - t), capped at 100 * tol.
inline double relaxed_tolerance(double tol, double t, std::optional<double> t_c) {
  if (!t_c || t >= *t_c) return tol;
  return tol * std::min(*t_c / (*t_c - t), 100.0);
}

/// Iterates u <- A u from the top of the sandwich box until both the step
/// and its a-posteriori error estimate fall below the tolerance.
inline PicardResult picard_solve(const GapOperator& op, double t, const PicardOptions& opt = {}) {
  if (!(t > 0.0)) throw std::invalid_argument("picard_solve: temperature must be positive");
  const Eigen::Index n = op.size();
  GapRow u = opt.init ? *opt.init : GapRow::Constant(n, op.upper_envelope()(t));
  if (u.size() != n) throw LengthMismatch(static_cast<std::size_t>(n), u.size());

  SolveReport rep;
  rep.temperature = t;
  rep.tolerance_used = relaxed_tolerance(opt.tol, t, opt.t_c);
  rep.relaxed = rep.tolerance_used > opt.tol;
  if (opt.certificate) {
    const auto& c = *opt.certificate;
    rep.certified = c.alpha < 1.0 && t >= c.tau && t <= c.t_c;
  }
  const double tol = rep.tolerance_used;

  double prev_step = -1.0;
  std::vector<double> ring(1024, 0.0);  // recent step norms, for the divergence diagnosis
  for (long it = 1; it <= opt.max_iter; ++it) {
    GapRow next = op.apply(u, t);
    const double step = (next - u).cwiseAbs().maxCoeff();
    const double scale = std::max(next.cwiseAbs().maxCoeff(), DBL_MIN);
    if ((next.array() > u.array() + 8.0 * DBL_EPSILON * scale).any()) rep.monotone = false;
    const bool above_roundoff = step > 64.0 * DBL_EPSILON * scale;
    if (prev_step > 0.0 && above_roundoff) {
      rep.last_ratio = step / prev_step;
      rep.empirical_ratio = std::max(rep.empirical_ratio, rep.last_ratio);
    }
    prev_step = step;
    u = std::move(next);
    rep.iterations = it;
    rep.final_residual = step;
    ring[static_cast<std::size_t>(it) % ring.size()] = step;

    const double r = rep.last_ratio;
    rep.error_estimate = (r > 0.0 && r < 1.0) ? r * step / (1.0 - r) : step;
    const bool at_floor = step <= 4.0 * DBL_EPSILON * scale;
    if (step == 0.0 || at_floor || (step <= tol && (r >= 1.0 || rep.error_estimate <= tol))) {
      if (opt.certificate && opt.certificate->alpha < 1.0) {
        const double a = opt.certificate->alpha;
        rep.fixed_point_error_bound = a * step / (1.0 - a);
      }
      return {std::move(u), rep};
    }
  }
  // Diverging when the step grew over the last stretch of iterations.
  const auto oldest = rep.iterations >= static_cast<long>(ring.size())
                          ? static_cast<std::size_t>(rep.iterations + 1) % ring.size()
                          : std::size_t{1};
  const double earlier = ring[oldest];
  throw NotConverged(t, rep.iterations, rep.final_residual, rep.final_residual > earlier);
}

// ---------------------------------------------------------------------------
// Surface over a temperature grid

struct SurfaceChecks {
  double sandwich_violation = 0.0;    // max amount outside [Delta1 - tol, Delta2 + tol]
  double monotone_violation = 0.0;    // max increase of u along increasing T beyond tol
  std::optional<double> tc_row_sup;   // sup-norm of the row at T_c, if present
  bool sandwich_ok = true;
  bool monotone_ok = true;
  bool zero_at_tc_ok = true;
};

struct GapSurface {
  std::vector<double> temps;
  Eigen::VectorXd nodes;
  Eigen::MatrixXd values;  // temps x nodes
  std::vector<SolveReport> reports;
  SurfaceChecks checks;

  std::optional<Eigen::Index> find_row(double t, double rel_tol = 1e-12) const {
    for (std::size_t k = 0; k < temps.size(); ++k)
      if (std::abs(temps[k] - t) <= rel_tol * std::abs(t)) return static_cast<Eigen::Index>(k);
    return std::nullopt;
  }
};

struct SurfaceOptions {
  double tol = 1e-12;
  long max_iter = 500000;
  std::optional<double> t_c;
  std::optional<Certificate> certificate;
  unsigned threads = 1;
};

inline SurfaceChecks check_surface(const GapOperator& op, const GapSurface& s,
                                   std::optional<double> t_c) {
  SurfaceChecks c;
  const auto nt = static_cast<Eigen::Index>(s.temps.size());
  for (Eigen::Index k = 0; k < nt; ++k) {
    const double t = s.temps[k];
    const double tol = std::max(10.0 * s.reports[k].tolerance_used, 1e-13);
    const double lo = op.lower_envelope()(t) - tol, hi = op.upper_envelope()(t) + tol;
    for (Eigen::Index i = 0; i < s.values.cols(); ++i) {
      const double u = s.values(k, i);
      c.sandwich_violation = std::max({c.sandwich_violation, lo - u, u - hi});
    }
    if (k > 0) {
      const double tol_pair = tol + std::max(10.0 * s.reports[k - 1].tolerance_used, 1e-13);
      const double inc = (s.values.row(k) - s.values.row(k - 1)).maxCoeff() - tol_pair;
      c.monotone_violation = std::max(c.monotone_violation, inc);
    }
  }
  c.sandwich_ok = c.sandwich_violation <= 0.0;
  c.monotone_ok = c.monotone_violation <= 0.0;
  if (t_c) {
    if (auto row = s.find_row(*t_c)) {
      c.tc_row_sup = s.values.row(*row).cwiseAbs().maxCoeff();
      c.zero_at_tc_ok = *c.tc_row_sup < 10.0 * s.reports[*row].tolerance_used;
    }
  }
  return c;
}

/// Solves every temperature independently. Rows at T >= T_c (when T_c is
/// known) are the zero solution and are assigned rather than iterated.
inline GapSurface solve_surface(const GapOperator& op, std::span<const double> t_grid,
                                const SurfaceOptions& opt = {}) {
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    if (!(t_grid[k] > t_grid[k - 1]))
      throw std::invalid_argument("solve_surface: temperature grid must be increasing");
  GapSurface s;
  s.temps.assign(t_grid.begin(), t_grid.end());
  s.nodes = op.nodes();
  const auto nt = static_cast<Eigen::Index>(s.temps.size());
  s.values = Eigen::MatrixXd::Zero(nt, op.size());
  s.reports.resize(s.temps.size());
  std::vector<std::exception_ptr> errors(s.temps.size());

  auto solve_one = [&](std::size_t k) {
    const double t = s.temps[k];
    try {
      if (opt.t_c && t >= *opt.t_c * (1.0 - 1e-13)) {
        SolveReport r;
        r.temperature = t;
        r.tolerance_used = opt.tol;
        r.assigned_zero = true;
        if (opt.certificate) {
          const auto& c = *opt.certificate;
          r.certified = c.alpha < 1.0 && t >= c.tau && t <= c.t_c * (1.0 + 1e-13);
        }
        s.reports[k] = r;
        return;
      }
      PicardOptions po;
      po.tol = opt.tol;
      po.max_iter = opt.max_iter;
      po.t_c = opt.t_c;
      po.certificate = opt.certificate;
      auto res = picard_solve(op, t, po);
      s.values.row(static_cast<Eigen::Index>(k)) = res.row.transpose();
      s.reports[k] = res.report;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, s.temps.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < s.temps.size(); ++k) solve_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < s.temps.size(); k = next++) solve_one(k);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  s.checks = check_surface(op, s, opt.t_c);
  return s;
}

// ---------------------------------------------------------------------------
// Critical temperature

struct SpectralResult {
  double rho = 0.0;
  double lower = 0.0;  // Collatz-Wielandt bounds on rho
  double upper = 0.0;
  Eigen::VectorXd eigenvector;  // positive, sup-normalized
  long iterations = 0;
};

/// Spectral radius of L_T by power iteration. The matrix is entrywise
/// positive, so min/max of (Lx)_i/x_i bracket rho and close on the Perron vector.
inline SpectralResult spectral_radius(const GapOperator& op, double t,
                                      const Eigen::VectorXd* start = nullptr,
                                      long max_iter = 10000) {
  Eigen::VectorXd x = start ? *start : Eigen::VectorXd::Ones(op.size());
  const Eigen::VectorXd d = op.linear_weights(t);
  SpectralResult r;
  for (long it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd y = op.kernel_apply(d.cwiseProduct(x));
    const Eigen::VectorXd q = y.cwiseQuotient(x);
    r.lower = q.minCoeff();
    r.upper = q.maxCoeff();
    r.iterations = it;
    x = y / y.maxCoeff();
    if (r.upper - r.lower <= 1e-14 * r.upper) {
      r.rho = 0.5 * (r.lower + r.upper);
      r.eigenvector = x;
      return r;
    }
  }
  throw PowerIterationStalled(t, r.upper - r.lower);
}

struct CriticalTemperature {
  double t_c = 0.0;
  double rho = 0.0;  // spectral radius at t_c
  Eigen::VectorXd eigenfunction;
};

/// T_c where the linearized operator has spectral radius 1, by bisection
/// inside [tau1, tau2]; rho(L_T) is strictly decreasing in T.
inline CriticalTemperature critical_temperature(const GapOperator& op) {
  double lo = op.lower_envelope().tau(), hi = op.upper_envelope().tau();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(op.size());
  auto rho_at = [&](double t) {
    auto s = spectral_radius(op, t, &v);
    v = s.eigenvector;
    return s.rho;
  };
  // widen slightly so a discrete rho that sits exactly at 1 on an end is bracketed
  if (rho_at(lo) < 1.0) lo *= 1.0 - 1e-9;
  if (rho_at(hi) > 1.0) hi *= 1.0 + 1e-9;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (rho_at(mid) > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  const double rlo = rho_at(lo), rhi = rho_at(hi);
  CriticalTemperature c;
  c.t_c = std::abs(rlo - 1.0) <= std::abs(rhi - 1.0) ? lo : hi;
  auto s = spectral_radius(op, c.t_c, &v);
  c.rho = s.rho;
  c.eigenfunction = s.eigenvector;
  return c;
}

// ---------------------------------------------------------------------------
// Taylor coefficients of u^2 at T_c

struct VWFit {
  Eigen::VectorXd v;              // -d/dT u^2 at T_c
  Eigen::VectorXd w;              // d^2/dT^2 u^2 at T_c
  Eigen::VectorXd fit_residual;   // rms residual of the fit per node
  std::vector<double> offsets;    // s_k = T_c - T_k used
  double condition = 0.0;
};

/// Per node, least-squares fit of u^2 = v s + (w/2) s^2 (through the origin)
/// over the n_fit temperatures closest below T_c, s = T_c - T <= 0.05 T_c.
inline VWFit extract_vw(const GapSurface& surface, double t_c, int n_fit) {
  if (n_fit < 3) throw std::invalid_argument("extract_vw: n_fit must be >= 3");
  std::vector<std::pair<double, Eigen::Index>> cand;
  for (std::size_t k = 0; k < surface.temps.size(); ++k) {
    const double s = t_c - surface.temps[k];
    if (s > 1e-12 * t_c && s <= 0.05 * t_c * (1.0 + 1e-12))
      cand.emplace_back(s, static_cast<Eigen::Index>(k));
  }
  if (cand.size() < static_cast<std::size_t>(n_fit))
    throw std::invalid_argument("extract_vw: fewer than n_fit temperatures within 0.05 T_c");
  std::sort(cand.begin(), cand.end());
  cand.resize(n_fit);

  const double s_max = cand.back().first;
  Eigen::MatrixXd a(n_fit, 2);
  Eigen::MatrixXd y(n_fit, surface.values.cols());
  VWFit out;
  for (int k = 0; k < n_fit; ++k) {
    const double sig = cand[k].first / s_max;
    a(k, 0) = sig;
    a(k, 1) = 0.5 * sig * sig;
    y.row(k) = surface.values.row(cand[k].second).array().square().matrix();
    out.offsets.push_back(cand[k].first);
  }
  const Eigen::Matrix2d normal = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(normal);
  out.condition = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  if (!(out.condition <= 1e8)) throw FitIllConditioned(out.condition);

  const Eigen::MatrixXd coef = normal.ldlt().solve(a.transpose() * y);  // 2 x n
  out.v = coef.row(0).transpose() / s_max;
  out.w = coef.row(1).transpose() / (s_max * s_max);
  const Eigen::MatrixXd res = y - a * coef;
  out.fit_residual = (res.colwise().squaredNorm() / n_fit).cwiseSqrt().transpose();
  return out;
}

/// F(x) = ( int U(x,xi) sqrt(v(xi)) tanh(xi/2T_c)/xi dxi )^2
inline Eigen::VectorXd compute_F(const Eigen::VectorXd& v, const GapOperator& op, double t_c) {
  const Eigen::VectorXd f = op.linear_weights(t_c).cwiseProduct(v.cwiseSqrt());
  return op.kernel_apply(f).array().square().matrix();
}

/// Relative residual |F_i - v_i| / v_i; zero at an exact fixed point.
inline Eigen::VectorXd check_F(const Eigen::VectorXd& v, const GapOperator& op, double t_c) {
  const Eigen::VectorXd f = compute_F(v, op, t_c);
  return ((f - v).cwiseAbs().array() / v.array()).matrix();
}

/// G(x) from the first factor of F times the eta-integral carrying w and
/// the T-derivatives of the tanh factor.
inline Eigen::VectorXd compute_G(const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                 const GapOperator& op, double t_c) {
  const auto& eta = op.nodes();
  const Eigen::VectorXd outer =
      op.kernel_apply(op.linear_weights(t_c).cwiseProduct(v.cwiseSqrt()));
  Eigen::VectorXd g(op.size());
  for (Eigen::Index k = 0; k < op.size(); ++k) {
    const double e = eta[k], sv = std::sqrt(v[k]), z = e / (2.0 * t_c);
    g[k] = (w[k] / (e * sv) - 2.0 * sv * v[k] / (e * e * e)) * std::tanh(z) +
           sv * sech2(z) * (v[k] / (e * e * t_c) + 2.0 / (t_c * t_c));
  }
  return outer.cwiseProduct(op.kernel_apply(g));
}

inline Eigen::VectorXd check_G(const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                               const GapOperator& op, double t_c) {
  return (compute_G(v, w, op, t_c) - w).cwiseAbs();
}

struct CriticalData {
  double t_c = 0.0;
  double tau = 0.0;
  double alpha = 0.0;
  Eigen::VectorXd v;
  Eigen::VectorXd w;
  Eigen::VectorXd eigenfunction;
};

}  // namespace bcsgap
