#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <math.h>  // boost 1.74 pchip calls isnan unqualified
#include <boost/math/interpolators/pchip.hpp>

#include "bcsgap/errors.hpp"
#include "bcsgap/gap_operator.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/simple_gap.hpp"

namespace bcsgap {

namespace detail {

/// Finite-difference weights for derivatives 0..m at x0 on arbitrary nodes
/// (Fornberg's recursion). Returns weights[d][j].
inline std::vector<std::vector<double>> fd_weights(double x0, const std::vector<double>& x, int m) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

}  // namespace detail

/// Superconducting-minus-normal thermodynamic potential at temperature t:
///   -2 N0 int (E - xi) + N0 int (u^2/E) tanh(E/2t) - 4 N0 t int ln[(1+e^{-E/t})/(1+e^{-xi/t})].
/// E - xi is taken as u^2/(E + xi) and the log ratio through expm1/log1p.
inline double psi(double t, const Eigen::VectorXd& u_row, const ModelParams& params,
                  const QuadratureRule& rule) {
  if (static_cast<std::size_t>(u_row.size()) != rule.size())
    throw LengthMismatch(rule.size(), static_cast<std::size_t>(u_row.size()));
  double condensation = 0.0, pairing = 0.0, entropy = 0.0;
  for (std::size_t j = 0; j < rule.size(); ++j) {
    const double xi = rule.nodes[j], u = u_row[static_cast<Eigen::Index>(j)];
    const double u2 = u * u;
    const double e = std::hypot(xi, u);
    const double gap = u2 / (e + xi);
    const double bx = std::exp(-xi / t);
    const double log_ratio = std::log1p(bx * std::expm1(-gap / t) / (1.0 + bx));
    condensation += rule.weights[j] * gap;
    pairing += rule.weights[j] * (u2 > 0.0 ? u2 / e * std::tanh(e / (2.0 * t)) : 0.0);
    entropy += rule.weights[j] * log_ratio;
  }
  return params.n0 * (-2.0 * condensation + pairing - 4.0 * t * entropy);
}

/// Constant of the a-posteriori bound |Psi - Psi_1| <= C * ||u - u0||:
///   C = 2 N0 Delta2(0) ((1 + 2 T_c/tau) ln(hbar_omega_d/eps) + alpha).
inline double psi_error_constant(double alpha, double delta2_zero, const ModelParams& params,
                                 double t_c, double tau) {
  return 2.0 * params.n0 * delta2_zero *
         ((1.0 + 2.0 * t_c / tau) * std::log(params.hbar_omega_d / params.epsilon) + alpha);
}

inline double psi_error_bound(double sup_error, double alpha, double delta2_zero,
                              const ModelParams& params, double t_c, double tau) {
  if (!(sup_error >= 0.0)) throw std::invalid_argument("psi_error_bound: sup_error must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("psi_error_bound: alpha must lie in (0, 1)");
  return psi_error_constant(alpha, delta2_zero, params, t_c, tau) * sup_error;
}

/// Delta2(0): the closed form when it exists, otherwise the T = 0 root.
inline double upper_delta_zero(const GapOperator& op) {
  if (auto d = op.upper_envelope().closed_form_delta0()) return *d;
  return op.upper_envelope()(0.0);
}

struct ThermoCurve {
  std::vector<double> temps;
  std::vector<double> psi;
  std::vector<double> entropy_diff;  // -Psi'(T)
  std::vector<double> heat_diff;     // -T Psi''(T)
  std::vector<double> psi_error;
  std::vector<bool> psi_error_certified;
  std::optional<double> slope_at_tc;  // Psi'(T_c) from the last stencil, if T_c is on the grid
};

struct ErrorContext {
  double alpha = 0.0;
  double t_c = 0.0;
  double tau = 0.0;
  double delta2_zero = 0.0;
};

/// Psi on every surface row with 5-point finite differences (centered in the
/// interior, one-sided at the ends) on the possibly nonuniform grid.
inline ThermoCurve psi_curve(const GapSurface& surface, const ModelParams& params,
                             const QuadratureRule& rule, const ErrorContext& ctx) {
  constexpr std::size_t min_points = 7;
  const std::size_t n = surface.temps.size();
  if (n < min_points) throw GridTooCoarse(n, min_points);
  ThermoCurve c;
  c.temps = surface.temps;
  for (std::size_t k = 0; k < n; ++k) {
    c.psi.push_back(
        psi(surface.temps[k], surface.values.row(static_cast<Eigen::Index>(k)).transpose(), params,
            rule));
    const auto& rep = surface.reports[k];
    const bool certified = rep.fixed_point_error_bound.has_value();
    const double sup_error =
        rep.assigned_zero ? 0.0 : (certified ? *rep.fixed_point_error_bound : rep.error_estimate);
    c.psi_error.push_back(
        psi_error_constant(ctx.alpha, ctx.delta2_zero, params, ctx.t_c, ctx.tau) * sup_error);
    c.psi_error_certified.push_back(certified || rep.assigned_zero);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k) - 2, 0,
                                                         static_cast<std::ptrdiff_t>(n) - 5);
    std::vector<double> x(c.temps.begin() + start, c.temps.begin() + start + 5);
    const auto wts = detail::fd_weights(c.temps[k], x, 2);
    double d1 = 0.0, d2 = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      d1 += wts[1][j] * c.psi[start + j];
      d2 += wts[2][j] * c.psi[start + j];
    }
    c.entropy_diff.push_back(-d1);
    c.heat_diff.push_back(-c.temps[k] * d2);
  }
  if (std::abs(c.temps.back() - ctx.t_c) <= 1e-12 * ctx.t_c) c.slope_at_tc = -c.entropy_diff.back();
  return c;
}

/// Second-order one-sided estimate of Psi'(T_c) from Psi(T_c - h), Psi(T_c - 2h).
inline double psi_slope_one_sided(double psi_tc, double psi_h, double psi_2h, double h) {
  return (3.0 * psi_tc - 4.0 * psi_h + psi_2h) / (2.0 * h);
}

/// Psi''(T_c) in the energy variable, on the native node grid:
///   (N0/2) int v^2/xi^2 [1/(2T_c cosh^2(xi/2T_c)) - tanh(xi/2T_c)/xi] dxi   (< 0).
inline double psi_second_derivative_energy_form(const Eigen::VectorXd& v, const ModelParams& params,
                                            const QuadratureRule& rule, double t_c) {
  double sum = 0.0;
  for (std::size_t j = 0; j < rule.size(); ++j) {
    const double xi = rule.nodes[j], z = xi / (2.0 * t_c);
    const double vj = v[static_cast<Eigen::Index>(j)];
    sum += rule.weights[j] * vj * vj / (xi * xi) *
           (sech2(z) / (2.0 * t_c) - std::tanh(z) / xi);
  }
  return 0.5 * params.n0 * sum;
}

/// Specific-heat jump from the Taylor coefficient v:
///   -(N0 / 8 T_c) int_{eps/2T_c}^{hbar_omega_d/2T_c} v(2 T_c eta)^2 g(eta) d eta   (> 0).
/// v is carried onto the eta-grid by monotone cubic interpolation.
inline double delta_cv_formula(const Eigen::VectorXd& v, const ModelParams& params,
                               const QuadratureRule& rule, double t_c) {
  if ((v.array() <= 0.0).any()) throw std::invalid_argument("delta_cv_formula: v must be > 0");
  const auto eta_rule = build_rule(params.epsilon / (2.0 * t_c), params.hbar_omega_d / (2.0 * t_c),
                                   rule.panels, rule.points_per_panel);
  std::vector<double> xs(rule.nodes), ys(v.data(), v.data() + v.size());
  const double x_lo = xs.front(), x_hi = xs.back();
  boost::math::interpolators::pchip<std::vector<double>> vint(std::move(xs), std::move(ys));
  double sum = 0.0;
  for (std::size_t k = 0; k < eta_rule.size(); ++k) {
    const double eta = eta_rule.nodes[k];
    const double vk = vint(std::clamp(2.0 * t_c * eta, x_lo, x_hi));
    sum += eta_rule.weights[k] * vk * vk * g_eval(eta);
  }
  return -params.n0 / (8.0 * t_c) * sum;
}

/// 2 Psi(T_c - h)/h^2, using Psi(T_c) = Psi'(T_c) = 0.
inline double psi_second_derivative_from_step(double psi_at, double h) {
  return 2.0 * psi_at / (h * h);
}

/// -T_c Psi''(T_c) from rows at T_c - h1 and T_c - h2 (absolute steps),
/// Richardson-combined to cancel the O(h) term of 2 Psi(T_c - h)/h^2.
inline double delta_cv_numeric(const GapSurface& surface, const ModelParams& params,
                               const QuadratureRule& rule, double t_c, double h1, double h2) {
  if (!(h1 > 0.0 && h2 > 0.0) || h1 == h2)
    throw std::invalid_argument("delta_cv_numeric: need two distinct positive steps");
  std::vector<double> missing;
  auto r1 = surface.find_row(t_c - h1, 1e-10), r2 = surface.find_row(t_c - h2, 1e-10);
  if (!r1) missing.push_back(t_c - h1);
  if (!r2) missing.push_back(t_c - h2);
  if (!missing.empty()) throw MissingTemperatures(missing);
  const double d1 = psi_second_derivative_from_step(
      psi(surface.temps[*r1], surface.values.row(*r1).transpose(), params, rule), h1);
  const double d2 = psi_second_derivative_from_step(
      psi(surface.temps[*r2], surface.values.row(*r2).transpose(), params, rule), h2);
  const double richardson = (h1 * d2 - h2 * d1) / (h1 - h2);
  return -t_c * richardson;
}

struct HeatJump {
  double formula_value = 0.0;
  double numeric_value = 0.0;
  double energy_form_value = 0.0;  // Psi''(T_c), so -T_c * energy_form_value is the jump
  double relative_spread = 0.0;
};

inline double relative_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

inline HeatJump heat_jump(const Eigen::VectorXd& v, const GapSurface& surface,
                          const ModelParams& params, const QuadratureRule& rule, double t_c,
                          double h1, double h2) {
  HeatJump j;
  j.formula_value = delta_cv_formula(v, params, rule, t_c);
  j.energy_form_value = psi_second_derivative_energy_form(v, params, rule, t_c);
  j.numeric_value = delta_cv_numeric(surface, params, rule, t_c, h1, h2);
  const double a = j.formula_value, b = -t_c * j.energy_form_value, c = j.numeric_value;
  j.relative_spread = std::max({relative_diff(a, b), relative_diff(a, c), relative_diff(b, c)});
  return j;
}

}  // namespace bcsgap
