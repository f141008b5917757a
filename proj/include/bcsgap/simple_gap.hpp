#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bcsgap/errors.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"

namespace bcsgap {

namespace detail {

/// Bisection for a strictly decreasing f with f(lo) > 0 >= f(hi), run to
/// the floating-point resolution of the bracket.
template <class F>
double bisect_decreasing(F&& f, double lo, double hi) {
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  // pick the endpoint with the smaller residual
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

}  // namespace detail

/// u * int tanh(xi/2t)/xi dxi, the linearized simple-gap integral.
inline double linear_gap_integral(double u, double t, const QuadratureRule& rule) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double xi = rule.nodes[i];
    sum += rule.weights[i] * tanh_over(xi / (2.0 * t)) / (2.0 * t);
  }
  return u * sum;
}

/// u * int tanh(E/2t)/E dxi with E = sqrt(xi^2 + delta^2); t = 0 means tanh = 1.
inline double simple_gap_integral(double u, double delta, double t, const QuadratureRule& rule) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double e = std::hypot(rule.nodes[i], delta);
    sum += rule.weights[i] * (t > 0.0 ? tanh_over(e / (2.0 * t)) / (2.0 * t) : 1.0 / e);
  }
  return u * sum;
}

/// The temperature where the simple gap of coupling u closes.
inline double tau_of_coupling(double u, const ModelParams& params, const QuadratureRule& rule) {
  if (!(u > 0.0)) throw std::invalid_argument("tau_of_coupling: coupling must be positive");
  const double lo = 1e-6 * params.hbar_omega_d, hi = params.hbar_omega_d;
  auto f = [&](double t) { return linear_gap_integral(u, t, rule) - 1.0; };
  if (!(f(lo) > 0.0) || !(f(hi) <= 0.0)) throw NoRoot(u, lo, hi);
  return detail::bisect_decreasing(f, lo, hi);
}

/// Closed-form zero-temperature gap of the constant-coupling equation.
inline double delta0_closed_form(double u, const ModelParams& params) {
  const double w = params.hbar_omega_d, e = params.epsilon;
  const double a = w - e * std::exp(1.0 / u);
  const double b = w - e * std::exp(-1.0 / u);
  if (!(a > 0.0)) throw RadicandNegative(u, a * b);
  return std::sqrt(a * b) / std::sinh(1.0 / u);
}

/// Constant-coupling gap Delta_U(T) with its closing temperature cached.
class SimpleGap {
 public:
  SimpleGap(double coupling, const ModelParams& params, const QuadratureRule& rule)
      : u_(coupling), params_(params), rule_(rule), tau_(tau_of_coupling(coupling, params, rule)) {
    try {
      delta0_ = delta0_closed_form(coupling, params);
    } catch (const RadicandNegative&) {
      delta0_.reset();
    }
  }

  double coupling() const { return u_; }
  double tau() const { return tau_; }
  std::optional<double> closed_form_delta0() const { return delta0_; }

  /// Delta_U(t); zero for t >= tau.
  double operator()(double t) const {
    if (t < 0.0) throw std::invalid_argument("SimpleGap: negative temperature");
    if (t >= tau_) return 0.0;
    const double hi = delta0_ ? 10.0 * *delta0_ : 10.0 * params_.hbar_omega_d;
    auto f = [&](double d) { return simple_gap_integral(u_, d, t, rule_) - 1.0; };
    return detail::bisect_decreasing(f, 0.0, hi);
  }

  /// |u * int ... - 1| at the returned root, for residual checks.
  double residual(double t) const {
    if (t >= tau_) return std::abs(linear_gap_integral(u_, tau_, rule_) - 1.0);
    return std::abs(simple_gap_integral(u_, (*this)(t), t, rule_) - 1.0);
  }

 private:
  double u_;
  ModelParams params_;
  QuadratureRule rule_;
  double tau_;
  std::optional<double> delta0_;
};

inline double delta_of_T(double u, double t, const ModelParams& params,
                         const QuadratureRule& rule) {
  return SimpleGap(u, params, rule)(t);
}

struct GapCurve {
  double coupling = 0.0;
  double tau = 0.0;
  std::vector<double> temps;
  std::vector<double> deltas;
};

/// Delta_U sampled on [0, tau_U], uniform in sqrt(tau_U - T) so the grid
/// clusters where the gap closes.
inline GapCurve gap_curve(double u, int n_temps, const ModelParams& params,
                          const QuadratureRule& rule) {
  if (n_temps < 3) throw std::invalid_argument("gap_curve: need at least 3 temperatures");
  SimpleGap gap(u, params, rule);
  GapCurve c;
  c.coupling = u;
  c.tau = gap.tau();
  for (int k = 0; k < n_temps; ++k) {
    const double r = 1.0 - static_cast<double>(k) / (n_temps - 1);
    const double t = (k + 1 == n_temps) ? gap.tau() : gap.tau() * (1.0 - r * r);
    c.temps.push_back(t);
    c.deltas.push_back(gap(t));
  }
  return c;
}

}  // namespace bcsgap
