#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bcsgap/errors.hpp"

namespace bcsgap {

/// Composite Gauss-Legendre rule on [lower, upper]. The nodes double as the
/// spatial grid of the Nystrom discretization.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int panels = 0;
  int points_per_panel = 0;
  double lower = 0.0;
  double upper = 0.0;

  std::size_t size() const { return nodes.size(); }
};

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute the derivative at the converged root
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  return {std::move(x), std::move(w)};
}

}  // namespace detail

inline QuadratureRule build_rule(double lower, double upper, int panels, int points_per_panel) {
  if (!(lower < upper)) throw DegenerateInterval(lower, upper);
  if (panels < 1) throw std::invalid_argument("build_rule: panels must be >= 1");
  if (points_per_panel < 2 || points_per_panel > 16)
    throw std::invalid_argument("build_rule: points_per_panel must lie in [2, 16]");

  auto [gx, gw] = detail::gauss_legendre(points_per_panel);
  QuadratureRule rule;
  rule.panels = panels;
  rule.points_per_panel = points_per_panel;
  rule.lower = lower;
  rule.upper = upper;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * points_per_panel);
  rule.weights.reserve(rule.nodes.capacity());
  const double width = (upper - lower) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lower + p * width;
    const double b = (p + 1 == panels) ? upper : lower + (p + 1) * width;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int i = 0; i < points_per_panel; ++i) {
      rule.nodes.push_back(mid + half * gx[i]);
      rule.weights.push_back(half * gw[i]);
    }
  }
  return rule;
}

inline double integrate(const QuadratureRule& rule, std::span<const double> samples) {
  if (samples.size() != rule.size()) throw LengthMismatch(rule.size(), samples.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += rule.weights[i] * samples[i];
  return sum;
}

/// Integrates a callable sampled at the rule's nodes.
template <class F>
double integrate_fn(const QuadratureRule& rule, F&& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) sum += rule.weights[i] * f(rule.nodes[i]);
  return sum;
}

/// tanh(z)/z for z >= 0, with the Maclaurin series near the origin.
inline double tanh_over(double z) {
  constexpr double threshold = 1e-4;
  if (z <= threshold) {
    const double z2 = z * z;
    return 1.0 - z2 / 3.0 + 2.0 * z2 * z2 / 15.0;
  }
  return std::tanh(z) / z;
}

/// 1/cosh^2(z), overflow-free.
inline double sech2(double z) {
  const double e = std::exp(-2.0 * std::abs(z));
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

/// g(eta) = 1/(eta^2 cosh^2 eta) - tanh(eta)/eta^3, g(0) = -2/3.
/// Below eta = 0.05 the direct form cancels badly; the even series is used.
inline double g_eval(double eta) {
  constexpr double threshold = 0.05;
  if (eta <= threshold) {
    const double e2 = eta * eta;
    // coefficients of the Maclaurin series in eta^2
    constexpr double c[] = {-2.0 / 3.0,          8.0 / 15.0,         -34.0 / 105.0,
                            496.0 / 2835.0,      -2764.0 / 31185.0,  87376.0 / 2027025.0,
                            -1859138.0 / 91216125.0};
    double acc = c[6];
    for (int k = 5; k >= 0; --k) acc = acc * e2 + c[k];
    return acc;
  }
  const double ch = std::cosh(eta);
  if (!std::isfinite(ch)) return -1.0 / (eta * eta * eta);
  return 1.0 / (eta * eta * ch * ch) - std::tanh(eta) / (eta * eta * eta);
}

}  // namespace bcsgap
