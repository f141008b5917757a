#pragma once

// Brute-force reference computations. Deliberately independent of the
// library: plain loops, uniform grids, no shared helpers.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double trapezoid(const std::function<double(double)>& f, double a, double b, long n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (long i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

inline double simpson(const std::function<double(double)>& f, double a, double b, long n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (long i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

/// Root of a decreasing function on [lo, hi] by plain bisection.
inline double bisect(const std::function<double(double)>& g, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double m = 0.5 * (lo + hi);
    (g(m) > 0.0 ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

/// tau with u * int_eps^w tanh(xi/2tau)/xi dxi = 1.
inline double tau(double u, double eps, double w, long n = 1000000) {
  auto g = [&](double t) {
    return u * trapezoid([t](double x) { return std::tanh(x / (2.0 * t)) / x; }, eps, w, n) - 1.0;
  };
  return bisect(g, 1e-6 * w, w, 80);
}

/// Delta_U(T) from the simple gap equation, Simpson on a dense uniform grid.
inline double gap(double u, double t, double eps, double w, long n = 200000) {
  auto integrand = [t](double d) {
    return [t, d](double x) {
      const double e = std::sqrt(x * x + d * d);
      return t > 0.0 ? std::tanh(e / (2.0 * t)) / e : 1.0 / e;
    };
  };
  auto g = [&](double d) { return u * simpson(integrand(d), eps, w, n) - 1.0; };
  if (g(0.0) <= 0.0) return 0.0;
  return bisect(g, 0.0, w, 70);
}

/// Same equation solved by scanning Delta on a dense grid, then refining
/// the sign change linearly.
inline double gap_scan(double u, double t, double eps, double w, int samples = 4000) {
  auto g = [&](double d) {
    return u * trapezoid(
                   [t, d](double x) {
                     const double e = std::sqrt(x * x + d * d);
                     return std::tanh(e / (2.0 * t)) / e;
                   },
                   eps, w, 400000) -
           1.0;
  };
  const double top = 0.2 * w;
  double prev_d = 0.0, prev_g = g(0.0);
  for (int k = 1; k <= samples; ++k) {
    const double d = top * k / samples, gd = g(d);
    if (gd <= 0.0) {
      // secant on the bracketing cell, a few rounds
      double lo = prev_d, hi = d, glo = prev_g, ghi = gd;
      for (int it = 0; it < 30; ++it) {
        const double m = lo - glo * (hi - lo) / (ghi - glo);
        const double gm = g(m);
        if (gm > 0.0) { lo = m; glo = gm; } else { hi = m; ghi = gm; }
        if (hi - lo < 1e-15) break;
      }
      return lo - glo * (hi - lo) / (ghi - glo);
    }
    prev_d = d;
    prev_g = gd;
  }
  return top;
}

/// Thermodynamic potential difference for a constant gap d, written the
/// direct way (differences of logs) and integrated with Simpson.
inline double psi_constant_gap(double d, double t, double eps, double w, double n0, long n = 400000) {
  auto f = [d, t](double x) {
    const double e = std::sqrt(x * x + d * d);
    return -2.0 * (e - x) + d * d / e * std::tanh(e / (2.0 * t)) -
           4.0 * t * (std::log1p(std::exp(-e / t)) - std::log1p(std::exp(-x / t)));
  };
  return n0 * simpson(f, eps, w, n);
}

inline constexpr double zeta3 = 1.2020569031595942853997;
inline constexpr double bcs_slope = 8.0 * std::numbers::pi * std::numbers::pi / (7.0 * zeta3);
inline constexpr double bcs_jump_ratio = 12.0 / (7.0 * zeta3);

}  // namespace oracle
