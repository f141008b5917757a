#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcsgap {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfDomain : public Error {
 public:
  OutOfDomain(double x, double xi, double lower, double upper)
      : Error("kernel argument (" + std::to_string(x) + ", " + std::to_string(xi) +
              ") outside [" + std::to_string(lower) + ", " + std::to_string(upper) + "]"),
        x(x),
        xi(xi) {}
  double x;
  double xi;
};

class DegenerateInterval : public Error {
 public:
  DegenerateInterval(double lower, double upper)
      : Error("degenerate integration interval [" + std::to_string(lower) + ", " +
              std::to_string(upper) + "]") {}
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t expected, std::size_t got)
      : Error("sample count " + std::to_string(got) + " does not match node count " +
              std::to_string(expected)),
        expected(expected),
        got(got) {}
  std::size_t expected;
  std::size_t got;
};

/// The defining equation of tau has no root inside the search bracket.
class NoRoot : public Error {
 public:
  NoRoot(double coupling, double lo, double hi)
      : Error("no critical temperature for coupling " + std::to_string(coupling) +
              " inside bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"),
        coupling(coupling),
        bracket_lo(lo),
        bracket_hi(hi) {}
  double coupling;
  double bracket_lo;
  double bracket_hi;
};

class RadicandNegative : public Error {
 public:
  RadicandNegative(double coupling, double radicand)
      : Error("closed-form zero-temperature gap undefined for coupling " +
              std::to_string(coupling) + ": hbar_omega_d - epsilon*exp(1/U) <= 0"),
        coupling(coupling),
        radicand(radicand) {}
  double coupling;
  double radicand;
};

class NoCertifiedWindow : public Error {
 public:
  NoCertifiedWindow(double best_alpha, double best_tau, double alpha_max)
      : Error("no window start tau with alpha <= " + std::to_string(alpha_max) +
              "; best alpha " + std::to_string(best_alpha) + " at tau " +
              std::to_string(best_tau) +
              " (the contraction bound shrinks only with Delta2(tau)/epsilon)"),
        best_alpha(best_alpha),
        best_tau(best_tau),
        alpha_max(alpha_max) {}
  double best_alpha;
  double best_tau;
  double alpha_max;
};

class NotConverged : public Error {
 public:
  NotConverged(double temperature, long iterations, double last_residual, bool diverging)
      : Error(std::string("Picard iteration at T = ") + std::to_string(temperature) +
              (diverging ? " diverged" : " did not converge") + " after " +
              std::to_string(iterations) + " iterations (last step " +
              std::to_string(last_residual) + ")"),
        temperature(temperature),
        iterations(iterations),
        last_residual(last_residual),
        diverging(diverging) {}
  double temperature;
  long iterations;
  double last_residual;
  bool diverging;
};

class PowerIterationStalled : public Error {
 public:
  PowerIterationStalled(double temperature, double spread)
      : Error("power iteration at T = " + std::to_string(temperature) +
              " did not settle (Collatz-Wielandt spread " + std::to_string(spread) + ")"),
        temperature(temperature),
        spread(spread) {}
  double temperature;
  double spread;
};

class FitIllConditioned : public Error {
 public:
  explicit FitIllConditioned(double condition)
      : Error("Taylor fit of u^2 is ill-conditioned (condition number " +
              std::to_string(condition) + ")"),
        condition(condition) {}
  double condition;
};

class GridTooCoarse : public Error {
 public:
  GridTooCoarse(std::size_t count, std::size_t required)
      : Error("temperature grid has " + std::to_string(count) + " points, need at least " +
              std::to_string(required)),
        count(count),
        required(required) {}
  std::size_t count;
  std::size_t required;
};

class MissingTemperatures : public Error {
 public:
  explicit MissingTemperatures(std::vector<double> missing)
      : Error(describe(missing)), missing(std::move(missing)) {}
  std::vector<double> missing;

 private:
  static std::string describe(const std::vector<double>& m) {
    std::string s = "surface lacks temperature rows:";
    for (double t : m) s += " " + std::to_string(t);
    return s;
  }
};

}  // namespace bcsgap
