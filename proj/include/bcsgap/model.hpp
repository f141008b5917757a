#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bcsgap/errors.hpp"
#include "bcsgap/quadrature.hpp"

namespace bcsgap {

/// Physical parameters, k_B = 1 (energies and temperatures share one unit).
struct ModelParams {
  double epsilon = 0.01;       // cutoff
  double hbar_omega_d = 1.0;   // Debye energy
  double n0 = 1.0;             // density of states at the Fermi surface
  double u1 = 0.24;            // lower coupling bound
  double u2 = 0.26;            // upper coupling bound
};

enum class KernelKind { constant, blend, separable, tabulated };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::constant: return "constant";
    case KernelKind::blend: return "blend";
    case KernelKind::separable: return "separable";
    case KernelKind::tabulated: return "tabulated";
  }
  return "?";
}

/// Exact low-rank form U(x_i, xi_j) = sum_r left(i, r) * right(r, j).
struct KernelFactors {
  Eigen::MatrixXd left;   // n x r
  Eigen::MatrixXd right;  // r x n
};

/// The coupling U(x, xi) on [epsilon, hbar_omega_d]^2. Not assumed symmetric.
class PotentialKernel {
 public:
  struct Constant {
    double value;
  };
  /// U = lo + (hi - lo) * (2 + cos(kx*pi*s(x)) - cos(kxi*pi*s(xi))) / 4
  struct Blend {
    double lo;
    double hi;
    double kx = 1.0;
    double kxi = 2.0;
  };
  /// U = a(x) * b(xi), factors sampled on a uniform grid of the domain and
  /// joined piecewise linearly.
  struct Separable {
    std::vector<double> a;
    std::vector<double> b;
  };
  /// Table on grid x grid (row-major, values[i * n + j] = U(grid[i], grid[j])),
  /// bilinear inside the grid and clamped outside it.
  struct Tabulated {
    std::vector<double> grid;
    std::vector<double> values;
  };

  static PotentialKernel constant(double value, double lower, double upper) {
    return PotentialKernel(Constant{value}, lower, upper);
  }
  static PotentialKernel blend(double lo, double hi, double lower, double upper,
                               double kx = 1.0, double kxi = 2.0) {
    if (!(lo <= hi)) throw std::invalid_argument("blend kernel needs lo <= hi");
    return PotentialKernel(Blend{lo, hi, kx, kxi}, lower, upper);
  }
  static PotentialKernel separable(std::vector<double> a, std::vector<double> b, double lower,
                                   double upper) {
    if (a.size() < 2 || b.size() < 2)
      throw std::invalid_argument("separable kernel factors need at least 2 samples");
    return PotentialKernel(Separable{std::move(a), std::move(b)}, lower, upper);
  }
  static PotentialKernel tabulated(std::vector<double> grid, std::vector<double> values,
                                   double lower, double upper) {
    if (grid.size() < 2) throw std::invalid_argument("tabulated kernel needs >= 2 grid points");
    if (values.size() != grid.size() * grid.size())
      throw std::invalid_argument("tabulated kernel table must be grid.size()^2 entries");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1]))
        throw std::invalid_argument("tabulated kernel grid must be strictly increasing");
    return PotentialKernel(Tabulated{std::move(grid), std::move(values)}, lower, upper);
  }

  KernelKind kind() const { return static_cast<KernelKind>(payload_.index()); }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const auto& payload() const { return payload_; }

  double operator()(double x, double xi) const {
    const double slack = 1e-13 * (upper_ - lower_);
    if (x < lower_ - slack || x > upper_ + slack || xi < lower_ - slack || xi > upper_ + slack)
      throw OutOfDomain(x, xi, lower_, upper_);
    return std::visit([&](const auto& p) { return eval(p, x, xi); }, payload_);
  }

  /// Low-rank factorization at the given nodes, if the kind has one.
  std::optional<KernelFactors> factors(const std::vector<double>& nodes) const {
    const auto n = static_cast<Eigen::Index>(nodes.size());
    if (const auto* c = std::get_if<Constant>(&payload_)) {
      KernelFactors f{Eigen::MatrixXd::Constant(n, 1, c->value), Eigen::MatrixXd::Ones(1, n)};
      return f;
    }
    if (const auto* b = std::get_if<Blend>(&payload_)) {
      const double d = 0.25 * (b->hi - b->lo);
      KernelFactors f{Eigen::MatrixXd(n, 2), Eigen::MatrixXd(2, n)};
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = scaled(nodes[i]);
        f.left(i, 0) = 1.0;
        f.left(i, 1) = std::cos(b->kx * std::numbers::pi * s);
        f.right(0, i) = b->lo + 2.0 * d - d * std::cos(b->kxi * std::numbers::pi * s);
        f.right(1, i) = d;
      }
      return f;
    }
    if (const auto* s = std::get_if<Separable>(&payload_)) {
      KernelFactors f{Eigen::MatrixXd(n, 1), Eigen::MatrixXd(1, n)};
      for (Eigen::Index i = 0; i < n; ++i) {
        f.left(i, 0) = sample_uniform(s->a, nodes[i]);
        f.right(0, i) = sample_uniform(s->b, nodes[i]);
      }
      return f;
    }
    return std::nullopt;
  }

 private:
  using Payload = std::variant<Constant, Blend, Separable, Tabulated>;

  PotentialKernel(Payload p, double lower, double upper)
      : payload_(std::move(p)), lower_(lower), upper_(upper) {
    if (!(lower < upper)) throw DegenerateInterval(lower, upper);
  }

  double scaled(double x) const {
    return std::clamp((x - lower_) / (upper_ - lower_), 0.0, 1.0);
  }

  double sample_uniform(const std::vector<double>& f, double x) const {
    const double pos = scaled(x) * static_cast<double>(f.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(pos), f.size() - 2);
    const double t = pos - static_cast<double>(i);
    return (1.0 - t) * f[i] + t * f[i + 1];
  }

  double eval(const Constant& c, double, double) const { return c.value; }
  double eval(const Blend& b, double x, double xi) const {
    const double theta = 0.25 * (2.0 + std::cos(b.kx * std::numbers::pi * scaled(x)) -
                                 std::cos(b.kxi * std::numbers::pi * scaled(xi)));
    return b.lo + (b.hi - b.lo) * theta;
  }
  double eval(const Separable& s, double x, double xi) const {
    return sample_uniform(s.a, x) * sample_uniform(s.b, xi);
  }
  double eval(const Tabulated& t, double x, double xi) const {
    const auto& g = t.grid;
    const std::size_t n = g.size();
    auto locate = [&](double v, std::size_t& i, double& frac) {
      if (v <= g.front()) {
        i = 0;
        frac = 0.0;
      } else if (v >= g.back()) {
        i = n - 2;
        frac = 1.0;
      } else {
        i = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), v) - g.begin()) - 1;
        frac = (v - g[i]) / (g[i + 1] - g[i]);
      }
    };
    std::size_t i, j;
    double fx, fy;
    locate(x, i, fx);
    locate(xi, j, fy);
    const auto at = [&](std::size_t r, std::size_t c) { return t.values[r * n + c]; };
    return (1 - fx) * (1 - fy) * at(i, j) + fx * (1 - fy) * at(i + 1, j) +
           (1 - fx) * fy * at(i, j + 1) + fx * fy * at(i + 1, j + 1);
  }

  Payload payload_;
  double lower_;
  double upper_;
};

enum class IssueKind {
  CutoffOrderViolation,
  CouplingOrderViolation,
  DensityNonPositive,
  RuleMismatch,
  KernelOutOfBand,
};

inline const char* to_string(IssueKind k) {
  switch (k) {
    case IssueKind::CutoffOrderViolation: return "CutoffOrderViolation";
    case IssueKind::CouplingOrderViolation: return "CouplingOrderViolation";
    case IssueKind::DensityNonPositive: return "DensityNonPositive";
    case IssueKind::RuleMismatch: return "RuleMismatch";
    case IssueKind::KernelOutOfBand: return "KernelOutOfBand";
  }
  return "?";
}

struct Issue {
  IssueKind kind;
  std::string message;
  // worst offending node pair, KernelOutOfBand only
  double x = 0.0;
  double xi = 0.0;
  double value = 0.0;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Issue> issues)
      : Error(describe(issues)), issues(std::move(issues)) {}
  std::vector<Issue> issues;

  bool has(IssueKind k) const {
    return std::any_of(issues.begin(), issues.end(), [k](const Issue& i) { return i.kind == k; });
  }

 private:
  static std::string describe(const std::vector<Issue>& issues) {
    std::string s = "model validation failed:";
    for (const auto& i : issues) s += std::string(" [") + to_string(i.kind) + "] " + i.message;
    return s;
  }
};

/// Checks every standing assumption; an empty list means the model is valid.
/// Kernel pinching U1 < U < U2 is checked strictly at all node pairs.
inline std::vector<Issue> check_model(const ModelParams& p, const PotentialKernel& kernel,
                                      const QuadratureRule& rule) {
  std::vector<Issue> issues;
  if (!(p.epsilon > 0.0) || !(p.epsilon < p.hbar_omega_d))
    issues.push_back({IssueKind::CutoffOrderViolation,
                      "need 0 < epsilon < hbar_omega_d, got epsilon = " +
                          std::to_string(p.epsilon) +
                          ", hbar_omega_d = " + std::to_string(p.hbar_omega_d)});
  if (!(p.u1 > 0.0) || !(p.u1 < p.u2))
    issues.push_back({IssueKind::CouplingOrderViolation,
                      "need 0 < u1 < u2, got u1 = " + std::to_string(p.u1) +
                          ", u2 = " + std::to_string(p.u2)});
  if (!(p.n0 > 0.0))
    issues.push_back({IssueKind::DensityNonPositive, "need n0 > 0"});
  if (rule.lower != p.epsilon || rule.upper != p.hbar_omega_d || kernel.lower() != p.epsilon ||
      kernel.upper() != p.hbar_omega_d)
    issues.push_back({IssueKind::RuleMismatch,
                      "quadrature rule and kernel must span [epsilon, hbar_omega_d]"});
  if (!issues.empty()) return issues;

  // worst violation by distance outside the open band
  double worst = 0.0;
  Issue band{IssueKind::KernelOutOfBand, ""};
  for (double x : rule.nodes) {
    for (double xi : rule.nodes) {
      const double u = kernel(x, xi);
      const double excess = std::max(p.u1 - u, u - p.u2);
      if (excess >= 0.0 && (band.message.empty() || excess > worst)) {
        worst = excess;
        band.x = x;
        band.xi = xi;
        band.value = u;
        band.message = "U(" + std::to_string(x) + ", " + std::to_string(xi) +
                       ") = " + std::to_string(u) + " not strictly inside (u1, u2)";
      }
    }
  }
  if (!band.message.empty()) issues.push_back(band);
  return issues;
}

/// A model whose invariants have been checked. Immutable.
class Model {
 public:
  const ModelParams& params() const { return params_; }
  const PotentialKernel& kernel() const { return kernel_; }
  const QuadratureRule& rule() const { return rule_; }

 private:
  Model(ModelParams p, PotentialKernel k, QuadratureRule r)
      : params_(p), kernel_(std::move(k)), rule_(std::move(r)) {}
  friend Model validate(const ModelParams&, const PotentialKernel&, const QuadratureRule&);

  ModelParams params_;
  PotentialKernel kernel_;
  QuadratureRule rule_;
};

/// Returns the model iff every invariant holds, otherwise throws
/// ValidationError carrying the full issue list.
inline Model validate(const ModelParams& params, const PotentialKernel& kernel,
                      const QuadratureRule& rule) {
  auto issues = check_model(params, kernel, rule);
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return Model(params, kernel, rule);
}

/// Convenience: kernel value matrix U(x_i, xi_j) at the rule's nodes.
inline Eigen::MatrixXd kernel_matrix(const PotentialKernel& kernel, const QuadratureRule& rule) {
  const auto n = static_cast<Eigen::Index>(rule.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = kernel(rule.nodes[i], rule.nodes[j]);
  return m;
}

inline double eval_kernel(const PotentialKernel& kernel, double x, double xi) {
  return kernel(x, xi);
}

}  // namespace bcsgap
