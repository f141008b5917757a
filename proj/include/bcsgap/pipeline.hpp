#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bcsgap/config.hpp"
#include "bcsgap/errors.hpp"
#include "bcsgap/gap_operator.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/simple_gap.hpp"
#include "bcsgap/thermo.hpp"

namespace bcsgap {

enum class ExitCode : int {
  ok = 0,
  verify_failed = 1,
  config_error = 2,
  certification_error = 3,
  resolution_error = 4,
};

struct RunOptions {
  bool uncertified = false;
  std::optional<std::string> out_dir;  // overrides outputs.dir
  bool quiet = false;
  bool timestamp = true;               // metadata.generated_at
  std::ostream* log = &std::cerr;

  void note(const std::string& msg) const {
    if (!quiet && log) *log << msg << '\n';
  }
};

using nlohmann::json;

inline json to_json(const std::vector<double>& v) { return json(v); }
inline json to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

// ---------------------------------------------------------------------------
// Window and temperature grid

struct WindowChoice {
  double tau = 0.0;
  double alpha = 0.0;
  bool certified = false;
  std::string source;                  // auto | explicit | fallback
  std::optional<double> best_alpha;    // from a failed automatic search
  std::optional<double> best_tau;
};

inline constexpr int window_grid_points = 17;

inline double window_alpha(const GapOperator& op, double tau, double t_c) {
  const auto g = window_grid(tau, t_c, window_grid_points);
  return alpha_bound(tau, op, g).value;
}

/// Certified window when possible; otherwise (if allowed) the configured
/// uncertified fallback tau = tau_frac * T_c.
inline WindowChoice choose_window(const GapOperator& op, double t_c, const WindowConfig& w,
                                  bool allow_uncertified) {
  WindowChoice out;
  if (w.mode == "explicit") {
    if (!(*w.tau < t_c))
      throw ConfigError("window.tau = " + format_number(*w.tau) + " is not below T_c = " +
                        format_number(t_c));
    out.tau = *w.tau;
    out.alpha = window_alpha(op, out.tau, t_c);
    out.certified = out.alpha < 1.0;
    out.source = "explicit";
    if (!out.certified && !allow_uncertified) throw NoCertifiedWindow(out.alpha, out.tau, w.alpha_max);
    return out;
  }
  try {
    const auto win = auto_tau(op, t_c, w.alpha_max, window_grid_points);
    out.tau = win.tau;
    out.alpha = win.alpha;
    out.certified = win.alpha < 1.0;
    out.source = "auto";
  } catch (const NoCertifiedWindow& e) {
    if (!allow_uncertified) throw;
    out.tau = w.tau_frac * t_c;
    out.alpha = window_alpha(op, out.tau, t_c);
    out.certified = false;
    out.source = "fallback";
    out.best_alpha = e.best_alpha;
    out.best_tau = e.best_tau;
  }
  return out;
}

/// Offsets s/T_c at which rows are always solved: the two derivative steps,
/// their doubles and halves, and the fit ladder k * min(h1, h2).
inline std::vector<double> required_offsets(const Tolerances& t) {
  std::vector<double> s{t.h1, 2.0 * t.h1, t.h2, 2.0 * t.h2, 0.5 * t.h1, 0.5 * t.h2};
  const double step = std::min(t.h1, t.h2);
  for (int k = 1; k <= t.n_fit; ++k) s.push_back(k * step);
  return s;
}

inline double offset_temperature(double t_c, double s) { return t_c * (1.0 - s); }

/// T_k = tau + (T_c - tau)(1 - (1 - k/(n-1))^p), clustered toward T_c for
/// p > 1, merged with the required offsets that fall inside [tau, T_c].
inline std::vector<double> temperature_grid(double tau, double t_c, const RunConfig& c) {
  constexpr std::size_t min_points = 7;
  const int n = c.temps.count;
  if (n < static_cast<int>(min_points)) throw GridTooCoarse(static_cast<std::size_t>(n), min_points);
  std::vector<std::pair<double, bool>> pts;  // (T, exact offset row)
  for (int k = 0; k < n; ++k) {
    const double r = 1.0 - static_cast<double>(k) / (n - 1);
    pts.emplace_back(k + 1 == n ? t_c : tau + (t_c - tau) * (1.0 - std::pow(r, c.temps.cluster_exp)),
                     k + 1 == n);
  }
  for (double s : required_offsets(c.tolerances)) {
    const double t = offset_temperature(t_c, s);
    if (t >= tau) pts.emplace_back(t, true);
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, bool>> merged;
  for (const auto& p : pts) {
    if (!merged.empty() && p.first - merged.back().first <= 1e-9 * t_c) {
      if (p.second && !merged.back().second) merged.back() = p;
      continue;
    }
    merged.push_back(p);
  }
  std::vector<double> grid;
  for (const auto& p : merged) grid.push_back(p.first);
  return grid;
}

// ---------------------------------------------------------------------------
// Solve pipeline

struct SolveRun {
  RunConfig config;
  std::shared_ptr<const GapOperator> op;
  CriticalTemperature tc;
  WindowChoice window;
  std::vector<double> grid;
  GapSurface surface;
  VWFit fit;
  Eigen::VectorXd f_residual;
  Eigen::VectorXd g_residual;
};

inline std::shared_ptr<const GapOperator> build_operator(const RunConfig& c) {
  auto rule = c.rule();
  return std::make_shared<const GapOperator>(validate(c.model, c.potential(), rule));
}

inline unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

inline SolveRun run_solve(const RunConfig& c, bool allow_uncertified, const RunOptions& opt = {}) {
  SolveRun r;
  r.config = c;
  r.op = build_operator(c);
  opt.note("critical temperature ...");
  r.tc = critical_temperature(*r.op);
  opt.note("  T_c = " + format_number(r.tc.t_c));
  r.window = choose_window(*r.op, r.tc.t_c, c.window, allow_uncertified);
  opt.note("  window tau = " + format_number(r.window.tau) + " (" + r.window.source +
           "), alpha = " + format_number(r.window.alpha) +
           (r.window.certified ? "" : "  [uncertified]"));
  r.grid = temperature_grid(r.window.tau, r.tc.t_c, c);
  SurfaceOptions so;
  so.tol = c.tolerances.picard_tol;
  so.max_iter = c.tolerances.max_iter;
  so.t_c = r.tc.t_c;
  so.certificate = Certificate{r.window.tau, r.tc.t_c, r.window.alpha};
  so.threads = worker_count();
  opt.note("solving " + std::to_string(r.grid.size()) + " temperatures ...");
  r.surface = solve_surface(*r.op, r.grid, so);
  r.fit = extract_vw(r.surface, r.tc.t_c, c.tolerances.n_fit);
  r.f_residual = check_F(r.fit.v, *r.op, r.tc.t_c);
  r.g_residual = check_G(r.fit.v, r.fit.w, *r.op, r.tc.t_c);
  return r;
}

// ---------------------------------------------------------------------------
// Thermodynamics pipeline

struct ThermoRun {
  ThermoCurve curve;
  HeatJump jump;
  double psi_tc = 0.0;
  double psi_tau = 0.0;
  double slope_h = 0.0;        // one-sided Psi'(T_c) with step h1
  double slope_half = 0.0;     // ... with step h1/2
  double richardson_half = 0.0;  // numeric jump with (h1/2, h2/2)
  double delta2_zero = 0.0;
  double bound_constant = 0.0;
  std::optional<double> bound_at_tau;  // certified a-posteriori bound at tau
  double estimate_at_tau = 0.0;        // same constant times the empirical error estimate
};

inline double psi_at(const SolveRun& s, double t) {
  const auto row = s.surface.find_row(t, 1e-10);
  if (!row) throw MissingTemperatures({t});
  return psi(s.surface.temps[*row], s.surface.values.row(*row).transpose(), s.op->params(),
             s.op->rule());
}

inline ThermoRun run_thermo(const SolveRun& s) {
  ThermoRun r;
  const double t_c = s.tc.t_c;
  const auto& params = s.op->params();
  const auto& rule = s.op->rule();
  const auto& tol = s.config.tolerances;
  r.delta2_zero = upper_delta_zero(*s.op);
  ErrorContext ctx{s.window.alpha, t_c, s.window.tau, r.delta2_zero};
  r.curve = psi_curve(s.surface, params, rule, ctx);
  r.psi_tc = psi_at(s, t_c);
  r.psi_tau = r.curve.psi.front();

  const double h = tol.h1 * t_c;
  r.slope_h = psi_slope_one_sided(r.psi_tc, psi_at(s, offset_temperature(t_c, tol.h1)),
                                  psi_at(s, offset_temperature(t_c, 2.0 * tol.h1)), h);
  r.slope_half = psi_slope_one_sided(r.psi_tc, psi_at(s, offset_temperature(t_c, 0.5 * tol.h1)),
                                     psi_at(s, offset_temperature(t_c, tol.h1)), 0.5 * h);

  r.jump = heat_jump(s.fit.v, s.surface, params, rule, t_c, tol.h1 * t_c, tol.h2 * t_c);
  r.richardson_half =
      delta_cv_numeric(s.surface, params, rule, t_c, 0.5 * tol.h1 * t_c, 0.5 * tol.h2 * t_c);

  r.bound_constant = psi_error_constant(s.window.alpha, r.delta2_zero, params, t_c, s.window.tau);
  const auto& rep = s.surface.reports.front();
  r.estimate_at_tau = r.bound_constant * rep.error_estimate;
  if (rep.fixed_point_error_bound && s.window.alpha < 1.0)
    r.bound_at_tau = psi_error_bound(*rep.fixed_point_error_bound, s.window.alpha, r.delta2_zero,
                                     params, t_c, s.window.tau);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline json metadata(const std::string& command, const RunOptions& opt) {
  json m{{"tool", "bcsgap"}, {"command", command}};
  if (opt.timestamp) m["generated_at"] = iso8601_now();
  return m;
}

inline std::filesystem::path output_dir(const RunConfig& c, const RunOptions& opt) {
  return opt.out_dir ? std::filesystem::path(*opt.out_dir) : std::filesystem::path(c.outputs.dir);
}

inline std::string curve_csv(const GapCurve& g) {
  CsvTable t({"T", "delta"});
  for (std::size_t k = 0; k < g.temps.size(); ++k)
    t.row({format_number(g.temps[k]), format_number(g.deltas[k])});
  return t.str();
}

inline std::string surface_csv(const GapSurface& s) {
  CsvTable t({"T", "x", "u", "iterations", "residual", "certified"});
  for (Eigen::Index k = 0; k < s.values.rows(); ++k) {
    const auto& rep = s.reports[static_cast<std::size_t>(k)];
    const std::string temp = format_number(s.temps[static_cast<std::size_t>(k)]);
    const std::string its = std::to_string(rep.iterations);
    const std::string res = format_number(rep.final_residual);
    const std::string cert = rep.certified ? "1" : "0";
    for (Eigen::Index i = 0; i < s.values.cols(); ++i)
      t.row({temp, format_number(s.nodes[i]), format_number(s.values(k, i)), its, res, cert});
  }
  return t.str();
}

inline std::string thermo_csv(const ThermoCurve& c) {
  CsvTable t({"T", "psi", "entropy_diff", "heat_diff", "psi_error"});
  for (std::size_t k = 0; k < c.temps.size(); ++k)
    t.row({format_number(c.temps[k]), format_number(c.psi[k]), format_number(c.entropy_diff[k]),
           format_number(c.heat_diff[k]), format_number(c.psi_error[k])});
  return t.str();
}

inline json report_json(const SolveReport& r) {
  json j{{"temperature", r.temperature},
         {"iterations", r.iterations},
         {"final_residual", r.final_residual},
         {"empirical_ratio", r.empirical_ratio},
         {"last_ratio", r.last_ratio},
         {"error_estimate", r.error_estimate},
         {"tolerance_used", r.tolerance_used},
         {"relaxed", r.relaxed},
         {"certified", r.certified},
         {"monotone", r.monotone},
         {"assigned_zero", r.assigned_zero}};
  j["fixed_point_error_bound"] =
      r.fixed_point_error_bound ? json(*r.fixed_point_error_bound) : json(nullptr);
  return j;
}

inline json window_json(const WindowChoice& w) {
  json j{{"tau", w.tau}, {"alpha", w.alpha}, {"certified", w.certified}, {"source", w.source}};
  if (w.best_alpha) j["best_alpha"] = *w.best_alpha;
  if (w.best_tau) j["best_tau"] = *w.best_tau;
  return j;
}

inline json surface_json(const SolveRun& s) {
  json reps = json::array();
  for (const auto& r : s.surface.reports) reps.push_back(report_json(r));
  const auto& c = s.surface.checks;
  json checks{{"sandwich_violation", c.sandwich_violation},
              {"monotone_violation", c.monotone_violation},
              {"sandwich_ok", c.sandwich_ok},
              {"monotone_ok", c.monotone_ok},
              {"zero_at_tc_ok", c.zero_at_tc_ok}};
  checks["tc_row_sup"] = c.tc_row_sup ? json(*c.tc_row_sup) : json(nullptr);
  return {{"temps", s.surface.temps}, {"nodes", to_json(s.surface.nodes)}, {"reports", reps},
          {"checks", checks}};
}

inline json critical_json(const SolveRun& s) {
  return {{"t_c", s.tc.t_c},
          {"rho_at_t_c", s.tc.rho},
          {"tau", s.window.tau},
          {"alpha", s.window.alpha},
          {"window", window_json(s.window)},
          {"tau1", s.op->lower_envelope().tau()},
          {"tau2", s.op->upper_envelope().tau()},
          {"nodes", to_json(s.op->nodes())},
          {"v", to_json(s.fit.v)},
          {"w", to_json(s.fit.w)},
          {"eigenfunction", to_json(s.tc.eigenfunction)},
          {"fit",
           {{"offsets", s.fit.offsets},
            {"condition", s.fit.condition},
            {"rms_residual_max", s.fit.fit_residual.maxCoeff()}}},
          {"F_relative_residual", to_json(s.f_residual)},
          {"F_relative_residual_max", s.f_residual.maxCoeff()},
          {"G_residual", to_json(s.g_residual)},
          {"G_residual_max", s.g_residual.maxCoeff()}};
}

inline json heat_jump_json(const SolveRun& s, const ThermoRun& t) {
  const auto& j = t.jump;
  const double d2 = j.energy_form_value;
  const bool positive = j.formula_value > 0.0 && j.numeric_value > 0.0 && -s.tc.t_c * d2 > 0.0;
  json out{{"t_c", s.tc.t_c},
           {"formula_value", j.formula_value},
           {"numeric_value", j.numeric_value},
           {"energy_form_value", d2},
           {"energy_form_jump", -s.tc.t_c * d2},
           {"relative_spread", j.relative_spread},
           {"numeric_value_half_steps", t.richardson_half},
           {"transition",
            {{"psi_at_t_c", t.psi_tc},
             {"psi_slope_at_t_c", t.slope_h},
             {"psi_slope_at_t_c_half_step", t.slope_half},
             {"psi_second_derivative_at_t_c", d2}}},
           {"pass",
            {{"positive", positive},
             {"spread_within_2pct", j.relative_spread <= 0.02},
             {"psi_zero_at_t_c", std::abs(t.psi_tc) < 1e-12},
             {"second_derivative_negative", d2 < 0.0}}},
           {"error_bound",
            {{"constant", t.bound_constant},
             {"psi_at_tau", t.psi_tau},
             {"estimate_at_tau", t.estimate_at_tau}}}};
  out["error_bound"]["certified_bound_at_tau"] =
      t.bound_at_tau ? json(*t.bound_at_tau) : json(nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Verification report

enum class CheckStatus { pass, fail, info };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::info: return "info";
  }
  return "?";
}

struct Check {
  std::string id;
  std::string claim;  // the property being checked, in words
  CheckStatus status = CheckStatus::info;
  double measured = 0.0;
  std::optional<double> tolerance;
  std::string detail;
};

class VerifyReport {
 public:
  void add(Check c) {
    for (const auto& e : checks_)
      if (e.id == c.id) throw std::logic_error("duplicate check id " + c.id);
    checks_.push_back(std::move(c));
  }
  /// Records a pass/fail comparison measured <= tolerance (or >= for at_least).
  void expect_le(std::string id, std::string claim, double measured, double tol,
                 std::string detail = {}) {
    add({std::move(id), std::move(claim),
         measured <= tol ? CheckStatus::pass : CheckStatus::fail, measured, tol,
         std::move(detail)});
  }
  void expect_ge(std::string id, std::string claim, double measured, double tol,
                 std::string detail = {}) {
    add({std::move(id), std::move(claim),
         measured >= tol ? CheckStatus::pass : CheckStatus::fail, measured, tol,
         std::move(detail)});
  }
  void expect(std::string id, std::string claim, bool ok, double measured,
              std::string detail = {}) {
    add({std::move(id), std::move(claim), ok ? CheckStatus::pass : CheckStatus::fail, measured,
         std::nullopt, std::move(detail)});
  }
  void info(std::string id, std::string claim, double measured, std::string detail = {}) {
    add({std::move(id), std::move(claim), CheckStatus::info, measured, std::nullopt,
         std::move(detail)});
  }
  void fail(std::string id, std::string claim, std::string detail) {
    add({std::move(id), std::move(claim), CheckStatus::fail,
         std::numeric_limits<double>::quiet_NaN(), std::nullopt, std::move(detail)});
  }

  const std::vector<Check>& checks() const { return checks_; }
  const Check* find(const std::string& id) const {
    for (const auto& c : checks_)
      if (c.id == id) return &c;
    return nullptr;
  }
  bool passed() const {
    return std::none_of(checks_.begin(), checks_.end(),
                        [](const Check& c) { return c.status == CheckStatus::fail; });
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& c : checks_) {
      json j{{"id", c.id}, {"claim", c.claim}, {"status", to_string(c.status)},
             {"detail", c.detail}};
      j["measured"] = std::isfinite(c.measured) ? json(c.measured) : json(nullptr);
      j["tolerance"] = c.tolerance ? json(*c.tolerance) : json(nullptr);
      arr.push_back(std::move(j));
    }
    std::size_t fails = 0;
    for (const auto& c : checks_) fails += c.status == CheckStatus::fail;
    return {{"checks", arr},
            {"overall", passed() ? "pass" : "fail"},
            {"failed", fails},
            {"total", checks_.size()}};
  }

 private:
  std::vector<Check> checks_;
};

namespace detail {

/// Runs body; an escaping exception becomes a failed check with that id.
template <class F>
void guarded(VerifyReport& rep, const std::string& id, const std::string& claim, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    if (!rep.find(id)) rep.fail(id, claim, std::string("raised: ") + e.what());
  }
}

inline double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a - b).cwiseAbs().array() / b.cwiseAbs().array()).maxCoeff();
}

}  // namespace detail

// Classic weak-coupling constants.
inline constexpr double zeta3 = 1.2020569031595942;
inline constexpr double bcs_slope = 8.0 * std::numbers::pi * std::numbers::pi / (7.0 * zeta3);
inline constexpr double bcs_jump_ratio = 12.0 / (7.0 * zeta3);

inline void verify_quadrature(VerifyReport& rep, const RunConfig& c, const QuadratureRule& rule) {
  const double width = c.model.hbar_omega_d - c.model.epsilon;
  double wsum = 0.0;
  bool positive = true, interior = true;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    wsum += rule.weights[i];
    positive = positive && rule.weights[i] > 0.0;
    interior = interior && rule.nodes[i] > c.model.epsilon && rule.nodes[i] < c.model.hbar_omega_d &&
               (i == 0 || rule.nodes[i] > rule.nodes[i - 1]);
  }
  rep.expect_le("quadrature.weight_sum", "weights are positive and sum to the interval length",
                positive ? std::abs(wsum - width) / width : 1.0, 1e-12);
  rep.expect("quadrature.nodes_interior", "nodes strictly increasing and interior", interior,
             static_cast<double>(rule.size()));

  double worst_mono = -std::numeric_limits<double>::infinity(), worst_sech = worst_mono;
  const int n = 2000;
  for (int k = 0; k < n; ++k) {
    const double z1 = 20.0 * k / n, z2 = 20.0 * (k + 1) / n;
    worst_mono = std::max(worst_mono, tanh_over(z2) - tanh_over(z1));
    const double z = z1 + 1e-3;
    worst_sech = std::max(worst_sech, z * sech2(z) - std::tanh(z));
  }
  rep.expect("quadrature.tanh_over_decreasing", "tanh(z)/z strictly decreasing on [0, 20]",
             worst_mono < 0.0, worst_mono);
  rep.expect("quadrature.sech_bound", "z / cosh^2 z <= tanh z", worst_sech <= 0.0, worst_sech);

  double g_max = -1.0;
  for (int k = 0; k <= 400; ++k) {
    const double eta = k == 0 ? 0.0 : std::pow(10.0, -6.0 + 7.7 * k / 400.0);
    if (eta <= 50.0) g_max = std::max(g_max, g_eval(eta));
  }
  rep.expect("quadrature.g_negative", "g(eta) < 0 on [0, 50]", g_max < 0.0, g_max);
  const double ratio = std::abs((g_eval(1e-2) - g_eval(0.0)) / 1e-2) /
                       std::abs((g_eval(1e-3) - g_eval(0.0)) / 1e-3);
  rep.expect_ge("quadrature.g_flat_at_zero", "g'(0) = 0: difference quotient shrinks linearly",
                ratio, 9.0);

  // tanh(xi/2T)/xi at T = 0.02 (hbar_omega_d units), 2-point panels from 16
  // (past the pre-asymptotic range around the tanh knee) until roundoff
  const double t = 0.02 * c.model.hbar_omega_d;
  auto f = [t](double x) { return std::tanh(x / (2.0 * t)) / x; };
  const double ref = integrate_fn(build_rule(c.model.epsilon, c.model.hbar_omega_d, 1024, 8), f);
  auto err = [&](int panels) {
    return std::abs(integrate_fn(build_rule(c.model.epsilon, c.model.hbar_omega_d, panels, 2), f) - ref);
  };
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (int p = 16; p <= 256 && err(2 * p) > 1e-13 * std::abs(ref); p *= 2)
    worst_ratio = std::min(worst_ratio, err(p) / err(2 * p));
  rep.expect_ge("quadrature.refinement", "halving panel width cuts the error >= 4x", worst_ratio, 4.0);
}

inline void verify_simple(VerifyReport& rep, const GapOperator& op) {
  const auto& lo = op.lower_envelope();
  const auto& hi = op.upper_envelope();
  rep.expect_ge("simple.tau_order", "tau1 < tau2", hi.tau() - lo.tau(), 1e-10);
  rep.expect_le("simple.tau_residual", "tau solves its defining equation",
                std::max(lo.residual(lo.tau()), hi.residual(hi.tau())), 1e-12);

  double worst = 1.0;  // min over the grid of Delta2 - Delta1
  for (int k = 0; k < 50; ++k) {
    const double t = hi.tau() * k / 50.0;
    worst = std::min(worst, hi(t) - lo(t));
  }
  rep.expect_ge("simple.envelope_order", "Delta1(T) < Delta2(T) for T < tau2 (50 points)", worst,
                1e-10);

  for (const auto* g : {&lo, &hi}) {
    const std::string tag = g == &lo ? "lower" : "upper";
    if (auto d0 = g->closed_form_delta0()) {
      const double root = (*g)(0.0);
      rep.expect_le("simple.closed_form_" + tag, "closed-form zero-temperature gap matches the root",
                    std::abs(root - *d0) / *d0, 1e-8);
    } else {
      rep.info("simple.closed_form_" + tag, "closed-form zero-temperature gap matches the root", 0.0,
               "closed form outside its domain (negative radicand)");
    }
    const auto curve = gap_curve(g->coupling(), 40, op.params(), op.rule());
    // Below ~tau/10 the drop is under e^{-17} relative and not resolvable in
    // double precision, so strictness is required only above that.
    bool decreasing = true;
    for (std::size_t k = 1; k < curve.deltas.size(); ++k) {
      const bool resolvable = curve.temps[k - 1] >= 0.1 * curve.tau;
      decreasing = decreasing && (resolvable ? curve.deltas[k] < curve.deltas[k - 1]
                                             : curve.deltas[k] <= curve.deltas[k - 1]);
    }
    rep.expect("simple.decreasing_" + tag,
               "Delta_U non-increasing, strictly where resolvable (T >= tau/10)", decreasing,
               curve.deltas.back());
    const double d0 = (*g)(0.0);
    const double flat = std::max(std::abs((*g)(g->tau() / 100.0) - d0) / 1e-6,
                                 std::abs((*g)(g->tau() / 1000.0) - d0) / 1e-9) / d0;
    rep.expect_le("simple.flat_at_zero_" + tag, "Delta_U(h) - Delta_U(0) = o(h^3) near T = 0", flat,
                  1.0);
  }
}

inline void verify_operator(VerifyReport& rep, const SolveRun& s) {
  const auto& op = *s.op;
  const double t_c = s.tc.t_c;
  const double tol = s.config.tolerances.picard_tol;

  rep.expect("operator.tc_bracket", "tau1 <= T_c <= tau2",
             op.lower_envelope().tau() <= t_c && t_c <= op.upper_envelope().tau(), t_c);
  rep.expect_le("operator.tc_spectral", "spectral radius at T_c equals 1", std::abs(s.tc.rho - 1.0),
                1e-10);
  {
    double worst = 1.0;
    for (int k = 1; k <= 5; ++k) {
      const double below = spectral_radius(op, t_c * (1.0 - k * 1e-3)).rho - 1.0;
      const double above = 1.0 - spectral_radius(op, t_c * (1.0 + k * 1e-3)).rho;
      worst = std::min({worst, below, above});
    }
    rep.expect("operator.spectral_straddle", "rho > 1 below T_c and < 1 above (10 temperatures)",
               worst > 0.0, worst);
  }

  {
    std::string detail = "window source " + s.window.source;
    if (s.window.best_alpha)
      detail += "; best alpha over the search " + format_number(*s.window.best_alpha) + " at tau " +
                format_number(*s.window.best_tau);
    rep.expect("operator.alpha_below_one", "contraction constant alpha < 1 on the window",
               s.window.alpha < 1.0, s.window.alpha, detail);
  }

  {
    // Lipschitz bound on random pairs inside the sandwich box
    std::mt19937_64 rng(20240607);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < 20; ++p) {
      const double t = s.window.tau + (t_c - s.window.tau) * unit(rng);
      const double a = op.lower_envelope()(t), b = op.upper_envelope()(t);
      GapRow u(op.size()), v(op.size());
      for (Eigen::Index i = 0; i < op.size(); ++i) {
        u[i] = a + (b - a) * unit(rng);
        v[i] = a + (b - a) * unit(rng);
      }
      const double lhs = (op.apply(u, t) - op.apply(v, t)).cwiseAbs().maxCoeff();
      const double rhs = s.window.alpha * (u - v).cwiseAbs().maxCoeff() + 1e-10;
      worst = std::max(worst, lhs - rhs);
    }
    rep.expect("operator.lipschitz", "||Au - Av|| <= alpha ||u - v|| + 1e-10 (20 random box pairs)",
               worst <= 0.0, worst);
  }

  {
    double ratio = 0.0;
    bool monotone = true;
    for (const auto& r : s.surface.reports) {
      ratio = std::max(ratio, r.empirical_ratio);
      monotone = monotone && r.monotone;
    }
    rep.expect_le("operator.ratio_below_alpha", "observed step ratio <= alpha + 0.01", ratio,
                  s.window.alpha + 0.01);
    rep.expect("operator.monotone_iterates", "iterates from the upper envelope are non-increasing",
               monotone, ratio);
  }

  {
    // ||A u0 - u0|| against the a-posteriori bound
    double worst = -std::numeric_limits<double>::infinity();
    bool any_certified = false;
    double worst_residual = 0.0;
    for (std::size_t k = 0; k < s.surface.temps.size(); ++k) {
      const auto& r = s.surface.reports[k];
      if (r.assigned_zero) continue;
      const GapRow u = s.surface.values.row(static_cast<Eigen::Index>(k)).transpose();
      const double res = (op.apply(u, s.surface.temps[k]) - u).cwiseAbs().maxCoeff();
      worst_residual = std::max(worst_residual, res);
      if (r.fixed_point_error_bound) {
        any_certified = true;
        worst = std::max(worst, res - (*r.fixed_point_error_bound + r.tolerance_used));
      }
    }
    if (any_certified)
      rep.expect("operator.fixed_point_residual", "||A u0 - u0|| <= alpha r/(1 - alpha) + tol",
                 worst <= 0.0, worst);
    else
      rep.info("operator.fixed_point_residual", "||A u0 - u0|| <= alpha r/(1 - alpha) + tol",
               worst_residual, "no certified solves; measured value is max ||A u0 - u0||");
  }

  {
    const GapRow u = GapRow::Constant(op.size(), op.upper_envelope()(s.window.tau));
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < s.grid.size(); ++k) {
      const GapRow a = op.apply(u, s.grid[k - 1]), b = op.apply(u, s.grid[k]);
      worst = std::max(worst, (b - a).maxCoeff());
    }
    rep.expect("operator.apply_decreasing_in_T", "A u decreases entrywise as T increases",
               worst <= 0.0, worst);
  }

  const auto& ch = s.surface.checks;
  rep.expect("surface.sandwich", "Delta1(T) - tol <= u <= Delta2(T) + tol", ch.sandwich_ok,
             ch.sandwich_violation);
  rep.expect("surface.monotone_in_T", "u(T, x) non-increasing in T", ch.monotone_ok,
             ch.monotone_violation);
  rep.expect_le("surface.zero_at_tc", "row at T_c vanishes (sup < 10 tol)",
                ch.tc_row_sup.value_or(std::numeric_limits<double>::infinity()), 10.0 * tol);

  detail::guarded(rep, "operator.solver_bracket", "Picard: zero row at 1.001 T_c, positive at 0.98 T_c",
                  [&] {
                    PicardOptions po;
                    po.tol = tol;
                    po.max_iter = s.config.tolerances.max_iter;
                    const auto above = picard_solve(op, 1.001 * t_c, po);
                    const auto below = picard_solve(op, 0.98 * t_c, po);
                    const double sup = above.row.cwiseAbs().maxCoeff();
                    const double low = below.row.minCoeff();
                    rep.expect("operator.solver_bracket",
                               "Picard: zero row at 1.001 T_c, positive at 0.98 T_c",
                               sup < 10.0 * tol && low > 0.0, sup,
                               "min u at 0.98 T_c = " + format_number(low));
                  });

  rep.expect("vw.v_positive", "v > 0 at every node", s.fit.v.minCoeff() > 0.0, s.fit.v.minCoeff());
  detail::guarded(rep, "vw.half_window", "refit on half the window changes v by < 1%", [&] {
    const auto half = extract_vw(s.surface, t_c, std::max(3, s.config.tolerances.n_fit / 2));
    rep.expect_le("vw.half_window", "refit on half the window changes v by < 1%",
                  detail::max_rel(half.v, s.fit.v), 1e-2);
  });
  rep.expect_le("vw.F_residual", "max |F - v| / v < 1e-2", s.f_residual.maxCoeff(), 1e-2);
  rep.info("vw.G_residual", "max |G - w| (diagnostic)", s.g_residual.maxCoeff(),
           "max |w| = " + format_number(s.fit.w.cwiseAbs().maxCoeff()));
  {
    const Eigen::VectorXd sv = s.fit.v.cwiseSqrt() / s.fit.v.cwiseSqrt().maxCoeff();
    rep.info("vw.eigenfunction_shape", "sqrt(v) proportional to the critical eigenfunction",
             (sv - s.tc.eigenfunction).cwiseAbs().maxCoeff());
  }
}

inline void verify_thermo(VerifyReport& rep, const SolveRun& s, const ThermoRun& t) {
  const double t_c = s.tc.t_c;
  rep.expect_le("thermo.psi_at_tc", "|Psi(T_c)| < 1e-12", std::abs(t.psi_tc), 1e-12);
  {
    double worst = *std::max_element(t.curve.psi.begin(), t.curve.psi.end());
    rep.expect_le("thermo.psi_nonpositive", "Psi(T) <= 0 on [tau, T_c]", worst, 1e-12);
  }
  {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < t.curve.temps.size(); ++k)
      worst = std::max(worst, t.curve.entropy_diff[k]);
    rep.info("thermo.entropy_sign", "entropy difference <= 0 below T_c (reported only)", worst);
  }
  rep.expect_ge("thermo.slope_at_tc_rate", "one-sided Psi'(T_c) shrinks >= 3.5x when h halves",
                std::abs(t.slope_h) / std::abs(t.slope_half), 3.5,
                "Psi'(T_c) estimates " + format_number(t.slope_h) + ", " + format_number(t.slope_half));
  const auto& j = t.jump;
  rep.expect("thermo.second_derivative_negative", "Psi''(T_c) < 0", j.energy_form_value < 0.0,
             j.energy_form_value);
  const double eta_form = -j.formula_value / t_c;
  rep.expect_le("thermo.eta_xi_forms", "energy and rescaled forms of Psi''(T_c) agree to 1e-8",
                relative_diff(eta_form, j.energy_form_value), 1e-8);
  rep.expect("thermo.jump_positive", "all three specific-heat jump routes are positive",
             j.formula_value > 0.0 && j.numeric_value > 0.0 && j.energy_form_value < 0.0,
             j.formula_value);
  rep.expect_le("thermo.jump_triangle", "three jump routes agree pairwise within 2%",
                j.relative_spread, 0.02);
  rep.expect_le("thermo.richardson_step", "halving h changes the numeric jump by < 0.5%",
                relative_diff(t.richardson_half, j.numeric_value), 5e-3);
  {
    ModelParams doubled = s.op->params();
    doubled.n0 *= 2.0;
    const GapRow row = s.surface.values.row(0).transpose();
    const double p1 = psi(s.surface.temps.front(), row, s.op->params(), s.op->rule());
    const double p2 = psi(s.surface.temps.front(), row, doubled, s.op->rule());
    const double c1 = delta_cv_formula(s.fit.v, s.op->params(), s.op->rule(), t_c);
    const double c2 = delta_cv_formula(s.fit.v, doubled, s.op->rule(), t_c);
    const double b1 = psi_error_constant(s.window.alpha, t.delta2_zero, s.op->params(), t_c, s.window.tau);
    const double b2 = psi_error_constant(s.window.alpha, t.delta2_zero, doubled, t_c, s.window.tau);
    const double dev = std::max({std::abs(p2 - 2 * p1) / std::abs(p1), std::abs(c2 - 2 * c1) / c1,
                                 std::abs(b2 - 2 * b1) / b1});
    rep.expect_le("thermo.n0_homogeneity", "Psi, jump and error bound scale linearly with N0", dev,
                  1e-15);
  }
  if (t.bound_at_tau) {
    rep.expect_le("thermo.error_bound_informative", "a-posteriori bound on Psi(tau) < |Psi(tau)|",
                  *t.bound_at_tau, std::abs(t.psi_tau));
  } else {
    rep.fail("thermo.error_bound_informative", "a-posteriori bound on Psi(tau) < |Psi(tau)|",
             "no certified fixed-point error (alpha = " + format_number(s.window.alpha) +
                 " >= 1); with the empirical estimate the bound would be " +
                 format_number(t.estimate_at_tau) + " vs |Psi(tau)| = " +
                 format_number(std::abs(t.psi_tau)));
  }
}

inline void verify_physics(VerifyReport& rep, const SolveRun& s, const ThermoRun& t) {
  const auto& p = s.op->params();
  const double t_c = s.tc.t_c;
  const bool regime = s.config.kernel.kind == KernelKind::constant && p.epsilon / t_c <= 0.1 &&
                      p.hbar_omega_d / t_c >= 50.0;
  const double slope = s.fit.v.mean() / t_c;
  const double jump = t.jump.formula_value / (2.0 * std::numbers::pi * std::numbers::pi / 3.0 * p.n0 * t_c);
  const double dv = std::abs(slope / bcs_slope - 1.0), dj = std::abs(jump / bcs_jump_ratio - 1.0);
  if (regime) {
    rep.expect_le("physics.weak_coupling_slope", "v/T_c within 5% of 8 pi^2/(7 zeta(3))", dv, 0.05,
                  "v/T_c = " + format_number(slope));
    rep.expect_le("physics.weak_coupling_jump", "jump / (2 pi^2 N0 T_c / 3) within 7% of 12/(7 zeta(3))",
                  dj, 0.07, "ratio = " + format_number(jump));
  } else {
    const std::string why = "not a constant kernel with eps/T_c <= 0.1 and hbar_omega_d/T_c >= 50";
    rep.info("physics.weak_coupling_slope", "v/T_c relative to 8 pi^2/(7 zeta(3))", dv, why);
    rep.info("physics.weak_coupling_jump", "jump ratio relative to 12/(7 zeta(3))", dj, why);
  }
}

/// The same configuration at twice the panels with every temperature offset halved.
inline RunConfig refined(const RunConfig& c) {
  RunConfig r = c;
  r.panels *= 2;
  r.tolerances.h1 *= 0.5;
  r.tolerances.h2 *= 0.5;
  return r;
}

inline VerifyReport run_verify(const RunConfig& c, const RunOptions& opt = {}) {
  VerifyReport rep;
  QuadratureRule rule;
  try {
    rule = c.rule();
  } catch (const std::exception& e) {
    rep.fail("model.valid", "model satisfies its standing assumptions", e.what());
    return rep;
  }
  verify_quadrature(rep, c, rule);

  std::shared_ptr<const GapOperator> op;
  try {
    const auto issues = check_model(c.model, c.potential(), rule);
    if (!issues.empty()) {
      std::string msg;
      for (const auto& i : issues) msg += std::string(to_string(i.kind)) + ": " + i.message + "; ";
      rep.fail("model.valid", "model satisfies its standing assumptions", msg);
      return rep;
    }
    op = build_operator(c);
  } catch (const std::exception& e) {
    rep.fail("model.valid", "model satisfies its standing assumptions", e.what());
    return rep;
  }
  {
    const auto k = kernel_matrix(op->model().kernel(), rule);
    const double margin = std::min(k.minCoeff() - c.model.u1, c.model.u2 - k.maxCoeff());
    rep.expect("model.valid", "model satisfies its standing assumptions", margin > 0.0, margin,
               "kernel margin inside (u1, u2) over all node pairs");
  }

  detail::guarded(rep, "simple.suite", "simple gap equations solvable", [&] { verify_simple(rep, *op); });

  rep.expect_ge("grid.resolution", "temperature grid has at least 7 points",
                static_cast<double>(c.temps.count), 7.0);
  if (c.temps.count < 7) return rep;

  opt.note("verify: default resolution");
  std::optional<SolveRun> s;
  try {
    s = run_solve(c, true, opt);
  } catch (const std::exception& e) {
    rep.fail("pipeline.solve", "surface, T_c and Taylor coefficients computed", e.what());
    return rep;
  }
  detail::guarded(rep, "operator.suite", "operator checks completed", [&] { verify_operator(rep, *s); });

  std::optional<ThermoRun> t;
  try {
    t = run_thermo(*s);
  } catch (const std::exception& e) {
    rep.fail("pipeline.thermo", "thermodynamic potential and jump computed", e.what());
    return rep;
  }
  detail::guarded(rep, "thermo.suite", "thermodynamic checks completed", [&] { verify_thermo(rep, *s, *t); });
  detail::guarded(rep, "physics.suite", "weak-coupling checks completed", [&] { verify_physics(rep, *s, *t); });

  opt.note("verify: doubled resolution");
  detail::guarded(rep, "thermo.jump_triangle_refined",
                  "three jump routes agree pairwise within 0.5% at doubled resolution", [&] {
                    const auto s2 = run_solve(refined(c), true, opt);
                    const auto t2 = run_thermo(s2);
                    rep.expect_le("thermo.jump_triangle_refined",
                                  "three jump routes agree pairwise within 0.5% at doubled resolution",
                                  t2.jump.relative_spread, 5e-3);
                  });
  return rep;
}

// ---------------------------------------------------------------------------
// Commands

/// Maps a failure to the documented exit status and logs it.
inline ExitCode exit_code_for(const std::exception_ptr& ep, const RunOptions& opt) {
  auto say = [&](const char* what, const std::exception& e) {
    if (opt.log) *opt.log << "error (" << what << "): " << e.what() << '\n';
  };
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    say("config", e);
    return ExitCode::config_error;
  } catch (const ValidationError& e) {
    say("model", e);
    return ExitCode::config_error;
  } catch (const DegenerateInterval& e) {
    say("config", e);
    return ExitCode::config_error;
  } catch (const OutputError& e) {
    say("output", e);
    return ExitCode::config_error;
  } catch (const NotConverged& e) {
    say("convergence", e);
    return ExitCode::resolution_error;
  } catch (const GridTooCoarse& e) {
    say("resolution", e);
    return ExitCode::resolution_error;
  } catch (const FitIllConditioned& e) {
    say("resolution", e);
    return ExitCode::resolution_error;
  } catch (const MissingTemperatures& e) {
    say("resolution", e);
    return ExitCode::resolution_error;
  } catch (const NoCertifiedWindow& e) {
    say("certification", e);
    if (opt.log) *opt.log << "hint: rerun with --uncertified, or raise epsilon / move tau toward T_c\n";
    return ExitCode::certification_error;
  } catch (const std::exception& e) {
    say("solver", e);
    return ExitCode::certification_error;
  }
}

template <class F>
int run_command(const RunOptions& opt, F&& body) {
  try {
    return static_cast<int>(body());
  } catch (...) {
    return static_cast<int>(exit_code_for(std::current_exception(), opt));
  }
}

inline int cmd_simple(const RunConfig& c, const RunOptions& opt = {}) {
  return run_command(opt, [&] {
    const auto rule = c.rule();
    validate(c.model, c.potential(), rule);
    const auto dir = output_dir(c, opt);
    json summary{{"metadata", metadata("simple", opt)}};
    int idx = 1;
    for (double u : {c.model.u1, c.model.u2}) {
      const auto curve = gap_curve(u, std::max(c.temps.count, 3), c.model, rule);
      const std::string name = "delta" + std::to_string(idx++);
      if (c.outputs.wants("csv")) write_text(dir / ("simple_" + name + ".csv"), curve_csv(curve));
      json e{{"coupling", u}, {"tau", curve.tau}, {"delta_at_zero", curve.deltas.front()}};
      try {
        const double d0 = delta0_closed_form(u, c.model);
        e["delta0_closed_form"] = d0;
        e["closed_form_relative_diff"] = std::abs(curve.deltas.front() - d0) / d0;
      } catch (const RadicandNegative& r) {
        e["delta0_closed_form"] = nullptr;
        e["closed_form_note"] = r.what();
      }
      summary[name] = e;
    }
    summary["tau_ordered"] = summary["delta1"]["tau"].get<double>() < summary["delta2"]["tau"].get<double>();
    if (c.outputs.wants("json")) write_json(dir / "simple.json", summary);
    opt.note("tau1 = " + format_number(summary["delta1"]["tau"].get<double>()) +
             ", tau2 = " + format_number(summary["delta2"]["tau"].get<double>()));
    return ExitCode::ok;
  });
}

inline void write_solve_outputs(const SolveRun& s, const std::filesystem::path& dir,
                                const RunOptions& opt) {
  if (s.config.outputs.wants("csv")) write_text(dir / "surface.csv", surface_csv(s.surface));
  if (s.config.outputs.wants("json")) {
    write_json(dir / "surface.json", {{"metadata", metadata("solve", opt)}, {"surface", surface_json(s)}});
    write_json(dir / "critical.json", {{"metadata", metadata("solve", opt)}, {"critical", critical_json(s)}});
  }
}

inline int cmd_solve(const RunConfig& c, const RunOptions& opt = {}) {
  return run_command(opt, [&] {
    const auto s = run_solve(c, opt.uncertified, opt);
    write_solve_outputs(s, output_dir(c, opt), opt);
    opt.note("T_c = " + format_number(s.tc.t_c) + ", max |F - v|/v = " +
             format_number(s.f_residual.maxCoeff()));
    return ExitCode::ok;
  });
}

inline int cmd_thermo(const RunConfig& c, const RunOptions& opt = {}) {
  return run_command(opt, [&] {
    const auto s = run_solve(c, opt.uncertified, opt);
    const auto t = run_thermo(s);
    const auto dir = output_dir(c, opt);
    write_solve_outputs(s, dir, opt);
    if (c.outputs.wants("csv")) write_text(dir / "thermo.csv", thermo_csv(t.curve));
    if (c.outputs.wants("json"))
      write_json(dir / "heat_jump.json", {{"metadata", metadata("thermo", opt)}, {"heat_jump", heat_jump_json(s, t)}});
    opt.note("jump: formula " + format_number(t.jump.formula_value) + ", numeric " +
             format_number(t.jump.numeric_value) + ", spread " + format_number(t.jump.relative_spread));
    return ExitCode::ok;
  });
}

inline int cmd_verify(const RunConfig& c, const RunOptions& opt = {}) {
  return run_command(opt, [&] {
    const auto rep = run_verify(c, opt);
    json out = rep.to_json();
    out["metadata"] = metadata("verify", opt);
    out["config"] = to_json(c);
    write_json(output_dir(c, opt) / "verify.json", out);
    if (opt.log && !opt.quiet)
      for (const auto& ch : rep.checks())
        *opt.log << "  [" << to_string(ch.status) << "] " << ch.id
                 << (ch.detail.empty() ? "" : "  (" + ch.detail + ")") << '\n';
    opt.note(std::string("overall: ") + (rep.passed() ? "pass" : "fail"));
    return rep.passed() ? ExitCode::ok : ExitCode::verify_failed;
  });
}

}  // namespace bcsgap
