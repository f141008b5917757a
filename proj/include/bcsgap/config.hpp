#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcsgap/errors.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"

namespace bcsgap {

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct KernelSpec {
  KernelKind kind = KernelKind::blend;
  double value = 0.25;                   // constant
  double lo = 0.245, hi = 0.255;         // blend
  double kx = 1.0, kxi = 2.0;            // blend
  std::vector<double> a, b;              // separable
  std::vector<double> grid, table;       // tabulated, row-major

  PotentialKernel build(const ModelParams& p) const {
    switch (kind) {
      case KernelKind::constant:
        return PotentialKernel::constant(value, p.epsilon, p.hbar_omega_d);
      case KernelKind::blend:
        return PotentialKernel::blend(lo, hi, p.epsilon, p.hbar_omega_d, kx, kxi);
      case KernelKind::separable:
        return PotentialKernel::separable(a, b, p.epsilon, p.hbar_omega_d);
      case KernelKind::tabulated:
        return PotentialKernel::tabulated(grid, table, p.epsilon, p.hbar_omega_d);
    }
    throw ConfigError("unknown kernel kind");
  }
};

struct WindowConfig {
  std::string mode = "auto";  // auto | explicit
  std::optional<double> tau;
  double alpha_max = 0.95;
  double tau_frac = 0.8;      // uncertified fallback: tau = tau_frac * T_c
};

struct TempsConfig {
  int count = 17;
  double cluster_exp = 2.0;
};

struct Tolerances {
  double picard_tol = 1e-12;
  long max_iter = 500000;
  int n_fit = 6;
  double h1 = 0.01;   // derivative steps, relative to T_c
  double h2 = 0.005;
};

struct OutputsConfig {
  std::string dir = "out";
  std::vector<std::string> formats{"csv", "json"};

  bool wants(const std::string& f) const {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  }
};

struct RunConfig {
  ModelParams model;
  KernelSpec kernel;
  int panels = 64;
  int points = 8;
  WindowConfig window;
  TempsConfig temps;
  Tolerances tolerances;
  OutputsConfig outputs;

  QuadratureRule rule() const {
    return build_rule(model.epsilon, model.hbar_omega_d, panels, points);
  }
  PotentialKernel potential() const { return kernel.build(model); }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

inline KernelKind parse_kind(const std::string& s) {
  if (s == "constant") return KernelKind::constant;
  if (s == "blend") return KernelKind::blend;
  if (s == "separable") return KernelKind::separable;
  if (s == "tabulated") return KernelKind::tabulated;
  throw ConfigError("kernel.kind must be constant, blend, separable or tabulated, got '" + s +
                    "'");
}

}  // namespace detail

/// Checks the ranges the pipeline relies on; physical assumptions on the
/// model itself are left to validate().
inline void check_config(const RunConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.panels >= 1, "quadrature.panels must be >= 1");
  need(c.points >= 2 && c.points <= 16, "quadrature.points must lie in [2, 16]");
  need(c.window.mode == "auto" || c.window.mode == "explicit",
       "window.mode must be 'auto' or 'explicit'");
  need(c.window.mode != "explicit" || (c.window.tau && *c.window.tau > 0.0),
       "window.tau must be given and positive when window.mode is 'explicit'");
  need(c.window.alpha_max > 0.0 && c.window.alpha_max < 1.0, "window.alpha_max must lie in (0, 1)");
  need(c.window.tau_frac > 0.0 && c.window.tau_frac < 1.0, "window.tau_frac must lie in (0, 1)");
  need(c.temps.count >= 2, "temps.count must be >= 2");  // >= 7 is a resolution check downstream
  need(c.temps.cluster_exp > 0.0, "temps.cluster_exp must be > 0");
  const auto& t = c.tolerances;
  need(t.picard_tol > 0.0, "tolerances.picard_tol must be > 0");
  need(t.max_iter > 0, "tolerances.max_iter must be > 0");
  need(t.n_fit >= 3, "tolerances.n_fit must be >= 3");
  need(t.h1 > 0.0 && t.h2 > 0.0, "tolerances.h1 and h2 must be > 0");
  need(t.h1 != t.h2, "tolerances.h1 and h2 must differ");
  need(2.0 * std::max(t.h1, t.h2) < 0.5, "tolerances.h1, h2 must be < 0.25");
  need(t.n_fit * std::min(t.h1, t.h2) <= 0.05, "n_fit * min(h1, h2) must be <= 0.05");
  for (const auto& f : c.outputs.formats)
    need(f == "csv" || f == "json", "outputs.formats entries must be 'csv' or 'json'");
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  using detail::reject_unknown;
  RunConfig c;
  reject_unknown(j, "config",
                 {"model", "kernel", "quadrature", "window", "temps", "tolerances", "outputs"});
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model", {"epsilon", "hbar_omega_d", "n0", "u1", "u2"});
    read(m, "epsilon", c.model.epsilon, "model");
    read(m, "hbar_omega_d", c.model.hbar_omega_d, "model");
    read(m, "n0", c.model.n0, "model");
    read(m, "u1", c.model.u1, "model");
    read(m, "u2", c.model.u2, "model");
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    reject_unknown(k, "kernel", {"kind", "value", "lo", "hi", "kx", "kxi", "a", "b", "grid", "values"});
    std::string kind = "blend";
    read(k, "kind", kind, "kernel");
    c.kernel.kind = detail::parse_kind(kind);
    read(k, "value", c.kernel.value, "kernel");
    read(k, "lo", c.kernel.lo, "kernel");
    read(k, "hi", c.kernel.hi, "kernel");
    read(k, "kx", c.kernel.kx, "kernel");
    read(k, "kxi", c.kernel.kxi, "kernel");
    read(k, "a", c.kernel.a, "kernel");
    read(k, "b", c.kernel.b, "kernel");
    read(k, "grid", c.kernel.grid, "kernel");
    if (k.contains("values")) {
      std::vector<std::vector<double>> rows;
      read(k, "values", rows, "kernel");
      for (const auto& r : rows) {
        if (r.size() != rows.size()) throw ConfigError("kernel.values must be a square table");
        c.kernel.table.insert(c.kernel.table.end(), r.begin(), r.end());
      }
    }
    if (c.kernel.kind == KernelKind::separable && (c.kernel.a.size() < 2 || c.kernel.b.size() < 2))
      throw ConfigError("separable kernel needs arrays 'a' and 'b' with >= 2 samples");
    if (c.kernel.kind == KernelKind::tabulated &&
        (c.kernel.grid.size() < 2 || c.kernel.table.size() != c.kernel.grid.size() * c.kernel.grid.size()))
      throw ConfigError("tabulated kernel needs 'grid' and a matching square 'values' table");
  }
  if (j.contains("quadrature")) {
    const auto& q = j["quadrature"];
    reject_unknown(q, "quadrature", {"panels", "points"});
    read(q, "panels", c.panels, "quadrature");
    read(q, "points", c.points, "quadrature");
  }
  if (j.contains("window")) {
    const auto& w = j["window"];
    reject_unknown(w, "window", {"mode", "tau", "alpha_max", "tau_frac"});
    read(w, "mode", c.window.mode, "window");
    if (w.contains("tau") && !w["tau"].is_null()) {
      double tau = 0.0;
      read(w, "tau", tau, "window");
      c.window.tau = tau;
    }
    read(w, "alpha_max", c.window.alpha_max, "window");
    read(w, "tau_frac", c.window.tau_frac, "window");
  }
  if (j.contains("temps")) {
    const auto& t = j["temps"];
    reject_unknown(t, "temps", {"count", "cluster_exp"});
    read(t, "count", c.temps.count, "temps");
    read(t, "cluster_exp", c.temps.cluster_exp, "temps");
  }
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    reject_unknown(t, "tolerances", {"picard_tol", "max_iter", "n_fit", "h1", "h2"});
    read(t, "picard_tol", c.tolerances.picard_tol, "tolerances");
    read(t, "max_iter", c.tolerances.max_iter, "tolerances");
    read(t, "n_fit", c.tolerances.n_fit, "tolerances");
    read(t, "h1", c.tolerances.h1, "tolerances");
    read(t, "h2", c.tolerances.h2, "tolerances");
  }
  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    reject_unknown(o, "outputs", {"dir", "formats"});
    read(o, "dir", c.outputs.dir, "outputs");
    read(o, "formats", c.outputs.formats, "outputs");
  }
  check_config(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json k;
  k["kind"] = to_string(c.kernel.kind);
  switch (c.kernel.kind) {
    case KernelKind::constant:
      k["value"] = c.kernel.value;
      break;
    case KernelKind::blend:
      k["lo"] = c.kernel.lo;
      k["hi"] = c.kernel.hi;
      k["kx"] = c.kernel.kx;
      k["kxi"] = c.kernel.kxi;
      break;
    case KernelKind::separable:
      k["a"] = c.kernel.a;
      k["b"] = c.kernel.b;
      break;
    case KernelKind::tabulated: {
      k["grid"] = c.kernel.grid;
      const auto n = c.kernel.grid.size();
      auto rows = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i)
        rows.push_back(std::vector<double>(c.kernel.table.begin() + i * n,
                                           c.kernel.table.begin() + (i + 1) * n));
      k["values"] = rows;
      break;
    }
  }
  nlohmann::json w{{"mode", c.window.mode},
                   {"alpha_max", c.window.alpha_max},
                   {"tau_frac", c.window.tau_frac}};
  if (c.window.tau) w["tau"] = *c.window.tau;
  return {
      {"model",
       {{"epsilon", c.model.epsilon},
        {"hbar_omega_d", c.model.hbar_omega_d},
        {"n0", c.model.n0},
        {"u1", c.model.u1},
        {"u2", c.model.u2}}},
      {"kernel", k},
      {"quadrature", {{"panels", c.panels}, {"points", c.points}}},
      {"window", w},
      {"temps", {{"count", c.temps.count}, {"cluster_exp", c.temps.cluster_exp}}},
      {"tolerances",
       {{"picard_tol", c.tolerances.picard_tol},
        {"max_iter", c.tolerances.max_iter},
        {"n_fit", c.tolerances.n_fit},
        {"h1", c.tolerances.h1},
        {"h2", c.tolerances.h2}}},
      {"outputs", {{"dir", c.outputs.dir}, {"formats", c.outputs.formats}}},
  };
}

}  // namespace bcsgap
