#include <cmath>
#include <random>

#include <catch_amalgamated.hpp>

#include "bcsgap/thermo.hpp"
#include "oracles.hpp"

using namespace bcsgap;

namespace {

const ModelParams desk{0.01, 1.0, 1.0, 0.24, 0.26};

const QuadratureRule& rule() {
  static const QuadratureRule r = build_rule(desk.epsilon, desk.hbar_omega_d, 64, 8);
  return r;
}

const GapOperator& const_op() {
  static const GapOperator op(validate(desk, PotentialKernel::constant(0.25, 0.01, 1.0), rule()));
  return op;
}

Eigen::VectorXd flat(double d) { return Eigen::VectorXd::Constant(rule().size(), d); }

}  // namespace

TEST_CASE("psi of the normal state is zero") {
  CHECK(psi(0.01, flat(0.0), desk, rule()) == 0.0);
}

TEST_CASE("psi against the direct log-difference form") {
  for (double d : {0.002, 0.01, 0.03})
    for (double t : {0.004, 0.012}) {
      const double want = oracle::psi_constant_gap(d, t, 0.01, 1.0, 1.0);
      CHECK(std::abs(psi(t, flat(d), desk, rule()) - want) <= 1e-9 * std::abs(want) + 1e-17);
    }
}

TEST_CASE("psi is linear in the density of states") {
  ModelParams p = desk;
  p.n0 = 2.5;
  const double a = psi(0.01, flat(0.01), desk, rule()), b = psi(0.01, flat(0.01), p, rule());
  CHECK(std::abs(b - 2.5 * a) <= 1e-15 * std::abs(b));
}

TEST_CASE("the self-consistent gap lowers the potential") {
  const double t_c = const_op().lower_envelope().tau();
  for (double f : {0.1, 0.5, 0.9}) {
    const double t = f * t_c;
    CHECK(psi(t, flat(const_op().lower_envelope()(t)), desk, rule()) < 0.0);
  }
}

TEST_CASE("psi rejects a row of the wrong length") {
  CHECK_THROWS_AS(psi(0.01, Eigen::VectorXd::Zero(5), desk, rule()), LengthMismatch);
}

TEST_CASE("finite-difference weights are exact on quartics") {
  const std::vector<double> x{0.0, 0.1, 0.25, 0.3, 0.45};
  auto f = [](double t) { return 1.0 - 2.0 * t + 3.0 * t * t - t * t * t + 0.5 * t * t * t * t; };
  auto df = [](double t) { return -2.0 + 6.0 * t - 3.0 * t * t + 2.0 * t * t * t; };
  auto d2f = [](double t) { return 6.0 - 6.0 * t + 6.0 * t * t; };
  for (double x0 : {0.0, 0.2, 0.45}) {
    const auto w = detail::fd_weights(x0, x, 2);
    double v0 = 0, v1 = 0, v2 = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      v0 += w[0][j] * f(x[j]);
      v1 += w[1][j] * f(x[j]);
      v2 += w[2][j] * f(x[j]);
    }
    CHECK(v0 == Catch::Approx(f(x0)).epsilon(1e-12));
    CHECK(v1 == Catch::Approx(df(x0)).epsilon(1e-10));
    CHECK(v2 == Catch::Approx(d2f(x0)).epsilon(1e-9));
  }
}

TEST_CASE("one-sided slope is exact on quadratics") {
  auto p = [](double h) { return 0.3 * h - 2.0 * h * h; };  // Psi(T_c - h)
  // Psi'(T_c) = -0.3 in T
  CHECK(psi_slope_one_sided(0.0, p(0.01), p(0.02), 0.01) == Catch::Approx(-0.3).epsilon(1e-12));
}

TEST_CASE("psi curve needs seven temperatures") {
  std::vector<double> g{0.004, 0.006, 0.008, 0.01, 0.012, 0.014};
  const auto s = solve_surface(const_op(), g);
  CHECK_THROWS_AS(psi_curve(s, desk, rule(), {0.5, 0.016, 0.004, 0.02}), GridTooCoarse);
}

TEST_CASE("psi curve on a constant-kernel surface") {
  const double t_c = critical_temperature(const_op()).t_c;
  std::vector<double> g;
  for (int k = 0; k <= 10; ++k) g.push_back(t_c * (0.5 + 0.05 * k));
  SurfaceOptions o;
  o.t_c = t_c;
  const auto s = solve_surface(const_op(), g, o);
  const auto c = psi_curve(s, desk, rule(), {0.5, t_c, 0.5 * t_c, upper_delta_zero(const_op())});
  REQUIRE(c.psi.size() == g.size());
  CHECK(c.psi.back() == 0.0);
  CHECK(c.psi_error.back() == 0.0);
  CHECK(c.psi_error_certified.back());
  REQUIRE(c.slope_at_tc.has_value());
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    CHECK(c.psi[k] < 0.0);
    CHECK(c.entropy_diff[k] < 0.0);
    CHECK(c.psi[k] < c.psi[k + 1]);
    CHECK_FALSE(c.psi_error_certified[k]);
  }
}

TEST_CASE("heat jump formula: positive, quadratic in v, eta and xi forms agree") {
  const double t_c = 0.0165;
  for (const Eigen::VectorXd& v :
       {Eigen::VectorXd(flat(0.3)),
        Eigen::VectorXd((0.2 + 0.1 * Eigen::Map<const Eigen::VectorXd>(rule().nodes.data(),
                                                                        rule().size()).array())
                            .matrix())}) {
    const double dc = delta_cv_formula(v, desk, rule(), t_c);
    CHECK(dc > 0.0);
    CHECK(delta_cv_formula(2.0 * v, desk, rule(), t_c) == Catch::Approx(4.0 * dc).epsilon(1e-14));
    const double e = psi_second_derivative_energy_form(v, desk, rule(), t_c);
    CHECK(e < 0.0);
    CHECK(std::abs(dc + t_c * e) <= 1e-8 * dc);
  }
  CHECK_THROWS_AS(delta_cv_formula(flat(0.0), desk, rule(), t_c), std::invalid_argument);
}

TEST_CASE("numeric heat jump lists the missing temperatures") {
  std::vector<double> g{0.004, 0.006, 0.008};
  const auto s = solve_surface(const_op(), g);
  try {
    delta_cv_numeric(s, desk, rule(), 0.01, 0.001, 0.0015);
    FAIL("expected MissingTemperatures");
  } catch (const MissingTemperatures& e) {
    REQUIRE(e.missing.size() == 2);
    CHECK(e.missing[0] == Catch::Approx(0.009));
    CHECK(e.missing[1] == Catch::Approx(0.0085));
  }
  CHECK_NOTHROW(delta_cv_numeric(s, desk, rule(), 0.01, 0.002, 0.004));
  CHECK_THROWS_AS(delta_cv_numeric(s, desk, rule(), 0.01, 0.002, 0.002), std::invalid_argument);
}

TEST_CASE("psi error bound: linear, zero at zero, needs a contraction") {
  const double c = psi_error_constant(0.5, 0.03, desk, 0.016, 0.008);
  CHECK(c == Catch::Approx(2.0 * 0.03 * (5.0 * std::log(100.0) + 0.5)));
  CHECK(psi_error_bound(0.0, 0.5, 0.03, desk, 0.016, 0.008) == 0.0);
  CHECK(psi_error_bound(3e-9, 0.5, 0.03, desk, 0.016, 0.008) ==
        Catch::Approx(3.0 * psi_error_bound(1e-9, 0.5, 0.03, desk, 0.016, 0.008)));
  CHECK_THROWS_AS(psi_error_bound(1e-9, 1.0, 0.03, desk, 0.016, 0.008), std::invalid_argument);
  CHECK_THROWS_AS(psi_error_bound(1e-9, 0.0, 0.03, desk, 0.016, 0.008), std::invalid_argument);
  CHECK_THROWS_AS(psi_error_bound(-1.0, 0.5, 0.03, desk, 0.016, 0.008), std::invalid_argument);
}

TEST_CASE("Delta2 at zero temperature uses the closed form") {
  const double want = delta0_closed_form(desk.u2, desk);
  CHECK(std::abs(upper_delta_zero(const_op()) - want) <= 1e-15 * want);
}

TEST_CASE("relative difference is symmetric") {
  CHECK(relative_diff(1.0, 1.1) == relative_diff(1.1, 1.0));
  CHECK(relative_diff(-2.0, -2.0) == 0.0);
}
