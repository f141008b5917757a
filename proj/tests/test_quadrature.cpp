#include <cmath>
#include <random>

#include <catch_amalgamated.hpp>

#include "bcsgap/quadrature.hpp"
#include "oracles.hpp"

using namespace bcsgap;
using Catch::Approx;

TEST_CASE("rule integrates constants and low-degree polynomials exactly") {
  const auto r = build_rule(0.01, 1.0, 64, 8);
  double sum = 0.0;
  for (double w : r.weights) {
    REQUIRE(w > 0.0);
    sum += w;
  }
  CHECK(std::abs(sum - 0.99) / 0.99 < 1e-12);

  const auto r4 = build_rule(0.01, 1.0, 4, 4);
  const double cubic = integrate_fn(r4, [](double x) { return x * x * x; });
  CHECK(std::abs(cubic - (1.0 - 1e-8) / 4.0) < 1e-12);

  // degree 2p - 1 is exact on every panel, degree 2p is not
  for (int p = 2; p <= 16; ++p) {
    const auto rp = build_rule(0.0, 1.0, 1, p);
    const double exact = integrate_fn(rp, [p](double x) { return std::pow(x, 2 * p - 1); });
    CHECK(exact == Approx(1.0 / (2 * p)).epsilon(1e-13));
  }
}

TEST_CASE("nodes are strictly increasing and interior") {
  const auto r = build_rule(0.01, 1.0, 64, 8);
  REQUIRE(r.size() == 512);
  CHECK(r.nodes.front() > 0.01);
  CHECK(r.nodes.back() < 1.0);
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r.nodes[i] > r.nodes[i - 1]);
}

TEST_CASE("tanh(xi/2T)/xi matches a million-point trapezoid") {
  const double t = 0.02;
  auto f = [t](double x) { return std::tanh(x / (2.0 * t)) / x; };
  const double ref = oracle::trapezoid(f, 0.01, 1.0, 1000000);
  const double got = integrate_fn(build_rule(0.01, 1.0, 64, 8), f);
  CHECK(std::abs(got - ref) / ref < 1e-8);
}

TEST_CASE("build_rule rejects bad input") {
  CHECK_THROWS_AS(build_rule(1.0, 1.0, 4, 4), DegenerateInterval);
  CHECK_THROWS_AS(build_rule(1.0, 0.5, 4, 4), DegenerateInterval);
  CHECK_THROWS_AS(build_rule(0.0, 1.0, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_rule(0.0, 1.0, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_rule(0.0, 1.0, 4, 17), std::invalid_argument);
}

TEST_CASE("integrate is the weighted sum") {
  const auto r = build_rule(0.01, 1.0, 16, 4);
  std::vector<double> zeros(r.size(), 0.0), ones(r.size(), 1.0), xs = r.nodes;
  CHECK(integrate(r, zeros) == 0.0);
  CHECK(std::abs(integrate(r, ones) - 0.99) < 1e-13);
  CHECK(std::abs(integrate(r, xs) - (1.0 - 1e-4) / 2.0) / 0.49995 < 1e-12);
  std::vector<double> short_samples(r.size() - 1, 1.0);
  CHECK_THROWS_AS(integrate(r, short_samples), LengthMismatch);
}

TEST_CASE("tanh_over near zero, at one, and across the series threshold") {
  CHECK(tanh_over(0.0) == 1.0);
  const double z = 1e-9;
  CHECK(tanh_over(z) == Approx(1.0 - z * z / 3.0).epsilon(1e-16));
  CHECK(std::abs(tanh_over(1.0) - 0.76159415595576488812) < 1e-14);
  const double th = 1e-4;
  CHECK(std::abs(tanh_over(th) - tanh_over(std::nextafter(th, 1.0))) < 1e-14);
  CHECK(std::abs(tanh_over(std::nextafter(th, 1.0)) - std::tanh(th) / th) < 1e-14);
}

TEST_CASE("tanh_over is strictly decreasing and bounded by one") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0.0, 30.0);
  for (int i = 0; i < 2000; ++i) {
    double a = d(rng), b = d(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (b > 18.0) continue;  // tanh saturates to 1.0 exactly; 1/z still decreases below that
    CHECK(tanh_over(a) > tanh_over(b));
    CHECK(tanh_over(a) <= 1.0);
    CHECK(tanh_over(b) > 0.0);
  }
}

TEST_CASE("z / cosh^2 z <= tanh z") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(0.0, 40.0);
  for (int i = 0; i < 2000; ++i) {
    const double z = d(rng);
    CHECK(z * sech2(z) <= std::tanh(z));
  }
}

TEST_CASE("g at zero, branch agreement and decay") {
  CHECK(g_eval(0.0) == -2.0 / 3.0);
  // eta = 0.1 takes the direct branch; long double is the reference
  const long double e = 0.1L;
  const long double direct = 1.0L / (e * e * std::cosh(e) * std::cosh(e)) - std::tanh(e) / (e * e * e);
  CHECK(std::abs(g_eval(0.1) - static_cast<double>(direct)) < 1e-12);
  // and the two branches meet at the threshold
  const double th = 0.05;
  CHECK(std::abs(g_eval(th) - g_eval(std::nextafter(th, 1.0))) < 1e-12);
  const double g20 = g_eval(20.0);
  CHECK(g20 < 0.0);
  CHECK(std::abs(g20 * 8000.0 + 1.0) < 1e-12);  // -tanh(eta)/eta^3 once sech^2 is negligible
  CHECK(std::abs(g_eval(1e6)) < 1e-17);
  CHECK(g_eval(1e6) < 0.0);
}

TEST_CASE("g is negative on a log grid and flat at the origin") {
  for (int k = 0; k <= 500; ++k) {
    const double eta = std::pow(10.0, -8.0 + 9.7 * k / 500.0);
    if (eta > 50.0) break;
    CHECK(g_eval(eta) < 0.0);
  }
  for (double h : {1e-2, 1e-3}) {
    const double slope = (g_eval(h) - g_eval(0.0)) / h;
    CHECK(std::abs(slope) <= 0.6 * h);  // g' ~ (16/15) eta near 0
  }
}

TEST_CASE("halving panel width cuts the error at least 4x") {
  const double t = 0.02;
  auto f = [t](double x) { return std::tanh(x / (2.0 * t)) / x; };
  const double ref = oracle::simpson(f, 0.01, 1.0, 4000000);
  double prev = std::abs(integrate_fn(build_rule(0.01, 1.0, 16, 2), f) - ref);
  for (int p = 32; p <= 256; p *= 2) {
    const double e = std::abs(integrate_fn(build_rule(0.01, 1.0, p, 2), f) - ref);
    if (e < 1e-12) break;
    CHECK(prev / e >= 4.0);
    prev = e;
  }
}
