#include <doctest.h>

#include <cmath>
#include <random>

#include "dfopf/errors.hpp"
#include "dfopf/thermal.hpp"

using namespace dfopf;

namespace {

ThermalParams reference_params() {
  ThermalParams tp;
  tp.loss_ratio = 5.0;
  tp.rated_to_rise = 55.0;
  tp.rated_hs_rise = 25.0;
  tp.tau_to_hours = 3.0;
  tp.l_rated = 1.0;
  tp.ambient = Eigen::VectorXd::Constant(25, 25.0);
  return tp;
}

}  // namespace

TEST_CASE("aging factor: unity anchor and doubling trend") {
  CHECK(aging_factor_exact(110.0) == doctest::Approx(1.0).epsilon(1e-15));
  // Rule of thumb from the insulation-aging curve: the factor roughly doubles
  // every 6-7 degrees around the hot-spot rating, with the doubling interval
  // stretching slowly at higher temperatures.
  for (double theta = 105.0; theta <= 135.0; theta += 10.0) {
    const double ratio = aging_factor_exact(theta + 6.5) / aging_factor_exact(theta);
    CHECK(ratio > 1.7);
    CHECK(ratio < 2.3);
  }
  for (double theta = 110.0; theta <= 170.0; theta += 10.0)
    CHECK(aging_factor_exact(theta + 10.0) / aging_factor_exact(theta) > 2.0);
  // Spot value straight from the formula.
  CHECK(aging_factor_exact(120.0) ==
        doctest::Approx(std::exp(15000.0 / 383.0 - 15000.0 / 393.0)).epsilon(1e-14));
}

TEST_CASE("piecewise aging: exact at breakpoints, overestimate everywhere") {
  const Eigen::VectorXd bp = default_aging_breakpoints();
  REQUIRE(bp.size() == 9);
  const PiecewiseAging pw = build_piecewise_aging(bp);
  REQUIRE(pw.segments() == 8);

  for (int k = 0; k < bp.size(); ++k) {
    const double exact = aging_factor_exact(bp[k]);
    const double approx = pw.evaluate(bp[k]);
    CHECK(std::abs(approx - exact) <= 1e-12 * std::max(1.0, exact));
  }
  // Secants of a convex curve bound it from above, and the curve is positive.
  for (double theta = 0.0; theta <= 180.0; theta += 0.25) {
    const double f = pw.evaluate(theta);
    CHECK(f >= aging_factor_exact(theta) - 1e-12);
    CHECK(f >= 0.0);
  }
  // Slopes increase with temperature (convexity of the source curve).
  for (int k = 1; k < pw.segments(); ++k) CHECK(pw.slope[k] > pw.slope[k - 1]);
}

TEST_CASE("piecewise aging: rejects bad breakpoints") {
  Eigen::VectorXd one(1);
  one << 10.0;
  CHECK_THROWS_AS(build_piecewise_aging(one), ValidationError);
  Eigen::VectorXd dec(3);
  dec << 0.0, 50.0, 50.0;
  CHECK_THROWS_AS(build_piecewise_aging(dec), ValidationError);
}

TEST_CASE("linearized coefficients: reference values at dt = 1h") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs c = linearized_coefficients(tp, pw, 1.0);

  CHECK(c.delta == doctest::Approx(0.75).epsilon(1e-15));
  // R*dTO / (5*(1+R)*lN) with R=5, dTO=55, lN=1
  CHECK(c.epsilon == doctest::Approx(55.0 / 6.0).epsilon(1e-14));
  // zeta at thetaA=25: (5+R)*dTO/(20*(1+R)) + thetaA/4
  CHECK(c.zeta_at(25.0) == doctest::Approx(10.0 * 55.0 / 120.0 + 6.25).epsilon(1e-14));
  // eta = 4*dHS/(5*lN) for the recommended winding exponent m = 0.8
  CHECK(c.eta == doctest::Approx(4.0 * 25.0 / 5.0).epsilon(1e-15));
  CHECK(c.hs_offset == doctest::Approx(5.0).epsilon(1e-14));

  for (int k = 0; k < pw.segments(); ++k) {
    CHECK(c.alpha[k] == pw.slope[k]);
    CHECK(c.beta[k] == doctest::Approx(pw.slope[k] * c.eta).epsilon(1e-15));
    CHECK(c.gamma[k] ==
          doctest::Approx(pw.slope[k] * 5.0 - pw.intercept[k]).epsilon(1e-14));
  }
}

TEST_CASE("linearized coefficients: delta for all supported period lengths") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  CHECK(std::abs(linearized_coefficients(tp, pw, 1.0).delta - 0.750) < 5e-4);
  CHECK(std::abs(linearized_coefficients(tp, pw, 0.5).delta - 0.857) < 5e-4);
  CHECK(std::abs(linearized_coefficients(tp, pw, 0.25).delta - 0.923) < 5e-4);
}

TEST_CASE("top-oil step: rated fixed point, linear == exact at the Taylor point") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs c = linearized_coefficients(tp, pw, 1.0);

  const double rated_ss = steady_state_top_oil(tp, 1.0, 25.0);
  CHECK(rated_ss == doctest::Approx(80.0).epsilon(1e-15));
  CHECK(top_oil_step(c, 80.0, 1.0, 25.0) == doctest::Approx(80.0).epsilon(1e-14));
  CHECK(top_oil_step_exact(tp, 1.0, 80.0, 1.0, 25.0) ==
        doctest::Approx(80.0).epsilon(1e-14));

  // At the linearization point the two updates agree for any prior state.
  for (double h : {20.0, 55.0, 95.0})
    CHECK(top_oil_step(c, h, 1.0, 25.0) ==
          doctest::Approx(top_oil_step_exact(tp, 1.0, h, 1.0, 25.0)).epsilon(1e-13));
}

TEST_CASE("top-oil step: documented linearization gap over a +/-50% load sweep") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs c = linearized_coefficients(tp, pw, 1.0);

  double max_gap = 0.0;
  for (double l = 0.5; l <= 1.5 + 1e-12; l += 0.01) {
    const double lin = top_oil_step(c, 60.0, l, 25.0);
    const double exact = top_oil_step_exact(tp, 1.0, 60.0, l, 25.0);
    max_gap = std::max(max_gap, std::abs(lin - exact));
  }
  // Tangent-line error of the oil exponent term; the worst case sits at the
  // low end of the sweep. Frozen band documents the approximation quality.
  CHECK(max_gap <= 0.25);
  CHECK(max_gap >= 0.20);
}

TEST_CASE("top-oil recursion: converges to rated steady state within 100 steps") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs c = linearized_coefficients(tp, pw, 1.0);

  double h = 25.0;  // start far from the fixed point
  for (int k = 0; k < 100; ++k) h = top_oil_step(c, h, 1.0, 25.0);
  CHECK(std::abs(h - 80.0) <= 1e-9);
  CHECK(hotspot(tp, h, 1.0) == doctest::Approx(80.0 + 25.0).epsilon(1e-10));
}

TEST_CASE("top-oil recursion: unrolled closed form matches the recursion") {
  const ThermalParams tp = reference_params();
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs c = linearized_coefficients(tp, pw, 0.5);

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> load(0.0, 1.4), amb(10.0, 35.0);
  const int T = 12;
  Eigen::VectorXd l(T + 1), theta_a(T + 1);
  for (int t = 0; t <= T; ++t) {
    l[t] = load(rng);
    theta_a[t] = amb(rng);
  }

  const double h0 = 42.0;
  double h = h0;
  for (int t = 1; t <= T; ++t) h = top_oil_step(c, h, l[t], theta_a[t]);

  double unrolled = std::pow(c.delta, T) * h0;
  for (int tau = 1; tau <= T; ++tau)
    unrolled += std::pow(c.delta, T - tau) * (c.epsilon * l[tau] + c.zeta_at(theta_a[tau]));
  CHECK(h == doctest::Approx(unrolled).epsilon(1e-12));
}

TEST_CASE("steady-state initialization and precedence") {
  ThermalParams tp = reference_params();
  tp.ambient = Eigen::VectorXd::Constant(5, 20.0);

  // No hints: fall back to the provided load.
  CHECK(initial_top_oil(tp, 1.0) == doctest::Approx(20.0 + 55.0).epsilon(1e-14));
  CHECK(initial_top_oil(tp, 0.0) ==
        doctest::Approx(steady_state_top_oil(tp, 0.0, 20.0)).epsilon(1e-14));

  tp.l_init = 1.0;
  CHECK(initial_top_oil(tp, 0.0) == doctest::Approx(75.0).epsilon(1e-14));
  tp.theta_to_init = 33.0;
  CHECK(initial_top_oil(tp, 0.0) == doctest::Approx(33.0).epsilon(1e-15));
}

TEST_CASE("thermal simulation: trajectory wiring and cumulative loss of life") {
  ThermalParams tp = reference_params();
  const TimeGrid grid{6, 1.0};
  tp.ambient = Eigen::VectorXd::Constant(grid.columns(), 25.0);
  tp.theta_to_init = 80.0;
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());

  Eigen::VectorXd load = Eigen::VectorXd::Constant(grid.columns(), 1.0);
  const ThermalState st = simulate_thermal(tp, pw, grid, load);

  // Rated load from the rated steady state: flat at 80 C top-oil, 105 C
  // hot-spot, with the exact aging factor accumulating every hour.
  const double f105 = aging_factor_exact(105.0);
  for (int t = 1; t <= grid.periods; ++t) {
    CHECK(st.top_oil[t] == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(st.hotspot[t] == doctest::Approx(105.0).epsilon(1e-12));
    CHECK(st.aging_exact[t] == doctest::Approx(f105).epsilon(1e-12));
    CHECK(st.aging_piecewise[t] >= st.aging_exact[t] - 1e-12);
    CHECK(st.loss_of_life_h[t] == doctest::Approx(t * f105).epsilon(1e-12));
  }

  Eigen::VectorXd short_load = Eigen::VectorXd::Constant(3, 1.0);
  CHECK_THROWS_AS(simulate_thermal(tp, pw, grid, short_load), ValidationError);
}
