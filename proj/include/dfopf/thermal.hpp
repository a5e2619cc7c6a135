#pragma once

#include <Eigen/Dense>
#include <optional>

#include "dfopf/time_grid.hpp"

namespace dfopf {

// IEEE-style transformer thermal model parameters. Temperatures in deg C,
// loading expressed as squared current l in p.u. on the feeder base; the
// transformer's own rated loading is l_rated = (S_rated / S_base)^2.
struct ThermalParams {
  double loss_ratio = 5.0;         // R, rated load loss / no-load loss
  double rated_to_rise = 55.0;     // top-oil rise over ambient at rated load
  double rated_hs_rise = 25.0;     // hot-spot rise over top-oil at rated load
  double tau_to_hours = 3.0;       // top-oil time constant
  double tau_winding_min = 4.0;    // winding time constant (short; informational)
  double k1 = 1.0;                 // discretization constant of the TO update
  double n = 0.8;                  // oil exponent
  double m = 0.8;                  // winding exponent
  double l_rated = 1.0;            // rated squared current, p.u.

  // Initial top-oil temperature: explicit value wins, otherwise steady state
  // at l_init (and if neither is given, callers pick a context default:
  // zero load for the day-ahead problem, the first load sample for the
  // standalone simulator).
  std::optional<double> theta_to_init;
  std::optional<double> l_init;

  Eigen::VectorXd ambient;  // deg C, size T+1; entry 0 used for initialization
};

// Piecewise-linear overestimate of the insulation aging acceleration factor,
// built from secants of the exact curve between breakpoints. Stored in
// slope/intercept form F(theta) = a_k * theta - b_k; because the exact curve
// is convex on the working range, the pointwise max over segments equals the
// interpolant inside the breakpoint span and extrapolates linearly outside.
struct PiecewiseAging {
  Eigen::VectorXd breakpoints;  // size M+1, strictly increasing
  Eigen::VectorXd slope;        // a_k, size M
  Eigen::VectorXd intercept;    // b_k, size M

  int segments() const { return static_cast<int>(slope.size()); }
  double evaluate(double theta_hotspot) const;  // max_k (a_k*theta - b_k)
};

// Everything the hourly linear thermal constraints need, precomputed:
//   top-oil update     h_t = delta*h_{t-1} + epsilon*l_t + zeta_t
//   zeta_t             = zeta_const + ambient_gain * thetaA_t
//   hot-spot rise      thetaH = h + eta*l + hs_offset
//   aging segments     f >= alpha_k*h + beta_k*l + gamma_k
struct LinearizedCoeffs {
  double delta = 0.0;
  double epsilon = 0.0;
  double zeta_const = 0.0;
  double ambient_gain = 0.0;
  double eta = 0.0;        // m * rated_hs_rise / l_rated
  double hs_offset = 0.0;  // (1 - m) * rated_hs_rise
  Eigen::VectorXd alpha;   // size M
  Eigen::VectorXd beta;    // size M
  Eigen::VectorXd gamma;   // size M

  double zeta_at(double ambient_c) const { return zeta_const + ambient_gain * ambient_c; }
};

// Simulated trajectory of one transformer. Vectors sized T+1; entry 0 holds
// the initial condition for top_oil and is unused elsewhere.
struct ThermalState {
  Eigen::VectorXd top_oil;         // deg C
  Eigen::VectorXd hotspot;         // deg C
  Eigen::VectorXd aging_exact;     // F_AA(thetaH)
  Eigen::VectorXd aging_piecewise; // piecewise overestimate at thetaH
  Eigen::VectorXd loss_of_life_h;  // cumulative rated-aging hours (exact curve)
};

// Exact aging acceleration factor; equals 1 at 110 deg C by construction.
double aging_factor_exact(double theta_hotspot_c);

// Default breakpoint grid {0, 110, 120, ..., 180} (8 segments).
Eigen::VectorXd default_aging_breakpoints();

// Secant construction over the given breakpoints. Requires >= 2 strictly
// increasing breakpoints.
PiecewiseAging build_piecewise_aging(const Eigen::VectorXd& breakpoints);

// First-order-in-dt linearization of the exponential top-oil response plus
// the aging-segment coefficients. dt enters through delta, epsilon, zeta.
LinearizedCoeffs linearized_coefficients(const ThermalParams& tp,
                                         const PiecewiseAging& pw,
                                         double dt_hours);

// One top-oil step of the linearized update.
double top_oil_step(const LinearizedCoeffs& c, double h_prev, double l,
                    double ambient_c);

// One top-oil step with the exact nonlinear steady-state target
//   h_t = delta*h_{t-1} + (1-delta) * (dTO * ((1 + (l/lN)*R)/(1+R))^n + thetaA_t).
double top_oil_step_exact(const ThermalParams& tp, double dt_hours,
                          double h_prev, double l, double ambient_c);

// Hot-spot temperature from top-oil and loading.
double hotspot(const ThermalParams& tp, double top_oil_c, double l);

// Steady-state top-oil temperature at constant load l0 and ambient.
double steady_state_top_oil(const ThermalParams& tp, double l0, double ambient_c);

// Resolve the initial top-oil temperature per the precedence documented on
// ThermalParams. `fallback_load` is used when neither explicit field is set.
double initial_top_oil(const ThermalParams& tp, double fallback_load);

// Run the linearized top-oil recursion over a load series (squared current,
// size T+1 with entry 0 ignored as a load), evaluating hot-spot and both
// aging curves per period. Uses the exact curve for the cumulative
// loss-of-life column.
ThermalState simulate_thermal(const ThermalParams& tp, const PiecewiseAging& pw,
                              const TimeGrid& grid, const Eigen::VectorXd& load_sq);

}  // namespace dfopf
