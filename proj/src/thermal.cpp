#include "dfopf/thermal.hpp"

#include <cmath>

#include "dfopf/errors.hpp"

namespace dfopf {

namespace {
// Arrhenius constants of the aging curve: unity at 110 deg C.
constexpr double kAgingRef = 15000.0 / 383.0;
constexpr double kAgingScale = 15000.0;
constexpr double kCelsiusToKelvin = 273.0;
}  // namespace

double aging_factor_exact(double theta_hotspot_c) {
  return std::exp(kAgingRef - kAgingScale / (theta_hotspot_c + kCelsiusToKelvin));
}

Eigen::VectorXd default_aging_breakpoints() {
  Eigen::VectorXd b(9);
  b << 0.0, 110.0, 120.0, 130.0, 140.0, 150.0, 160.0, 170.0, 180.0;
  return b;
}

PiecewiseAging build_piecewise_aging(const Eigen::VectorXd& breakpoints) {
  const int m = static_cast<int>(breakpoints.size()) - 1;
  if (m < 1) throw ValidationError("piecewise aging needs at least two breakpoints");
  for (int k = 0; k < m; ++k)
    if (breakpoints[k + 1] <= breakpoints[k])
      throw ValidationError("aging breakpoints must be strictly increasing");

  PiecewiseAging pw;
  pw.breakpoints = breakpoints;
  pw.slope.resize(m);
  pw.intercept.resize(m);
  for (int k = 0; k < m; ++k) {
    const double t0 = breakpoints[k], t1 = breakpoints[k + 1];
    const double f0 = aging_factor_exact(t0), f1 = aging_factor_exact(t1);
    pw.slope[k] = (f1 - f0) / (t1 - t0);
    pw.intercept[k] = pw.slope[k] * t0 - f0;  // so that a*t0 - b == f0
  }
  return pw;
}

double PiecewiseAging::evaluate(double theta_hotspot) const {
  return (slope.array() * theta_hotspot - intercept.array()).maxCoeff();
}

LinearizedCoeffs linearized_coefficients(const ThermalParams& tp,
                                         const PiecewiseAging& pw,
                                         double dt_hours) {
  if (tp.l_rated <= 0.0) throw ValidationError("transformer needs a positive rated loading");
  if (tp.loss_ratio <= 0.0) throw ValidationError("transformer loss ratio must be positive");

  const double denom = tp.k1 * tp.tau_to_hours + dt_hours;
  const double gain = dt_hours / denom;  // weight of the steady-state target
  const double R = tp.loss_ratio;

  LinearizedCoeffs c;
  c.delta = tp.k1 * tp.tau_to_hours / denom;
  c.epsilon = gain * tp.n * R / (1.0 + R) * tp.rated_to_rise / tp.l_rated;
  c.zeta_const = gain * (1.0 + (1.0 - tp.n) * R) / (1.0 + R) * tp.rated_to_rise;
  c.ambient_gain = gain;
  c.eta = tp.m * tp.rated_hs_rise / tp.l_rated;
  c.hs_offset = (1.0 - tp.m) * tp.rated_hs_rise;
  c.alpha = pw.slope;
  c.beta = pw.slope * c.eta;
  c.gamma = pw.slope.array() * c.hs_offset - pw.intercept.array();
  return c;
}

double top_oil_step(const LinearizedCoeffs& c, double h_prev, double l,
                    double ambient_c) {
  return c.delta * h_prev + c.epsilon * l + c.zeta_at(ambient_c);
}

double top_oil_step_exact(const ThermalParams& tp, double dt_hours,
                          double h_prev, double l, double ambient_c) {
  const double denom = tp.k1 * tp.tau_to_hours + dt_hours;
  const double delta = tp.k1 * tp.tau_to_hours / denom;
  return delta * h_prev +
         (1.0 - delta) * (steady_state_top_oil(tp, l, ambient_c));
}

double hotspot(const ThermalParams& tp, double top_oil_c, double l) {
  return top_oil_c + tp.m * tp.rated_hs_rise * l / tp.l_rated +
         (1.0 - tp.m) * tp.rated_hs_rise;
}

double steady_state_top_oil(const ThermalParams& tp, double l0, double ambient_c) {
  const double R = tp.loss_ratio;
  const double ratio = (1.0 + (l0 / tp.l_rated) * R) / (1.0 + R);
  return ambient_c + tp.rated_to_rise * std::pow(ratio, tp.n);
}

double initial_top_oil(const ThermalParams& tp, double fallback_load) {
  if (tp.theta_to_init) return *tp.theta_to_init;
  const double ambient0 = tp.ambient.size() > 0 ? tp.ambient[0] : 25.0;
  const double l0 = tp.l_init ? *tp.l_init : fallback_load;
  return steady_state_top_oil(tp, l0, ambient0);
}

ThermalState simulate_thermal(const ThermalParams& tp, const PiecewiseAging& pw,
                              const TimeGrid& grid, const Eigen::VectorXd& load_sq) {
  const int cols = grid.columns();
  if (load_sq.size() != cols)
    throw ValidationError("thermal simulation load series must cover periods 0..T");
  if (tp.ambient.size() != cols)
    throw ValidationError("ambient series must cover periods 0..T");

  const LinearizedCoeffs c = linearized_coefficients(tp, pw, grid.dt_hours);

  ThermalState st;
  st.top_oil.setZero(cols);
  st.hotspot.setZero(cols);
  st.aging_exact.setZero(cols);
  st.aging_piecewise.setZero(cols);
  st.loss_of_life_h.setZero(cols);

  st.top_oil[0] = initial_top_oil(tp, load_sq.size() > 1 ? load_sq[1] : 0.0);
  double lol = 0.0;
  for (int t = 1; t <= grid.periods; ++t) {
    st.top_oil[t] = top_oil_step(c, st.top_oil[t - 1], load_sq[t], tp.ambient[t]);
    st.hotspot[t] = hotspot(tp, st.top_oil[t], load_sq[t]);
    st.aging_exact[t] = aging_factor_exact(st.hotspot[t]);
    st.aging_piecewise[t] = pw.evaluate(st.hotspot[t]);
    lol += st.aging_exact[t] * grid.dt_hours;
    st.loss_of_life_h[t] = lol;
  }
  return st;
}

}  // namespace dfopf
