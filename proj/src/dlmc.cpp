#include "dfopf/dlmc.hpp"

#include <cmath>

#include "dfopf/errors.hpp"
#include "dfopf/thermal.hpp"

namespace dfopf {

PowerFlowResult reconstructed_operating_point(const SolveReport& report,
                                              const FeederModel& model) {
  TimeGrid grid = model.grid;
  grid.periods = report.horizon_periods;
  PowerFlowOptions opts;
  opts.tolerance = 0.0;  // run the sweep down to the roundoff floor
  opts.max_iterations = 500;
  return solve_power_flow(model.topology, grid, report.op.p, report.op.q,
                          report.op.v.row(0).transpose(), opts);
}

PiCoefficients transformer_pi(const SolveReport& report, const FeederModel& model) {
  const int Y = static_cast<int>(model.transformers.size());
  const int T = report.periods;
  const int H = report.horizon_periods;
  if (static_cast<int>(report.duals.xi.size()) != Y)
    throw ValidationError("dual solution is missing transformer xi blocks");

  PiCoefficients out;
  out.periods = T;
  out.horizon_periods = H;
  out.pi = Eigen::MatrixXd::Zero(Y, T + 1);
  out.alpha_tilde = Eigen::MatrixXd::Zero(Y, H + 1);
  out.eta.resize(Y);
  out.epsilon.resize(Y);
  out.delta.resize(Y);
  out.rho = Eigen::VectorXd::Zero(Y);

  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const bool cycle = report.horizon.mode == HorizonEnd::Cycle;
  for (int y = 0; y < Y; ++y) {
    const LinearizedCoeffs co = linearized_coefficients(
        model.transformers[y].params, pw, model.grid.dt_hours);
    out.eta[y] = co.eta;
    out.epsilon[y] = co.epsilon;
    out.delta[y] = co.delta;
    if (cycle) out.rho[y] = report.duals.rho[y];

    const Eigen::MatrixXd& xi = report.duals.xi[y];
    for (int t = 1; t <= H; ++t)
      out.alpha_tilde(y, t) = co.alpha.dot(xi.col(t));

    // Backward recursion. In cycle mode the last period picks up the cycle
    // dual undiscounted (w_T = alpha~_T + rho, the stationarity condition for
    // the day-boundary state), so the finite sum wraps into the geometric
    // series over repeated days; in extended mode the tail simply ends.
    Eigen::VectorXd w = Eigen::VectorXd::Zero(H + 2);
    w[H + 1] = 0.0;
    for (int t = H; t >= 1; --t) {
      const double tail =
          (t == H && cycle) ? out.rho[y] : co.delta * w[t + 1];
      w[t] = out.alpha_tilde(y, t) + tail;
    }
    for (int tp = 1; tp <= T; ++tp)
      out.pi(y, tp) = co.epsilon * w[tp] + co.eta * out.alpha_tilde(y, tp);
  }
  return out;
}

DlmcBreakdown decompose(const SolveReport& report, const FeederModel& model,
                        const SensitivityTensor& tensor,
                        const PiCoefficients& pi) {
  const FeederTopology& topo = model.topology;
  const int N = topo.line_count();
  const int nodes = N + 1;
  const int T = report.periods;
  const int Y = static_cast<int>(model.transformers.size());
  if (static_cast<int>(tensor.periods.size()) < T)
    throw ValidationError("sensitivity tensor does not cover the reported day");

  DlmcBreakdown out;
  out.periods = T;
  auto init_side = [&](DlmcSide& side) {
    side.energy = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.loss_real = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.loss_reactive = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.voltage = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.ampacity = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.transformer = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.total = Eigen::MatrixXd::Zero(nodes, T + 1);
    side.solver_dual = Eigen::MatrixXd::Zero(nodes, T + 1);
  };
  init_side(out.p);
  init_side(out.q);

  for (int t = 1; t <= T; ++t) {
    const PeriodSensitivities& s = tensor.periods[t - 1];
    const double cp = model.costs.c_p[t];
    const double cq = model.costs.c_q[t];

    out.p.energy(0, t) = cp;
    out.p.total(0, t) = cp;
    out.p.solver_dual(0, t) = report.duals.lambda_p(0, t);
    out.q.energy(0, t) = cq;
    out.q.total(0, t) = cq;
    out.q.solver_dual(0, t) = report.duals.lambda_q(0, t);

    for (int site = 1; site <= N; ++site) {
      const int c = site - 1;
      double r_dl_p = 0.0, x_dl_p = 0.0, mu_dv_p = 0.0, nu_dl_p = 0.0;
      double r_dl_q = 0.0, x_dl_q = 0.0, mu_dv_q = 0.0, nu_dl_q = 0.0;
      for (int j = 1; j <= N; ++j) {
        const Line& ln = topo.lines[j - 1];
        const int lj = j - 1;
        r_dl_p += ln.r * s.dl_dp(lj, c);
        x_dl_p += ln.x * s.dl_dp(lj, c);
        r_dl_q += ln.r * s.dl_dq(lj, c);
        x_dl_q += ln.x * s.dl_dq(lj, c);
        const double mu = report.duals.mu_up(j, t) - report.duals.mu_lo(j, t);
        mu_dv_p += mu * s.dv_dp(lj, c);
        mu_dv_q += mu * s.dv_dq(lj, c);
        nu_dl_p += report.duals.nu(lj, t) * s.dl_dp(lj, c);
        nu_dl_q += report.duals.nu(lj, t) * s.dl_dq(lj, c);
      }
      double pi_dl_p = 0.0, pi_dl_q = 0.0;
      for (int y = 0; y < Y; ++y) {
        const int line = topo.transformer_lines[y];
        pi_dl_p += pi.pi(y, t) * s.dl_dp(line, c);
        pi_dl_q += pi.pi(y, t) * s.dl_dq(line, c);
      }

      out.p.energy(site, t) = cp;
      out.p.loss_real(site, t) = cp * r_dl_p;
      out.p.loss_reactive(site, t) = cq * x_dl_p;
      out.p.voltage(site, t) = mu_dv_p;
      out.p.ampacity(site, t) = nu_dl_p;
      out.p.transformer(site, t) = pi_dl_p;
      out.p.total(site, t) = cp + cp * r_dl_p + cq * x_dl_p + mu_dv_p +
                             nu_dl_p + pi_dl_p;
      out.p.solver_dual(site, t) = report.duals.lambda_p(site, t);

      out.q.energy(site, t) = cq;
      out.q.loss_real(site, t) = cp * r_dl_q;
      out.q.loss_reactive(site, t) = cq * x_dl_q;
      out.q.voltage(site, t) = mu_dv_q;
      out.q.ampacity(site, t) = nu_dl_q;
      out.q.transformer(site, t) = pi_dl_q;
      out.q.total(site, t) = cq + cp * r_dl_q + cq * x_dl_q + mu_dv_q +
                             nu_dl_q + pi_dl_q;
      out.q.solver_dual(site, t) = report.duals.lambda_q(site, t);
    }
  }
  return out;
}

ReconciliationReport reconcile(const DlmcBreakdown& breakdown, double tolerance) {
  ReconciliationReport rep;
  rep.tolerance = tolerance;
  const int nodes = static_cast<int>(breakdown.p.total.rows());
  const int T = breakdown.periods;
  rep.gap_p = Eigen::MatrixXd::Zero(nodes, T + 1);
  rep.gap_q = Eigen::MatrixXd::Zero(nodes, T + 1);

  double sum = 0.0;
  int count = 0;
  auto scan = [&](const DlmcSide& side, Eigen::MatrixXd& gaps, char kind) {
    for (int t = 1; t <= T; ++t)
      for (int j = 0; j < nodes; ++j) {
        const double dual = side.solver_dual(j, t);
        const double gap = std::abs(side.total(j, t) - dual) /
                           std::max(1.0, std::abs(dual));
        gaps(j, t) = gap;
        sum += gap;
        ++count;
        if (gap > tolerance) ++rep.flagged;
        if (gap > rep.max_rel_gap) {
          rep.max_rel_gap = gap;
          rep.worst_node = j;
          rep.worst_period = t;
          rep.worst_kind = kind;
        }
      }
  };
  scan(breakdown.p, rep.gap_p, 'P');
  scan(breakdown.q, rep.gap_q, 'Q');
  rep.mean_rel_gap = count > 0 ? sum / count : 0.0;
  return rep;
}

}  // namespace dfopf
