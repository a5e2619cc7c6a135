#include "dfopf/opf.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "dfopf/errors.hpp"

namespace dfopf {

namespace {

Eigen::VectorXd extend_series(const Eigen::VectorXd& base, int T, int H) {
  Eigen::VectorXd out(H + 1);
  out.head(T + 1) = base;
  for (int t = T + 1; t <= H; ++t) out[t] = base[t - T];
  return out;
}

SolveStatus map_status(SolverStatus status) {
  switch (status) {
    case SolverStatus::Optimal: return SolveStatus::Optimal;
    case SolverStatus::OptimalInaccurate: return SolveStatus::Optimal;
    case SolverStatus::PrimalInfeasible: return SolveStatus::Infeasible;
    default: return SolveStatus::NumericalFailure;
  }
}

}  // namespace

SolveReport solve(const ProblemInstance& inst, const FeederModel& model,
                  const SolveOptions& options) {
  const FeederTopology& topo = model.topology;
  const int N = topo.line_count();
  const int nodes = N + 1;
  const int T = inst.data.periods;
  const int H = inst.data.horizon_periods;
  const int Y = static_cast<int>(model.transformers.size());
  const double dt = model.grid.dt_hours;
  const VariableMap& vm = inst.vars;
  const RowMap& rm = inst.eq;
  const ConeRowMap& cm = inst.ineq;

  auto backend = make_backend(options.backend);
  const ConeSolution sol = backend->solve(inst.program, options.solver);

  SolveReport report;
  report.horizon = inst.horizon;
  report.periods = T;
  report.horizon_periods = H;
  report.status = map_status(sol.status);
  report.solver_status = to_string(sol.status);
  report.iterations = sol.iterations;
  report.duality_gap = sol.gap;
  report.primal_residual = sol.primal_residual;
  report.dual_residual = sol.dual_residual;
  if (report.status != SolveStatus::Optimal) return report;

  report.objective = sol.primal_objective;

  // ---- primal extraction -------------------------------------------------
  OperatingPoint& op = report.op;
  op.v = Eigen::MatrixXd::Zero(nodes, H + 1);
  op.l = Eigen::MatrixXd::Zero(N, H + 1);
  op.P = Eigen::MatrixXd::Zero(N, H + 1);
  op.Q = Eigen::MatrixXd::Zero(N, H + 1);
  op.P0 = Eigen::VectorXd::Zero(H + 1);
  op.Q0 = Eigen::VectorXd::Zero(H + 1);
  op.p = Eigen::MatrixXd::Zero(nodes, H + 1);
  op.q = Eigen::MatrixXd::Zero(nodes, H + 1);
  op.v(0, 0) = inst.data.root_v[0];
  for (int t = 1; t <= H; ++t) {
    op.v(0, t) = inst.data.root_v[t];
    for (int j = 1; j <= N; ++j) {
      op.v(j, t) = sol.x[vm.v(j, t)];
      op.p(j, t) = sol.x[vm.p(j, t)];
      op.q(j, t) = sol.x[vm.q(j, t)];
    }
    for (int j = 0; j < N; ++j) {
      op.l(j, t) = sol.x[vm.l(j, t)];
      op.P(j, t) = sol.x[vm.P(j, t)];
      op.Q(j, t) = sol.x[vm.Q(j, t)];
    }
    op.P0[t] = sol.x[vm.P0[t]];
    op.Q0[t] = sol.x[vm.Q0[t]];
  }

  DerSchedules& der = report.der;
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  der.pv_p = Eigen::MatrixXd::Zero(static_cast<int>(model.pvs.size()), H + 1);
  der.pv_q = Eigen::MatrixXd::Zero(static_cast<int>(model.pvs.size()), H + 1);
  der.ev_p = Eigen::MatrixXd::Zero(static_cast<int>(model.evs.size()), H + 1);
  der.ev_q = Eigen::MatrixXd::Zero(static_cast<int>(model.evs.size()), H + 1);
  der.ev_u = Eigen::MatrixXd::Constant(static_cast<int>(model.evs.size()), H + 1, nan);
  for (size_t s = 0; s < model.pvs.size(); ++s)
    for (int t : inst.data.pv[s].active_periods) {
      der.pv_p(static_cast<int>(s), t) = sol.x[vm.pv_p[s][t]];
      der.pv_q(static_cast<int>(s), t) = sol.x[vm.pv_q[s][t]];
    }
  for (size_t e = 0; e < model.evs.size(); ++e) {
    for (int t : inst.data.ev[e].charge_periods) {
      der.ev_p(static_cast<int>(e), t) = sol.x[vm.ev_p[e][t]];
      der.ev_q(static_cast<int>(e), t) = sol.x[vm.ev_q[e][t]];
    }
    for (int t : inst.data.ev[e].soc_periods)
      der.ev_u(static_cast<int>(e), t) = sol.x[vm.ev_u[e][t]];
  }

  report.f_opt = Eigen::MatrixXd::Zero(Y, H + 1);
  report.h_opt = Eigen::MatrixXd::Zero(Y, H + 1);
  const bool cycle = inst.horizon.mode == HorizonEnd::Cycle;
  for (int y = 0; y < Y; ++y) {
    report.h_opt(y, 0) = cycle ? sol.x[vm.h(y, 0)] : inst.data.h0[y];
    for (int t = 1; t <= H; ++t) {
      report.f_opt(y, t) = sol.x[vm.f(y, t)];
      report.h_opt(y, t) = sol.x[vm.h(y, t)];
    }
  }

  // Exact thermal response to the optimized loading (diagnostic, not part of
  // the conic model).
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  for (int y = 0; y < Y; ++y) {
    ThermalParams tp = model.transformers[y].params;
    tp.ambient = extend_series(tp.ambient, T, H);
    tp.theta_to_init = report.h_opt(y, 0);
    TimeGrid horizon_grid = model.grid;
    horizon_grid.periods = H;
    const int line = topo.transformer_lines[y];
    Eigen::VectorXd load_sq = Eigen::VectorXd::Zero(H + 1);
    for (int t = 1; t <= H; ++t) load_sq[t] = op.l(line, t);
    report.thermal.push_back(simulate_thermal(tp, pw, horizon_grid, load_sq));
  }

  // ---- cost split ---------------------------------------------------------
  for (int t = 1; t <= H; ++t) {
    report.real_power_cost += dt * inst.data.cost_p[t] * op.P0[t];
    report.reactive_power_cost += dt * inst.data.cost_q[t] * op.Q0[t];
    for (int y = 0; y < Y; ++y)
      report.transformer_cost += dt * model.costs.c_xfmr[y] * report.f_opt(y, t);
  }

  // ---- dual extraction ----------------------------------------------------
  // Row normalization divided each row i by eq_scale[i], so the dual of the
  // original row is y[i] / eq_scale[i]; the objective carries dt, so prices
  // per unit power and hour divide by dt once more. Sign convention: for
  // min c'x with L = c'x + y'(Ax - b), the marginal cost of raising b_i is
  // -y_i.
  DualSolution& du = report.duals;
  du.lambda_p = Eigen::MatrixXd::Zero(nodes, H + 1);
  du.lambda_q = Eigen::MatrixXd::Zero(nodes, H + 1);
  du.mu_up = Eigen::MatrixXd::Zero(nodes, H + 1);
  du.mu_lo = Eigen::MatrixXd::Zero(nodes, H + 1);
  du.nu = Eigen::MatrixXd::Zero(N, H + 1);
  du.rho = Eigen::VectorXd::Zero(Y);
  for (int y = 0; y < Y; ++y) {
    const int M = static_cast<int>(inst.data.coeffs[y].alpha.size());
    du.xi.push_back(Eigen::MatrixXd::Zero(M, H + 1));
  }
  auto eq_dual = [&](int row) { return sol.y[row] / inst.eq_scale[row]; };
  auto in_dual = [&](int row) { return sol.z[row] / inst.ineq_scale[row]; };
  for (int t = 1; t <= H; ++t) {
    du.lambda_p(0, t) = -eq_dual(rm.sub_p[t]) / dt;
    du.lambda_q(0, t) = -eq_dual(rm.sub_q[t]) / dt;
    for (int j = 1; j <= N; ++j) {
      du.lambda_p(j, t) = -eq_dual(rm.bal_p(j, t)) / dt;
      du.lambda_q(j, t) = -eq_dual(rm.bal_q(j, t)) / dt;
      du.mu_up(j, t) = in_dual(cm.v_up(j, t)) / dt;
      du.mu_lo(j, t) = in_dual(cm.v_lo(j, t)) / dt;
    }
    for (int j = 0; j < N; ++j) du.nu(j, t) = in_dual(cm.amp(j, t)) / dt;
    for (int y = 0; y < Y; ++y)
      for (int k = 0; k < du.xi[y].rows(); ++k)
        du.xi[y](k, t) = in_dual(cm.xf1[y](k, t)) / dt;
  }
  if (inst.horizon.mode == HorizonEnd::Cycle)
    for (int y = 0; y < Y; ++y) du.rho[y] = eq_dual(rm.cycle[y]) / dt;

  report.exactness = exactness_report(report, model);
  return report;
}

SolveReport solve(const FeederModel& model, const HorizonSpec& spec,
                  const SolveOptions& options) {
  return solve(assemble(model, spec), model, options);
}

ExactnessReport exactness_report(const SolveReport& report, const FeederModel& model) {
  ExactnessReport ex;
  if (report.status != SolveStatus::Optimal) return ex;
  const FeederTopology& topo = model.topology;
  const int N = topo.line_count();
  const int H = report.horizon_periods;
  const int Y = static_cast<int>(model.transformers.size());
  const OperatingPoint& op = report.op;

  for (int t = 1; t <= H; ++t)
    for (int j = 1; j <= N; ++j) {
      const Line& line = topo.line_into(j);
      const int lj = j - 1;
      const double vi = op.v(line.parent, t);
      const double gap = vi * op.l(lj, t) -
                         (op.P(lj, t) * op.P(lj, t) + op.Q(lj, t) * op.Q(lj, t));
      ex.max_soc_gap = std::max(ex.max_soc_gap, std::abs(gap));
    }

  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  ex.binding_count = Eigen::MatrixXi::Zero(Y, H + 1);
  constexpr double kBindingTol = 1e-6;
  int min_binding = std::numeric_limits<int>::max(), max_binding = 0;
  for (int y = 0; y < Y; ++y) {
    const LinearizedCoeffs co = linearized_coefficients(
        model.transformers[y].params, pw, model.grid.dt_hours);
    const int line = topo.transformer_lines[y];
    const double c_y = model.costs.c_xfmr[y];
    for (int t = 1; t <= H; ++t) {
      double envelope = -std::numeric_limits<double>::infinity();
      int binding = 0;
      for (int k = 0; k < co.alpha.size(); ++k) {
        const double seg = co.alpha[k] * report.h_opt(y, t) +
                           co.beta[k] * op.l(line, t) + co.gamma[k];
        envelope = std::max(envelope, seg);
      }
      for (int k = 0; k < co.alpha.size(); ++k) {
        const double seg = co.alpha[k] * report.h_opt(y, t) +
                           co.beta[k] * op.l(line, t) + co.gamma[k];
        if (report.f_opt(y, t) - seg <= kBindingTol) ++binding;
      }
      ex.binding_count(y, t) = binding;
      min_binding = std::min(min_binding, binding);
      max_binding = std::max(max_binding, binding);
      ex.max_piecewise_gap =
          std::max(ex.max_piecewise_gap, std::abs(report.f_opt(y, t) - envelope));
      const double xi_sum = report.duals.xi[y].col(t).sum();
      ex.max_xi_sum_error = std::max(ex.max_xi_sum_error, std::abs(xi_sum - c_y));
    }
  }
  if (Y > 0 && H > 0) {
    ex.min_binding = min_binding;
    ex.max_binding = max_binding;
  }
  return ex;
}

}  // namespace dfopf
