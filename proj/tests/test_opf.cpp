#include "dfopf/opf.hpp"

#include <cmath>

#include "dfopf/errors.hpp"
#include "dfopf/power_flow.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace dfopf;
using dfopf::testing::two_node_model;

namespace {

// Per-row max |coefficient| of a sparse matrix.
Eigen::VectorXd row_maxima(const Eigen::SparseMatrix<double>& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
  return out;
}

}  // namespace

TEST_CASE("horizon-end flag parses to the two supported modes") {
  CHECK(parse_horizon_end("cycle").mode == HorizonEnd::Cycle);
  CHECK(parse_horizon_end("extended").mode == HorizonEnd::Extended);
  CHECK(parse_horizon_end("extended").extension_periods == 12);
  CHECK(parse_horizon_end("extended:6").extension_periods == 6);
  CHECK(to_string(parse_horizon_end("extended:6")) == "extended:6");
  CHECK(to_string(parse_horizon_end("cycle")) == "cycle");
  CHECK_THROWS_AS(parse_horizon_end("bogus"), ValidationError);
  CHECK_THROWS_AS(parse_horizon_end("extended:zero"), ValidationError);
  CHECK_THROWS_AS(parse_horizon_end("extended:-3"), ValidationError);
}

TEST_CASE("extended horizon repeats the first morning's data") {
  FeederModel model = two_node_model(2);
  HorizonSpec spec;
  spec.mode = HorizonEnd::Extended;
  spec.extension_periods = 2;
  HorizonData data = build_horizon_data(model, spec);
  CHECK(data.periods == 2);
  CHECK(data.horizon_periods == 4);
  CHECK(data.cost_p[3] == data.cost_p[1]);
  CHECK(data.cost_p[4] == data.cost_p[2]);
  CHECK(data.demand_p(1, 3) == data.demand_p(1, 1));
  CHECK(data.demand_q(1, 4) == data.demand_q(1, 2));
  CHECK(data.root_v[3] == data.root_v[1]);
  CHECK(data.zeta[0].size() == 5);
  CHECK(data.zeta[0][3] == doctest::Approx(data.zeta[0][1]).epsilon(1e-14));

  HorizonSpec too_long;
  too_long.mode = HorizonEnd::Extended;
  too_long.extension_periods = 3;
  CHECK_THROWS_AS(build_horizon_data(model, too_long), ValidationError);
}

TEST_CASE("two-node instance matches the hand enumeration (cycle mode)") {
  FeederModel model = two_node_model(2);
  ProblemInstance inst = assemble(model);

  // Per period: v1, l, P, Q, P0, Q0, p1, q1, f, h  -> 10 variables;
  // two periods plus the free day-boundary top-oil state h_{y,0}.
  CHECK(inst.vars.count == 21);
  CHECK(inst.program.c.size() == 21);
  // Per period: sub_p, sub_q, bal_p, bal_q, volt, inj_p, inj_q, xf2 -> 8 rows;
  // two periods plus one cycle row.
  CHECK(inst.eq.count == 17);
  CHECK(inst.program.b.size() == 17);
  // Per period: v_up, v_lo, amp, 8 aging secants, f >= 0 -> 12 LP rows; plus
  // one 4-dimensional line cone per period.
  CHECK(inst.program.nonneg == 24);
  CHECK(inst.ineq.count == 32);
  REQUIRE(inst.program.soc_dims.size() == 2);
  CHECK(inst.program.soc_dims[0] == 4);
  CHECK(inst.program.soc_dims[1] == 4);

  // Cycle mode adds exactly one equality row and one variable per transformer.
  HorizonSpec ext;
  ext.mode = HorizonEnd::Extended;
  ext.extension_periods = 2;
  ProblemInstance inst_ext = assemble(model, ext);
  CHECK(inst_ext.vars.count == 40);  // 10 vars x 4 periods, h_0 fixed
  CHECK(inst_ext.eq.count == 32);    // 8 rows x 4 periods, no cycle row
  CHECK(inst_ext.ineq.count == 64);  // 12 LP + 4 cone rows per period
  CHECK(inst_ext.vars.h(0, 0) == -1);
  CHECK(inst_ext.eq.cycle[0] == -1);
}

TEST_CASE("assembled rows are normalized to unit max-coefficient") {
  FeederModel model = two_node_model(2);
  ProblemInstance inst = assemble(model);
  const Eigen::VectorXd a_max = row_maxima(inst.program.A);
  const Eigen::VectorXd g_max = row_maxima(inst.program.G);
  for (int i = 0; i < inst.eq.count; ++i)
    CHECK(a_max[i] == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < inst.program.nonneg; ++i)
    CHECK(g_max[i] == doctest::Approx(1.0).epsilon(1e-12));
  // Cone rows share one divisor per cone so the cone geometry is unchanged;
  // the largest coefficient in each block becomes 1.
  int row = inst.program.nonneg;
  for (int dim : inst.program.soc_dims) {
    double blk = 0.0;
    const double scale0 = inst.ineq_scale[row];
    for (int r = 0; r < dim; ++r) {
      CHECK(inst.ineq_scale[row + r] == scale0);
      blk = std::max(blk, g_max[row + r]);
    }
    CHECK(blk == doctest::Approx(1.0).epsilon(1e-12));
    row += dim;
  }
  // The divisors reproduce the unscaled physical rows: the top-oil recursion
  // row is dominated by the load coefficient epsilon ~ 9.17.
  const LinearizedCoeffs co = linearized_coefficients(
      model.transformers[0].params, build_piecewise_aging(default_aging_breakpoints()),
      model.grid.dt_hours);
  CHECK(inst.eq_scale[inst.eq.xf2(0, 1)] == doctest::Approx(co.epsilon).epsilon(1e-12));
}

TEST_CASE("PV idle all day contributes no variables, rows, or cones") {
  FeederModel model = two_node_model(2);
  const int base_vars = assemble(model).vars.count;
  const int base_rows = assemble(model).ineq.count;

  PvUnit pv;
  pv.id = "pv-dark";
  pv.node = 1;
  pv.capacity = 0.1;
  pv.insolation = Eigen::VectorXd::Zero(3);
  model.pvs = {pv};
  ProblemInstance inst = assemble(model);
  CHECK(inst.vars.count == base_vars);
  CHECK(inst.ineq.count == base_rows);
  CHECK(inst.program.soc_dims.size() == 2);
}

TEST_CASE("two-node solve agrees with the power-flow oracle") {
  FeederModel model = two_node_model(2);
  SolveReport report = solve(model);
  REQUIRE(report.status == SolveStatus::Optimal);
  CHECK(report.iterations > 0);
  CHECK(report.duality_gap <= 1e-7);

  // The relaxation must be tight here: compare with the exact power flow at
  // the same net demand.
  Eigen::MatrixXd net_p = Eigen::MatrixXd::Zero(2, 3), net_q = Eigen::MatrixXd::Zero(2, 3);
  aggregate_net_demand(2, model.grid, model.loads, model.pvs, model.evs,
                       report.der, net_p, net_q);
  PowerFlowResult pf = solve_power_flow(model.topology, model.grid, net_p,
                                        net_q, model.root_v);
  REQUIRE(pf.converged);
  for (int t = 1; t <= 2; ++t) {
    CHECK(report.op.v(1, t) == doctest::Approx(pf.op.v(1, t)).epsilon(1e-6));
    CHECK(report.op.l(0, t) == doctest::Approx(pf.op.l(0, t)).epsilon(1e-6));
    CHECK(report.op.P(0, t) == doctest::Approx(pf.op.P(0, t)).epsilon(1e-6));
    CHECK(report.op.Q(0, t) == doctest::Approx(pf.op.Q(0, t)).epsilon(1e-6));
    CHECK(report.op.P0[t] == doctest::Approx(pf.op.P0[t]).epsilon(1e-6));
  }
  CHECK(report.exactness.max_soc_gap <= 1e-8);

  // Cost split must reproduce the reported objective.
  const double sum = report.real_power_cost + report.reactive_power_cost +
                     report.transformer_cost;
  CHECK(sum == doctest::Approx(report.objective).epsilon(1e-8));

  // Root prices equal the substation marginal costs exactly (stationarity of
  // P0/Q0), and the load node pays more than the root for real power because
  // of marginal losses and transformer degradation.
  for (int t = 1; t <= 2; ++t) {
    CHECK(report.duals.lambda_p(0, t) ==
          doctest::Approx(model.costs.c_p[t]).epsilon(1e-7));
    CHECK(report.duals.lambda_q(0, t) ==
          doctest::Approx(model.costs.c_q[t]).epsilon(1e-7));
    CHECK(report.duals.lambda_p(1, t) > model.costs.c_p[t]);
  }

  // Inequality duals are nonnegative and complementary with their slacks.
  const ProblemInstance inst = assemble(model);
  for (int t = 1; t <= 2; ++t) {
    CHECK(report.duals.mu_up(1, t) >= -1e-9);
    CHECK(report.duals.mu_lo(1, t) >= -1e-9);
    CHECK(report.duals.nu(0, t) >= -1e-9);
    const double slack_up = model.topology.v_max[1] - report.op.v(1, t);
    const double slack_lo = report.op.v(1, t) - model.topology.v_min[1];
    const double slack_amp = model.topology.lines[0].l_max - report.op.l(0, t);
    CHECK(report.duals.mu_up(1, t) * slack_up <= 1e-8);
    CHECK(report.duals.mu_lo(1, t) * slack_lo <= 1e-8);
    CHECK(report.duals.nu(0, t) * slack_amp <= 1e-8);
    for (int k = 0; k < report.duals.xi[0].rows(); ++k)
      CHECK(report.duals.xi[0](k, t) >= -1e-9);
  }

  // Piecewise-aging stationarity: the xi duals sum to the degradation cost.
  CHECK(report.exactness.max_xi_sum_error <= 1e-6);
  CHECK(report.exactness.min_binding >= 1);
  CHECK(report.exactness.max_binding <= 2);
  CHECK(report.exactness.max_piecewise_gap <= 1e-8);

  // Cycle boundary: the day ends at the temperature it started from.
  CHECK(report.h_opt(0, 2) == doctest::Approx(report.h_opt(0, 0)).epsilon(1e-10));
}

TEST_CASE("zero demand prices the transformer's idle aging only") {
  FeederModel model = two_node_model(2);
  for (auto& load : model.loads) {
    load.p.setZero();
    load.q.setZero();
  }
  SolveReport report = solve(model);
  REQUIRE(report.status == SolveStatus::Optimal);

  // With nothing to serve, flows collapse and the periodic top-oil orbit sits
  // at the zero-load fixed point of the linearized recursion.
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const LinearizedCoeffs co = linearized_coefficients(
      model.transformers[0].params, pw, model.grid.dt_hours);
  const double h_star = co.zeta_at(25.0) / (1.0 - co.delta);
  const double f_star = pw.evaluate(h_star + co.hs_offset);

  CHECK(std::abs(report.op.P0[1]) <= 1e-7);
  CHECK(std::abs(report.op.l(0, 1)) <= 1e-7);
  for (int t = 0; t <= 2; ++t)
    CHECK(report.h_opt(0, t) == doctest::Approx(h_star).epsilon(1e-6));
  CHECK(report.f_opt(0, 1) == doctest::Approx(f_star).epsilon(1e-6));
  CHECK(report.transformer_cost ==
        doctest::Approx(2.0 * 100.0 * f_star).epsilon(1e-6));
  CHECK(report.objective == doctest::Approx(report.transformer_cost).epsilon(1e-6));
  CHECK(std::abs(report.real_power_cost) <= 1e-5);
  // Idle hot-spot sits inside the first secant segment: exactly one binds.
  CHECK(report.exactness.min_binding == 1);
  CHECK(report.exactness.max_binding == 1);
}

TEST_CASE("unreachable voltage floor reports infeasible") {
  FeederModel model = two_node_model(2);
  model.topology.v_min[1] = 1.21;  // v >= 1.1 while the root feeds 1.0
  model.topology.v_max[1] = 1.44;
  SolveReport report = solve(model);
  CHECK(report.status == SolveStatus::Infeasible);
  CHECK(report.solver_status == "primal-infeasible");
}

TEST_CASE("solves are deterministic bit for bit") {
  FeederModel model = two_node_model(2);
  SolveReport a = solve(model);
  SolveReport b = solve(model);
  REQUIRE(a.status == SolveStatus::Optimal);
  CHECK(a.objective == b.objective);
  CHECK(a.iterations == b.iterations);
  CHECK((a.duals.lambda_p - b.duals.lambda_p).norm() == 0.0);
  CHECK((a.op.v - b.op.v).norm() == 0.0);
}

namespace {

PvUnit sample_pv() {
  PvUnit pv;
  pv.id = "pv1";
  pv.node = 1;
  pv.capacity = 0.1;
  pv.insolation = Eigen::VectorXd::Zero(3);
  pv.insolation << 0.0, 1.0, 0.5;
  return pv;
}

EvItinerary sample_ev() {
  EvItinerary ev;
  ev.id = "ev1";
  ev.battery_capacity = 0.5;
  ev.charger_rating = 0.6;
  ev.charge_rate_max = 0.5;
  ev.soc_init = 0.1;
  EvInterval iv;
  iv.node = 1;
  iv.begin = 0;
  iv.end = 2;
  iv.soc_min = 0.4;
  iv.depletion = 0.0;
  ev.intervals = {iv};
  return ev;
}

}  // namespace

TEST_CASE("PV inverter rides its cone when reactive power has value") {
  FeederModel model = two_node_model(2);
  model.pvs = {sample_pv()};
  SolveReport report = solve(model);
  REQUIRE(report.status == SolveStatus::Optimal);

  for (int t = 1; t <= 2; ++t) {
    const double p = report.der.pv_p(0, t), q = report.der.pv_q(0, t);
    CHECK(p <= 0.1 * model.pvs[0].insolation[t] + 1e-8);
    CHECK(q > 0.0);
    // Reactive support is worth money at the load node, so the apparent-power
    // cone is exhausted.
    CHECK(p * p + q * q == doctest::Approx(0.1 * 0.1).epsilon(1e-6));
  }
  // Full insolation: the optimum trades a sliver of real power for reactive
  // (the cap and the cone touch at q = 0, which cannot be optimal).
  CHECK(report.der.pv_p(0, 1) > 0.095);
  CHECK(report.der.pv_p(0, 1) < 0.1 - 1e-6);
  // Half insolation: the real cap binds and reactive fills the cone.
  CHECK(report.der.pv_p(0, 2) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(report.der.pv_q(0, 2) ==
        doctest::Approx(std::sqrt(0.01 - 0.0025)).epsilon(1e-5));
}

TEST_CASE("EV charging arbitrages prices and meets its SoC floor") {
  FeederModel model = two_node_model(2);
  model.evs = {sample_ev()};
  SolveReport report = solve(model);
  REQUIRE(report.status == SolveStatus::Optimal);

  // Initial fix, energy balance, and the end-of-interval SoC floor (binding:
  // charging is costly, so no more than required is bought).
  CHECK(report.der.ev_u(0, 0) == doctest::Approx(0.1).epsilon(1e-8));
  const double charged = report.der.ev_p(0, 1) + report.der.ev_p(0, 2);
  CHECK(report.der.ev_u(0, 2) ==
        doctest::Approx(0.1 + model.grid.dt_hours * charged).epsilon(1e-7));
  CHECK(report.der.ev_u(0, 2) == doctest::Approx(0.4).epsilon(1e-6));
  // Real power is cheaper in period 2, so more charge lands there...
  CHECK(report.der.ev_p(0, 2) > report.der.ev_p(0, 1));
  // ...and with the charger interior in both periods, its intertemporal
  // arbitrage equalizes the nodal real price across the day.
  CHECK(report.duals.lambda_p(1, 1) ==
        doctest::Approx(report.duals.lambda_p(1, 2)).epsilon(1e-6));
  // The charger's idle reactive headroom is free, so it pins the local
  // reactive price at zero and injects reactive power toward the grid.
  CHECK(std::abs(report.duals.lambda_q(1, 1)) <= 1e-6);
  CHECK(report.der.ev_q(0, 1) < 0.0);
}

TEST_CASE("combined PV and EV bookkeeping survives a power-flow cross-check") {
  FeederModel model = two_node_model(2);
  model.pvs = {sample_pv()};
  model.evs = {sample_ev()};
  SolveReport report = solve(model);
  REQUIRE(report.status == SolveStatus::Optimal);
  CHECK(report.exactness.max_soc_gap <= 1e-8);

  // Nodal injection bookkeeping: consumption = demand - PV + EV charging.
  for (int t = 1; t <= 2; ++t) {
    CHECK(report.op.p(1, t) ==
          doctest::Approx(model.loads[0].p[t] - report.der.pv_p(0, t) +
                          report.der.ev_p(0, t))
              .epsilon(1e-7));
    CHECK(report.op.q(1, t) ==
          doctest::Approx(model.loads[0].q[t] - report.der.pv_q(0, t) +
                          report.der.ev_q(0, t))
              .epsilon(1e-7));
  }

  // Cross-check the whole operating point against the exact power flow.
  Eigen::MatrixXd net_p = Eigen::MatrixXd::Zero(2, 3), net_q = Eigen::MatrixXd::Zero(2, 3);
  aggregate_net_demand(2, model.grid, model.loads, model.pvs, model.evs,
                       report.der, net_p, net_q);
  PowerFlowResult pf = solve_power_flow(model.topology, model.grid, net_p,
                                        net_q, model.root_v);
  REQUIRE(pf.converged);
  for (int t = 1; t <= 2; ++t) {
    CHECK(report.op.v(1, t) == doctest::Approx(pf.op.v(1, t)).epsilon(1e-6));
    CHECK(report.op.l(0, t) == doctest::Approx(pf.op.l(0, t)).epsilon(1e-6));
    CHECK(report.op.P0[t] == doctest::Approx(pf.op.P0[t]).epsilon(1e-6));
  }
}
