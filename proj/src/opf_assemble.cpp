#include "dfopf/opf.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dfopf/errors.hpp"

namespace dfopf {

HorizonSpec parse_horizon_end(const std::string& text) {
  HorizonSpec spec;
  if (text == "cycle") {
    spec.mode = HorizonEnd::Cycle;
    return spec;
  }
  if (text == "extended") {
    spec.mode = HorizonEnd::Extended;
    return spec;
  }
  const std::string prefix = "extended:";
  if (text.rfind(prefix, 0) == 0) {
    spec.mode = HorizonEnd::Extended;
    try {
      spec.extension_periods = std::stoi(text.substr(prefix.size()));
    } catch (const std::exception&) {
      throw ValidationError("horizon-end: cannot parse extension length in '" + text + "'");
    }
    if (spec.extension_periods <= 0)
      throw ValidationError("horizon-end: extension length must be positive");
    return spec;
  }
  throw ValidationError("horizon-end must be 'cycle' or 'extended[:E]', got '" + text + "'");
}

std::string to_string(const HorizonSpec& spec) {
  if (spec.mode == HorizonEnd::Cycle) return "cycle";
  return "extended:" + std::to_string(spec.extension_periods);
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

namespace {

// Extend a T+1 series to H+1 by copying the first H-T periods ("the next
// morning repeats the start of the day").
Eigen::VectorXd extend_series(const Eigen::VectorXd& base, int T, int H) {
  Eigen::VectorXd out(H + 1);
  out.head(T + 1) = base;
  for (int t = T + 1; t <= H; ++t) out[t] = base[t - T];
  return out;
}

}  // namespace

HorizonData build_horizon_data(const FeederModel& model, const HorizonSpec& spec) {
  const int T = model.grid.periods;
  const int H = spec.optimized_periods(T);
  if (spec.mode == HorizonEnd::Extended && spec.extension_periods > T)
    throw ValidationError("extended horizon may not exceed one extra day (E <= T)");

  HorizonData data;
  data.periods = T;
  data.horizon_periods = H;
  data.cost_p = extend_series(model.costs.c_p, T, H);
  data.cost_q = extend_series(model.costs.c_q, T, H);
  data.root_v = extend_series(model.root_v, T, H);

  const int nodes = model.topology.node_count();
  data.demand_p = Eigen::MatrixXd::Zero(nodes, H + 1);
  data.demand_q = Eigen::MatrixXd::Zero(nodes, H + 1);
  for (const LoadProfile& load : model.loads) {
    data.demand_p.row(load.node) += extend_series(load.p, T, H).transpose();
    data.demand_q.row(load.node) += extend_series(load.q, T, H).transpose();
  }

  TimeGrid horizon_grid = model.grid;
  horizon_grid.periods = H;
  for (const PvUnit& pv : model.pvs) {
    if (pv.node <= 0)
      throw ValidationError("PV unit '" + pv.id + "' must sit on a non-root node");
    PvUnit extended = pv;
    extended.insolation = extend_series(pv.insolation, T, H);
    data.pv.push_back(build_pv_constraints(extended, horizon_grid));
  }
  for (const EvItinerary& ev : model.evs) {
    for (const EvInterval& iv : ev.intervals)
      if (iv.node <= 0)
        throw ValidationError("EV '" + ev.id + "' must connect at non-root nodes");
    data.ev.push_back(build_ev_constraints(ev, model.grid));
  }

  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const int Y = static_cast<int>(model.transformers.size());
  data.h0.resize(Y);
  for (int y = 0; y < Y; ++y) {
    const ThermalParams& tp = model.transformers[y].params;
    data.coeffs.push_back(linearized_coefficients(tp, pw, model.grid.dt_hours));
    const Eigen::VectorXd ambient = extend_series(tp.ambient, T, H);
    Eigen::VectorXd zeta(H + 1);
    zeta[0] = 0.0;
    for (int t = 1; t <= H; ++t) zeta[t] = data.coeffs[y].zeta_at(ambient[t]);
    data.zeta.push_back(std::move(zeta));
    // Day-ahead runs do not know the schedule yet, so the documented
    // fallback chain ends at the zero-load steady state.
    data.h0[y] = initial_top_oil(tp, 0.0);
  }
  return data;
}

ProblemInstance assemble(const FeederModel& model, const HorizonSpec& spec) {
  const FeederTopology& topo = model.topology;
  const int N = topo.line_count();
  const int nodes = N + 1;
  const int T = model.grid.periods;
  const int Y = static_cast<int>(model.transformers.size());
  const double dt = model.grid.dt_hours;

  ProblemInstance inst;
  inst.horizon = spec;
  inst.data = build_horizon_data(model, spec);
  const HorizonData& data = inst.data;
  const int H = data.horizon_periods;
  const bool cycle = spec.mode == HorizonEnd::Cycle;

  // Active-period masks for the ragged DER variable tails.
  std::vector<std::vector<char>> pv_active(model.pvs.size()),
      ev_charging(model.evs.size());
  for (size_t s = 0; s < model.pvs.size(); ++s) {
    pv_active[s].assign(H + 1, 0);
    for (int t : data.pv[s].active_periods) pv_active[s][t] = 1;
  }
  for (size_t e = 0; e < model.evs.size(); ++e) {
    ev_charging[e].assign(H + 1, 0);
    for (int t : data.ev[e].charge_periods) ev_charging[e][t] = 1;
  }

  // ---- pass 1: allocate variable indices (period-major, stable order) ----
  VariableMap& vm = inst.vars;
  auto filled = [&](int rows, int cols) { return Eigen::MatrixXi::Constant(rows, cols, -1); };
  vm.v = filled(nodes, H + 1);
  vm.l = filled(N, H + 1);
  vm.P = filled(N, H + 1);
  vm.Q = filled(N, H + 1);
  vm.p = filled(nodes, H + 1);
  vm.q = filled(nodes, H + 1);
  vm.P0 = Eigen::VectorXi::Constant(H + 1, -1);
  vm.Q0 = Eigen::VectorXi::Constant(H + 1, -1);
  vm.f = filled(Y, H + 1);
  vm.h = filled(Y, H + 1);
  vm.pv_p.assign(model.pvs.size(), Eigen::VectorXi::Constant(H + 1, -1));
  vm.pv_q.assign(model.pvs.size(), Eigen::VectorXi::Constant(H + 1, -1));
  vm.ev_p.assign(model.evs.size(), Eigen::VectorXi::Constant(H + 1, -1));
  vm.ev_q.assign(model.evs.size(), Eigen::VectorXi::Constant(H + 1, -1));
  vm.ev_u.assign(model.evs.size(), Eigen::VectorXi::Constant(H + 1, -1));

  int nv = 0;
  for (int t = 1; t <= H; ++t) {
    for (int j = 1; j <= N; ++j) vm.v(j, t) = nv++;
    for (int j = 0; j < N; ++j) vm.l(j, t) = nv++;
    for (int j = 0; j < N; ++j) vm.P(j, t) = nv++;
    for (int j = 0; j < N; ++j) vm.Q(j, t) = nv++;
    vm.P0[t] = nv++;
    vm.Q0[t] = nv++;
    for (int j = 1; j <= N; ++j) vm.p(j, t) = nv++;
    for (int j = 1; j <= N; ++j) vm.q(j, t) = nv++;
    for (int y = 0; y < Y; ++y) {
      vm.f(y, t) = nv++;
      vm.h(y, t) = nv++;
    }
    for (size_t s = 0; s < model.pvs.size(); ++s)
      if (pv_active[s][t]) {
        vm.pv_p[s][t] = nv++;
        vm.pv_q[s][t] = nv++;
      }
    for (size_t e = 0; e < model.evs.size(); ++e)
      if (t <= T && ev_charging[e][t]) {
        vm.ev_p[e][t] = nv++;
        vm.ev_q[e][t] = nv++;
      }
  }
  // In cycle mode the day-boundary top-oil temperature is itself a decision
  // variable: the cycle row ties it to h_T, so the periodic orbit (not a
  // measured initial condition) sets where the day starts thermally.
  if (cycle)
    for (int y = 0; y < Y; ++y) vm.h(y, 0) = nv++;
  // EV state of charge lives at interval boundaries (these may include t = 0;
  // the value there is pinned by an explicit equality so the dual is visible).
  for (size_t e = 0; e < model.evs.size(); ++e)
    for (int t : data.ev[e].soc_periods) vm.ev_u[e][t] = nv++;
  vm.count = nv;

  // ---- pass 2: equality rows -------------------------------------------
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> at;
  std::vector<double> bval;
  RowMap& rm = inst.eq;
  rm.sub_p = Eigen::VectorXi::Constant(H + 1, -1);
  rm.sub_q = Eigen::VectorXi::Constant(H + 1, -1);
  rm.bal_p = filled(nodes, H + 1);
  rm.bal_q = filled(nodes, H + 1);
  rm.volt = filled(nodes, H + 1);
  rm.inj_p = filled(nodes, H + 1);
  rm.inj_q = filled(nodes, H + 1);
  rm.xf2 = filled(Y, H + 1);
  rm.cycle = Eigen::VectorXi::Constant(Y, -1);

  auto eq_row = [&](double rhs) {
    bval.push_back(rhs);
    return static_cast<int>(bval.size()) - 1;
  };

  for (int t = 1; t <= H; ++t) {
    rm.sub_p[t] = eq_row(0.0);
    at.emplace_back(rm.sub_p[t], vm.P0[t], 1.0);
    for (int k : topo.children[0]) at.emplace_back(rm.sub_p[t], vm.P(k - 1, t), -1.0);
    rm.sub_q[t] = eq_row(0.0);
    at.emplace_back(rm.sub_q[t], vm.Q0[t], 1.0);
    for (int k : topo.children[0]) at.emplace_back(rm.sub_q[t], vm.Q(k - 1, t), -1.0);

    for (int j = 1; j <= N; ++j) {
      const Line& line = topo.line_into(j);
      const int lj = j - 1;
      rm.bal_p(j, t) = eq_row(0.0);
      at.emplace_back(rm.bal_p(j, t), vm.P(lj, t), 1.0);
      at.emplace_back(rm.bal_p(j, t), vm.l(lj, t), -line.r);
      at.emplace_back(rm.bal_p(j, t), vm.p(j, t), -1.0);
      for (int k : topo.children[j]) at.emplace_back(rm.bal_p(j, t), vm.P(k - 1, t), -1.0);

      rm.bal_q(j, t) = eq_row(0.0);
      at.emplace_back(rm.bal_q(j, t), vm.Q(lj, t), 1.0);
      at.emplace_back(rm.bal_q(j, t), vm.l(lj, t), -line.x);
      at.emplace_back(rm.bal_q(j, t), vm.q(j, t), -1.0);
      for (int k : topo.children[j]) at.emplace_back(rm.bal_q(j, t), vm.Q(k - 1, t), -1.0);

      const double z2 = line.r * line.r + line.x * line.x;
      const bool root_parent = line.parent == 0;
      rm.volt(j, t) = eq_row(root_parent ? data.root_v[t] : 0.0);
      at.emplace_back(rm.volt(j, t), vm.v(j, t), 1.0);
      if (!root_parent) at.emplace_back(rm.volt(j, t), vm.v(line.parent, t), -1.0);
      at.emplace_back(rm.volt(j, t), vm.P(lj, t), 2.0 * line.r);
      at.emplace_back(rm.volt(j, t), vm.Q(lj, t), 2.0 * line.x);
      at.emplace_back(rm.volt(j, t), vm.l(lj, t), -z2);

      rm.inj_p(j, t) = eq_row(data.demand_p(j, t));
      at.emplace_back(rm.inj_p(j, t), vm.p(j, t), 1.0);
      rm.inj_q(j, t) = eq_row(data.demand_q(j, t));
      at.emplace_back(rm.inj_q(j, t), vm.q(j, t), 1.0);
    }

    for (int y = 0; y < Y; ++y) {
      const LinearizedCoeffs& co = data.coeffs[y];
      const int line = topo.transformer_lines[y];
      const bool h_prev_is_var = t >= 2 || cycle;
      rm.xf2(y, t) = eq_row(data.zeta[y][t] +
                            (h_prev_is_var ? 0.0 : co.delta * data.h0[y]));
      at.emplace_back(rm.xf2(y, t), vm.h(y, t), 1.0);
      if (h_prev_is_var) at.emplace_back(rm.xf2(y, t), vm.h(y, t - 1), -co.delta);
      at.emplace_back(rm.xf2(y, t), vm.l(line, t), -co.epsilon);
    }
  }

  // DER coupling into the nodal injection rows.
  for (size_t s = 0; s < model.pvs.size(); ++s) {
    const int node = model.pvs[s].node;
    for (int t : data.pv[s].active_periods) {
      at.emplace_back(rm.inj_p(node, t), vm.pv_p[s][t], 1.0);
      at.emplace_back(rm.inj_q(node, t), vm.pv_q[s][t], 1.0);
    }
  }
  for (size_t e = 0; e < model.evs.size(); ++e) {
    const EvItinerary& ev = model.evs[e];
    for (int t : data.ev[e].charge_periods) {
      const int node = ev.intervals[ev.interval_at(t)].node;
      at.emplace_back(rm.inj_p(node, t), vm.ev_p[e][t], -1.0);
      at.emplace_back(rm.inj_q(node, t), vm.ev_q[e][t], -1.0);
    }
  }

  if (cycle)
    for (int y = 0; y < Y; ++y) {
      rm.cycle[y] = eq_row(0.0);
      at.emplace_back(rm.cycle[y], vm.h(y, H), 1.0);
      at.emplace_back(rm.cycle[y], vm.h(y, 0), -1.0);
    }

  for (size_t e = 0; e < model.evs.size(); ++e) {
    const EvConstraintSet& cs = data.ev[e];
    for (const auto& fix : cs.fixes) {
      const int row = eq_row(fix.value);
      at.emplace_back(row, vm.ev_u[e][fix.t], 1.0);
    }
    for (const auto& bal : cs.balances) {
      const int row = eq_row(0.0);
      at.emplace_back(row, vm.ev_u[e][bal.t_end], 1.0);
      at.emplace_back(row, vm.ev_u[e][bal.t_beg], -1.0);
      for (int t : bal.charge_periods) at.emplace_back(row, vm.ev_p[e][t], -dt);
    }
    for (const auto& dep : cs.depletions) {
      const int row = eq_row(-dep.delta);
      at.emplace_back(row, vm.ev_u[e][dep.t_to], 1.0);
      at.emplace_back(row, vm.ev_u[e][dep.t_from], -1.0);
    }
  }
  rm.count = static_cast<int>(bval.size());

  // ---- pass 3: inequality rows (full LP block first, then the cones) ----
  std::vector<Triplet> gt;
  std::vector<double> hval;
  ConeRowMap& cm = inst.ineq;
  cm.v_up = filled(nodes, H + 1);
  cm.v_lo = filled(nodes, H + 1);
  cm.amp = filled(N, H + 1);
  cm.xf1.assign(Y, Eigen::MatrixXi());
  for (int y = 0; y < Y; ++y)
    cm.xf1[y] = filled(static_cast<int>(data.coeffs[y].alpha.size()), H + 1);
  cm.f_pos = filled(Y, H + 1);
  cm.line_cone = filled(N, H + 1);

  auto lp_row = [&](double rhs) {
    hval.push_back(rhs);
    return static_cast<int>(hval.size()) - 1;
  };

  for (int t = 1; t <= H; ++t) {
    for (int j = 1; j <= N; ++j) {
      cm.v_up(j, t) = lp_row(topo.v_max[j]);
      gt.emplace_back(cm.v_up(j, t), vm.v(j, t), 1.0);
      cm.v_lo(j, t) = lp_row(-topo.v_min[j]);
      gt.emplace_back(cm.v_lo(j, t), vm.v(j, t), -1.0);
    }
    for (int j = 0; j < N; ++j) {
      cm.amp(j, t) = lp_row(topo.lines[j].l_max);
      gt.emplace_back(cm.amp(j, t), vm.l(j, t), 1.0);
    }
    for (int y = 0; y < Y; ++y) {
      const LinearizedCoeffs& co = data.coeffs[y];
      const int line = topo.transformer_lines[y];
      for (int k = 0; k < co.alpha.size(); ++k) {
        cm.xf1[y](k, t) = lp_row(-co.gamma[k]);
        gt.emplace_back(cm.xf1[y](k, t), vm.h(y, t), co.alpha[k]);
        gt.emplace_back(cm.xf1[y](k, t), vm.l(line, t), co.beta[k]);
        gt.emplace_back(cm.xf1[y](k, t), vm.f(y, t), -1.0);
      }
      cm.f_pos(y, t) = lp_row(0.0);
      gt.emplace_back(cm.f_pos(y, t), vm.f(y, t), -1.0);
    }
    for (size_t s = 0; s < model.pvs.size(); ++s)
      if (pv_active[s][t]) {
        double p_max = 0.0;
        for (const auto& cap : data.pv[s].real_caps)
          if (cap.t == t) p_max = cap.p_max;
        gt.emplace_back(lp_row(p_max), vm.pv_p[s][t], 1.0);
        gt.emplace_back(lp_row(0.0), vm.pv_p[s][t], -1.0);
      }
    for (size_t e = 0; e < model.evs.size(); ++e)
      if (t <= T && ev_charging[e][t]) {
        double rate = 0.0;
        for (const auto& ch : data.ev[e].charger)
          if (ch.t == t) rate = ch.rate_max;
        gt.emplace_back(lp_row(rate), vm.ev_p[e][t], 1.0);
        gt.emplace_back(lp_row(0.0), vm.ev_p[e][t], -1.0);
      }
  }
  for (size_t e = 0; e < model.evs.size(); ++e)
    for (const auto& bound : data.ev[e].bounds) {
      gt.emplace_back(lp_row(bound.u_max), vm.ev_u[e][bound.t], 1.0);
      gt.emplace_back(lp_row(-bound.u_min), vm.ev_u[e][bound.t], -1.0);
    }
  const int nonneg_rows = static_cast<int>(hval.size());

  // Cone blocks: s = h - G x must land in each second-order cone.
  std::vector<int> soc_dims;
  for (int t = 1; t <= H; ++t) {
    for (int j = 1; j <= N; ++j) {
      const Line& line = topo.line_into(j);
      const int lj = j - 1;
      const bool root_parent = line.parent == 0;
      const double v_const = root_parent ? data.root_v[t] : 0.0;
      const int base = lp_row(v_const);  // s0 = v_parent + l
      cm.line_cone(lj, t) = base;
      if (!root_parent) gt.emplace_back(base, vm.v(line.parent, t), -1.0);
      gt.emplace_back(base, vm.l(lj, t), -1.0);
      gt.emplace_back(lp_row(0.0), vm.P(lj, t), -2.0);  // s1 = 2P
      gt.emplace_back(lp_row(0.0), vm.Q(lj, t), -2.0);  // s2 = 2Q
      const int last = lp_row(v_const);                 // s3 = v_parent - l
      if (!root_parent) gt.emplace_back(last, vm.v(line.parent, t), -1.0);
      gt.emplace_back(last, vm.l(lj, t), 1.0);
      soc_dims.push_back(4);
    }
    for (size_t s = 0; s < model.pvs.size(); ++s)
      if (pv_active[s][t]) {
        double radius = 0.0;
        for (const auto& cone : data.pv[s].cones)
          if (cone.t == t) radius = cone.radius;
        lp_row(radius);  // s0 = C_s (constant top)
        gt.emplace_back(lp_row(0.0), vm.pv_p[s][t], -1.0);
        gt.emplace_back(lp_row(0.0), vm.pv_q[s][t], -1.0);
        soc_dims.push_back(3);
      }
    for (size_t e = 0; e < model.evs.size(); ++e)
      if (t <= T && ev_charging[e][t]) {
        double radius = 0.0;
        for (const auto& ch : data.ev[e].charger)
          if (ch.t == t) radius = ch.cone_radius;
        lp_row(radius);
        gt.emplace_back(lp_row(0.0), vm.ev_p[e][t], -1.0);
        gt.emplace_back(lp_row(0.0), vm.ev_q[e][t], -1.0);
        soc_dims.push_back(3);
      }
  }
  cm.count = static_cast<int>(hval.size());

  // ---- row normalization: unit max-coefficient per row, per cone block ----
  // (epsilon ~ 9 in the top-oil rows vs r ~ 0.01 in the balance rows spans
  // three orders of magnitude; the duals are divided by the same factors on
  // extraction.)
  inst.eq_scale = Eigen::VectorXd::Ones(rm.count);
  inst.ineq_scale = Eigen::VectorXd::Ones(cm.count);
  // Collect raw row maxima (empty rows keep a factor of 1).
  Eigen::VectorXd eq_max = Eigen::VectorXd::Zero(rm.count);
  Eigen::VectorXd in_max = Eigen::VectorXd::Zero(cm.count);
  for (const Triplet& tr : at) eq_max[tr.row()] = std::max(eq_max[tr.row()], std::abs(tr.value()));
  for (const Triplet& tr : gt) in_max[tr.row()] = std::max(in_max[tr.row()], std::abs(tr.value()));
  for (int i = 0; i < rm.count; ++i) inst.eq_scale[i] = eq_max[i] > 0.0 ? eq_max[i] : 1.0;
  // Cone rows share one factor so the cone geometry is preserved.
  {
    int row = nonneg_rows;
    for (int i = 0; i < nonneg_rows; ++i) inst.ineq_scale[i] = in_max[i] > 0.0 ? in_max[i] : 1.0;
    for (int dim : soc_dims) {
      double blk = 0.0;
      for (int r = 0; r < dim; ++r) blk = std::max(blk, in_max[row + r]);
      if (blk <= 0.0) blk = 1.0;
      for (int r = 0; r < dim; ++r) inst.ineq_scale[row + r] = blk;
      row += dim;
    }
  }
  for (Triplet& tr : at)
    tr = Triplet(tr.row(), tr.col(), tr.value() / inst.eq_scale[tr.row()]);
  for (Triplet& tr : gt)
    tr = Triplet(tr.row(), tr.col(), tr.value() / inst.ineq_scale[tr.row()]);
  for (int i = 0; i < rm.count; ++i) bval[i] /= inst.eq_scale[i];
  for (int i = 0; i < cm.count; ++i) hval[i] /= inst.ineq_scale[i];

  // ---- objective and final program ---------------------------------------
  ConeProgram& prog = inst.program;
  prog.c = Eigen::VectorXd::Zero(nv);
  for (int t = 1; t <= H; ++t) {
    prog.c[vm.P0[t]] = dt * data.cost_p[t];
    prog.c[vm.Q0[t]] = dt * data.cost_q[t];
    for (int y = 0; y < Y; ++y) prog.c[vm.f(y, t)] = dt * model.costs.c_xfmr[y];
  }
  prog.A.resize(rm.count, nv);
  prog.A.setFromTriplets(at.begin(), at.end());
  prog.G.resize(cm.count, nv);
  prog.G.setFromTriplets(gt.begin(), gt.end());
  prog.b = Eigen::Map<const Eigen::VectorXd>(bval.data(), bval.size());
  prog.h = Eigen::Map<const Eigen::VectorXd>(hval.data(), hval.size());
  prog.nonneg = nonneg_rows;
  prog.soc_dims = std::move(soc_dims);
  return inst;
}

}  // namespace dfopf
