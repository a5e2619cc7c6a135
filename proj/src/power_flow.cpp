#include "dfopf/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include "dfopf/errors.hpp"

namespace dfopf {

double ResidualReport::max() const {
  return std::max({real_balance, reactive_balance, voltage_drop, current_definition});
}

namespace {

// Below this, successive-substitution updates are dominated by rounding.
constexpr double kRoundoffFloor = 1e-13;

// Sweep a single period. State columns are written in place; returns the
// residual after the last sweep and the iteration count via out-params.
void sweep_period(const FeederTopology& topo, const Eigen::VectorXd& net_p,
                  const Eigen::VectorXd& net_q, double root_v,
                  const PowerFlowOptions& opts, Eigen::Ref<Eigen::VectorXd> v,
                  Eigen::Ref<Eigen::VectorXd> l, Eigen::Ref<Eigen::VectorXd> P,
                  Eigen::Ref<Eigen::VectorXd> Q, double& residual, int& iters) {
  const int n_nodes = topo.node_count();
  const int n_lines = topo.line_count();

  v.setConstant(root_v);
  l.setZero();
  P.setZero();
  Q.setZero();

  double prev_residual = std::numeric_limits<double>::infinity();
  for (iters = 1; iters <= opts.max_iterations; ++iters) {
    // Backward: accumulate flows from the leaves (children have higher index).
    for (int j = n_nodes - 1; j >= 1; --j) {
      const Line& ln = topo.lines[j - 1];
      double sum_p = net_p[j], sum_q = net_q[j];
      for (int k : topo.children[j]) {
        sum_p += P[k - 1];
        sum_q += Q[k - 1];
      }
      P[j - 1] = sum_p + ln.r * l[j - 1];
      Q[j - 1] = sum_q + ln.x * l[j - 1];
    }
    // Forward: propagate voltages from the root, then refresh currents.
    for (int j = 1; j < n_nodes; ++j) {
      const Line& ln = topo.lines[j - 1];
      const double vi = v[ln.parent];
      v[j] = vi - 2.0 * (ln.r * P[j - 1] + ln.x * Q[j - 1]) +
             (ln.r * ln.r + ln.x * ln.x) * l[j - 1];
      if (v[j] <= 0.0)
        throw NumericalError("voltage collapse at node '" + topo.node_ids[j] + "'");
    }
    residual = 0.0;
    for (int j = 0; j < n_lines; ++j) {
      const Line& ln = topo.lines[j];
      const double vi = v[ln.parent];
      const double l_new = (P[j] * P[j] + Q[j] * Q[j]) / vi;
      residual = std::max(residual, std::abs(l_new - l[j]));
      l[j] = l_new;
    }
    if (residual <= opts.tolerance) return;
    // Once the update is at the roundoff floor and no longer shrinking the
    // iteration has hit its machine-precision fixed point; callers asking for
    // tighter tolerances (down to 0) get the best attainable answer.
    if (residual < kRoundoffFloor && residual >= prev_residual) return;
    prev_residual = residual;
  }
}

}  // namespace

PowerFlowResult solve_power_flow(const FeederTopology& topo, const TimeGrid& grid,
                                 const Eigen::MatrixXd& net_p,
                                 const Eigen::MatrixXd& net_q,
                                 const Eigen::VectorXd& root_v,
                                 const PowerFlowOptions& opts) {
  const int n_nodes = topo.node_count();
  const int n_lines = topo.line_count();
  const int cols = grid.columns();
  if (net_p.rows() != n_nodes || net_p.cols() != cols || net_q.rows() != n_nodes ||
      net_q.cols() != cols || root_v.size() != cols)
    throw ValidationError("power flow inputs must be (N+1) x (T+1) with a root voltage per period");

  PowerFlowResult res;
  res.op.v.setZero(n_nodes, cols);
  res.op.l.setZero(n_lines, cols);
  res.op.P.setZero(n_lines, cols);
  res.op.Q.setZero(n_lines, cols);
  res.op.P0.setZero(cols);
  res.op.Q0.setZero(cols);
  res.op.p = net_p;
  res.op.q = net_q;

  std::vector<double> residuals(cols, 0.0);
  std::vector<int> iterations(cols, 0);

  auto run_range = [&](int t_begin, int t_end) {
    for (int t = t_begin; t < t_end; ++t) {
      res.op.v(0, t) = root_v[t];
      sweep_period(topo, net_p.col(t), net_q.col(t), root_v[t], opts,
                   res.op.v.col(t), res.op.l.col(t), res.op.P.col(t),
                   res.op.Q.col(t), residuals[t], iterations[t]);
      double p0 = 0.0, q0 = 0.0;
      for (int k : topo.children[0]) {
        p0 += res.op.P(k - 1, t);
        q0 += res.op.Q(k - 1, t);
      }
      res.op.P0[t] = p0;
      res.op.Q0[t] = q0;
    }
  };

  // Periods are independent; fan out when there are enough of them to matter.
  const int T = grid.periods;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (T >= 8 && hw > 1) {
    const int n_jobs = static_cast<int>(std::min<unsigned>(hw, 8));
    std::vector<std::future<void>> jobs;
    const int chunk = (T + n_jobs - 1) / n_jobs;
    for (int b = 1; b <= T; b += chunk)
      jobs.push_back(std::async(std::launch::async, run_range, b,
                                std::min(T + 1, b + chunk)));
    for (auto& j : jobs) j.get();
  } else {
    run_range(1, T + 1);
  }

  res.worst_residual = *std::max_element(residuals.begin() + 1, residuals.end());
  res.iterations = *std::max_element(iterations.begin() + 1, iterations.end());
  res.converged =
      res.worst_residual <= std::max(opts.tolerance, kRoundoffFloor);
  if (!res.converged) {
    std::ostringstream msg;
    msg << "power flow did not converge: worst residual " << res.worst_residual
        << " after " << opts.max_iterations << " sweeps";
    throw NumericalError(msg.str());
  }
  return res;
}

ResidualReport residual_report(const FeederTopology& topo, const TimeGrid& grid,
                               const OperatingPoint& op) {
  ResidualReport rep;
  const int n_nodes = topo.node_count();
  for (int t = 1; t <= grid.periods; ++t) {
    for (int j = 1; j < n_nodes; ++j) {
      const Line& ln = topo.lines[j - 1];
      double sum_p = op.p(j, t), sum_q = op.q(j, t);
      for (int k : topo.children[j]) {
        sum_p += op.P(k - 1, t);
        sum_q += op.Q(k - 1, t);
      }
      rep.real_balance = std::max(
          rep.real_balance, std::abs(op.P(j - 1, t) - ln.r * op.l(j - 1, t) - sum_p));
      rep.reactive_balance = std::max(
          rep.reactive_balance, std::abs(op.Q(j - 1, t) - ln.x * op.l(j - 1, t) - sum_q));
      const double vi = op.v(ln.parent, t);
      rep.voltage_drop = std::max(
          rep.voltage_drop,
          std::abs(op.v(j, t) - vi + 2.0 * (ln.r * op.P(j - 1, t) + ln.x * op.Q(j - 1, t)) -
                   (ln.r * ln.r + ln.x * ln.x) * op.l(j - 1, t)));
      rep.current_definition = std::max(
          rep.current_definition,
          std::abs(vi * op.l(j - 1, t) - op.P(j - 1, t) * op.P(j - 1, t) -
                   op.Q(j - 1, t) * op.Q(j - 1, t)));
    }
    double p0 = 0.0, q0 = 0.0;
    for (int k : topo.children[0]) {
      p0 += op.P(k - 1, t);
      q0 += op.Q(k - 1, t);
    }
    rep.real_balance = std::max(rep.real_balance, std::abs(op.P0[t] - p0));
    rep.reactive_balance = std::max(rep.reactive_balance, std::abs(op.Q0[t] - q0));
  }
  return rep;
}

}  // namespace dfopf
