#include "dfopf/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include "dfopf/errors.hpp"
#include "dfopf/time_grid.hpp"

namespace dfopf {

Eigen::MatrixXd sensitivity_matrix(const FeederTopology& topo,
                                   const OperatingPoint& op, int period) {
  const int N = topo.line_count();
  const int t = period;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(4 * N, 4 * N);
  for (int j = 1; j <= N; ++j) {
    const Line& ln = topo.line_into(j);
    const int lj = j - 1;
    const int pi = ln.parent;  // parent node; its voltage row is pi - 1

    // Real balance: dP_j - r dl_j - sum_k dP_k = [site]
    M(lj, lj) = 1.0;
    M(lj, 3 * N + lj) = -ln.r;
    for (int k : topo.children[j]) M(lj, k - 1) = -1.0;

    // Reactive balance: dQ_j - x dl_j - sum_k dQ_k = [site]
    M(N + lj, N + lj) = 1.0;
    M(N + lj, 3 * N + lj) = -ln.x;
    for (int k : topo.children[j]) M(N + lj, N + k - 1) = -1.0;

    // Voltage drop: dv_j - dv_i + 2r dP + 2x dQ - (r^2+x^2) dl = 0
    M(2 * N + lj, 2 * N + lj) = 1.0;
    if (pi != 0) M(2 * N + lj, 2 * N + pi - 1) = -1.0;
    M(2 * N + lj, lj) = 2.0 * ln.r;
    M(2 * N + lj, N + lj) = 2.0 * ln.x;
    M(2 * N + lj, 3 * N + lj) = -(ln.r * ln.r + ln.x * ln.x);

    // Current definition: l dv_i + v_i dl - 2P dP - 2Q dQ = 0
    if (pi != 0) M(3 * N + lj, 2 * N + pi - 1) = op.l(lj, t);
    M(3 * N + lj, 3 * N + lj) = op.v(pi, t);
    M(3 * N + lj, lj) = -2.0 * op.P(lj, t);
    M(3 * N + lj, N + lj) = -2.0 * op.Q(lj, t);
  }
  return M;
}

PeriodSensitivities compute_period_sensitivities(const FeederTopology& topo,
                                                 const OperatingPoint& op,
                                                 int period) {
  const int N = topo.line_count();
  const Eigen::MatrixXd M = sensitivity_matrix(topo, op, period);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);

  // Unit loads: column s perturbs p at node s+1, column N+s perturbs q there.
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(4 * N, 2 * N);
  for (int s = 0; s < N; ++s) {
    rhs(s, s) = 1.0;          // bal-P row of the site node
    rhs(N + s, N + s) = 1.0;  // bal-Q row of the site node
  }
  const Eigen::MatrixXd X = lu.solve(rhs);

  PeriodSensitivities out;
  out.period = period;
  out.max_residual = (M * X - rhs).cwiseAbs().maxCoeff();
  out.dP_dp = X.block(0, 0, N, N);
  out.dQ_dp = X.block(N, 0, N, N);
  out.dv_dp = X.block(2 * N, 0, N, N);
  out.dl_dp = X.block(3 * N, 0, N, N);
  out.dP_dq = X.block(0, N, N, N);
  out.dQ_dq = X.block(N, N, N, N);
  out.dv_dq = X.block(2 * N, N, N, N);
  out.dl_dq = X.block(3 * N, N, N, N);
  return out;
}

SensitivityTensor compute_sensitivities(const FeederTopology& topo,
                                        const OperatingPoint& op, int periods) {
  if (op.v.cols() < periods + 1)
    throw ValidationError("operating point has fewer columns than requested periods");
  SensitivityTensor tensor;
  tensor.periods.resize(periods);

  auto run_range = [&](int t_begin, int t_end) {
    for (int t = t_begin; t < t_end; ++t)
      tensor.periods[t - 1] = compute_period_sensitivities(topo, op, t);
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (periods >= 8 && hw > 1) {
    const int n_jobs = static_cast<int>(std::min<unsigned>(hw, 8));
    std::vector<std::future<void>> jobs;
    const int chunk = (periods + n_jobs - 1) / n_jobs;
    for (int b = 1; b <= periods; b += chunk)
      jobs.push_back(std::async(std::launch::async, run_range, b,
                                std::min(periods + 1, b + chunk)));
    for (auto& j : jobs) j.get();
  } else {
    run_range(1, periods + 1);
  }
  for (const PeriodSensitivities& ps : tensor.periods)
    tensor.max_residual = std::max(tensor.max_residual, ps.max_residual);
  return tensor;
}

namespace {

// Single-period power flow at a perturbed demand column, run to the
// machine-precision fixed point (tolerance 0 stops at the roundoff floor).
OperatingPoint perturbed_flow(const FeederTopology& topo,
                              const Eigen::VectorXd& net_p_col,
                              const Eigen::VectorXd& net_q_col, double root_v) {
  TimeGrid grid;
  grid.periods = 1;
  Eigen::MatrixXd np(topo.node_count(), 2), nq(topo.node_count(), 2);
  np.col(0).setZero();
  nq.col(0).setZero();
  np.col(1) = net_p_col;
  nq.col(1) = net_q_col;
  Eigen::VectorXd rv(2);
  rv << root_v, root_v;
  PowerFlowOptions opts;
  opts.tolerance = 0.0;
  opts.max_iterations = 500;
  return solve_power_flow(topo, grid, np, nq, rv, opts).op;
}

}  // namespace

PeriodSensitivities fd_sensitivities(const FeederTopology& topo,
                                     const Eigen::MatrixXd& net_p,
                                     const Eigen::MatrixXd& net_q,
                                     const Eigen::VectorXd& root_v, int period,
                                     double step) {
  const int N = topo.line_count();
  PeriodSensitivities out;
  out.period = period;
  auto zero = [&] { return Eigen::MatrixXd::Zero(N, N); };
  out.dP_dp = zero();
  out.dQ_dp = zero();
  out.dv_dp = zero();
  out.dl_dp = zero();
  out.dP_dq = zero();
  out.dQ_dq = zero();
  out.dv_dq = zero();
  out.dl_dq = zero();

  for (int s = 0; s < N; ++s) {
    for (int kind = 0; kind < 2; ++kind) {
      Eigen::VectorXd p_hi = net_p.col(period), p_lo = net_p.col(period);
      Eigen::VectorXd q_hi = net_q.col(period), q_lo = net_q.col(period);
      if (kind == 0) {
        p_hi[s + 1] += step;
        p_lo[s + 1] -= step;
      } else {
        q_hi[s + 1] += step;
        q_lo[s + 1] -= step;
      }
      const OperatingPoint hi = perturbed_flow(topo, p_hi, q_hi, root_v[period]);
      const OperatingPoint lo = perturbed_flow(topo, p_lo, q_lo, root_v[period]);
      const double inv = 1.0 / (2.0 * step);
      for (int r = 0; r < N; ++r) {
        const double dP = (hi.P(r, 1) - lo.P(r, 1)) * inv;
        const double dQ = (hi.Q(r, 1) - lo.Q(r, 1)) * inv;
        const double dv = (hi.v(r + 1, 1) - lo.v(r + 1, 1)) * inv;
        const double dl = (hi.l(r, 1) - lo.l(r, 1)) * inv;
        if (kind == 0) {
          out.dP_dp(r, s) = dP;
          out.dQ_dp(r, s) = dQ;
          out.dv_dp(r, s) = dv;
          out.dl_dp(r, s) = dl;
        } else {
          out.dP_dq(r, s) = dP;
          out.dQ_dq(r, s) = dQ;
          out.dv_dq(r, s) = dv;
          out.dl_dq(r, s) = dl;
        }
      }
    }
  }
  return out;
}

double sensitivity_error(const PeriodSensitivities& analytic,
                         const PeriodSensitivities& fd) {
  double worst = 0.0;
  auto compare = [&worst](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    for (int c = 0; c < a.cols(); ++c)
      for (int r = 0; r < a.rows(); ++r) {
        const double diff = std::abs(a(r, c) - b(r, c));
        const double err =
            std::abs(a(r, c)) >= 1e-8 ? diff / std::abs(a(r, c)) : diff;
        worst = std::max(worst, err);
      }
  };
  compare(analytic.dP_dp, fd.dP_dp);
  compare(analytic.dQ_dp, fd.dQ_dp);
  compare(analytic.dv_dp, fd.dv_dp);
  compare(analytic.dl_dp, fd.dl_dp);
  compare(analytic.dP_dq, fd.dP_dq);
  compare(analytic.dQ_dq, fd.dQ_dq);
  compare(analytic.dv_dq, fd.dv_dq);
  compare(analytic.dl_dq, fd.dl_dq);
  return worst;
}

}  // namespace dfopf
