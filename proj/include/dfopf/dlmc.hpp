#pragma once

#include <Eigen/Dense>

#include "dfopf/model.hpp"
#include "dfopf/opf.hpp"
#include "dfopf/power_flow.hpp"
#include "dfopf/sensitivity.hpp"

namespace dfopf {

// Re-solves the exact power flow at the optimizer's net demands, so that
// sensitivity coefficients sit on the power-flow manifold instead of the
// (tolerance-level) relaxed primal. Also doubles as the relaxation-quality
// check: the result should agree with the solver's operating point to the
// exactness gap.
PowerFlowResult reconstructed_operating_point(const SolveReport& report,
                                              const FeederModel& model);

// Intertemporal transformer degradation prices: pi_{y,t'} is the marginal
// cost of raising the transformer's squared current at period t', counting
// the delta-discounted thermal burden of every later period plus (in cycle
// mode) the day-boundary dual rho. Identical for the P- and Q-decomposition.
struct PiCoefficients {
  Eigen::MatrixXd pi;           // Y x (T+1), columns 1..T
  Eigen::MatrixXd alpha_tilde;  // Y x (H+1): sum_k a_k xi_{y,t,k}
  Eigen::VectorXd eta;          // per transformer: hot-spot rise coefficient
  Eigen::VectorXd epsilon;      // per transformer: top-oil load coefficient
  Eigen::VectorXd delta;        // per transformer: top-oil decay factor
  Eigen::VectorXd rho;          // cycle dual (zero without a cycle row)
  int periods = 0;              // T (prices are reported for the day)
  int horizon_periods = 0;      // H (the backward sum runs to here)
};

// Backward recursion w_t = alpha~_t + delta w_{t+1} seeded at the horizon end
// (w_T = alpha~_T + rho in cycle mode, w_H = alpha~_H otherwise), giving
// pi_{t'} = epsilon * w_{t'} + eta * alpha~_{t'}.
PiCoefficients transformer_pi(const SolveReport& report, const FeederModel& model);

// One power kind's additive decomposition; matrices are (N+1) x (T+1) with
// row 0 the root (energy = total = substation cost, all else zero).
struct DlmcSide {
  Eigen::MatrixXd energy;         // substation marginal cost
  Eigen::MatrixXd loss_real;      // c^P sum_j r dl/d.
  Eigen::MatrixXd loss_reactive;  // c^Q sum_j x dl/d.
  Eigen::MatrixXd voltage;        // sum_j (mu_up - mu_lo) dv/d.
  Eigen::MatrixXd ampacity;       // sum_j nu dl/d.
  Eigen::MatrixXd transformer;    // sum_y pi dl_y/d.
  Eigen::MatrixXd total;          // sum of the six components
  Eigen::MatrixXd solver_dual;    // lambda from the solve, for comparison
};

struct DlmcBreakdown {
  DlmcSide p, q;
  int periods = 0;
};

DlmcBreakdown decompose(const SolveReport& report, const FeederModel& model,
                        const SensitivityTensor& tensor,
                        const PiCoefficients& pi);

// Relative gap between each decomposed total and the solver dual, with a
// $1/p.u.·h floor on the denominator so near-zero prices compare absolutely.
struct ReconciliationReport {
  double max_rel_gap = 0.0;
  double mean_rel_gap = 0.0;
  int worst_node = -1;
  int worst_period = -1;
  char worst_kind = 'P';
  int flagged = 0;  // entries above tolerance
  double tolerance = 1e-4;
  Eigen::MatrixXd gap_p, gap_q;  // (N+1) x (T+1)
};

ReconciliationReport reconcile(const DlmcBreakdown& breakdown,
                               double tolerance = 1e-4);

}  // namespace dfopf
