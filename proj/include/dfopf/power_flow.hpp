#pragma once

#include <Eigen/Dense>

#include "dfopf/feeder.hpp"
#include "dfopf/time_grid.hpp"

namespace dfopf {

// One feeder state over the horizon, in the branch-flow (squared) variables.
// Line quantities are child-indexed like FeederTopology::lines: row j-1 is
// the line feeding node j. All matrices have T+1 columns, column 0 unused.
struct OperatingPoint {
  Eigen::MatrixXd v;       // (N+1) x (T+1) squared voltage; row 0 = substation
  Eigen::MatrixXd l;       // N x (T+1) squared current
  Eigen::MatrixXd P, Q;    // N x (T+1) sending-end flows
  Eigen::VectorXd P0, Q0;  // size T+1, substation head injection
  Eigen::MatrixXd p, q;    // (N+1) x (T+1) net nodal demand; row 0 zero
};

struct PowerFlowOptions {
  double tolerance = 1e-12;  // max-norm over all residual families
  int max_iterations = 200;
};

struct PowerFlowResult {
  OperatingPoint op;
  bool converged = false;
  double worst_residual = 0.0;
  int iterations = 0;
};

// Residual max-norms of the four branch-flow equation families at an
// operating point (substation balance is folded into the real/reactive rows).
struct ResidualReport {
  double real_balance = 0.0;
  double reactive_balance = 0.0;
  double voltage_drop = 0.0;
  double current_definition = 0.0;

  double max() const;
};

// Backward/forward sweep over the tree, all periods (periods are independent;
// they are swept concurrently when the horizon is long enough to pay off).
// net_p/net_q are (N+1) x (T+1) nodal net demands, root_v the substation
// squared voltage per period. Throws NumericalError (carrying the worst
// residual) if any period fails to converge or a voltage collapses.
PowerFlowResult solve_power_flow(const FeederTopology& topo, const TimeGrid& grid,
                                 const Eigen::MatrixXd& net_p,
                                 const Eigen::MatrixXd& net_q,
                                 const Eigen::VectorXd& root_v,
                                 const PowerFlowOptions& opts = {});

ResidualReport residual_report(const FeederTopology& topo, const TimeGrid& grid,
                               const OperatingPoint& op);

}  // namespace dfopf
