#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dfopf/feeder.hpp"
#include "dfopf/power_flow.hpp"

namespace dfopf {

// Sensitivities of one period's power-flow solution with respect to the net
// real and reactive demand at every non-root node.  Differentiating the four
// power-flow equation families at the operating point yields, per
// perturbation site, a linear system in the 4N unknowns [dP; dQ; dv; dl].
// Each matrix below is N x N: row = line index (child node - 1; for dv the
// row holds the child node's voltage), column = perturbation site node - 1.
struct PeriodSensitivities {
  int period = 0;
  Eigen::MatrixXd dP_dp, dQ_dp, dv_dp, dl_dp;
  Eigen::MatrixXd dP_dq, dQ_dq, dv_dq, dl_dq;
  double max_residual = 0.0;  // worst linear-system residual (infinity norm)
};

struct SensitivityTensor {
  std::vector<PeriodSensitivities> periods;  // entry t-1 holds period t
  double max_residual = 0.0;
};

// The 4N x 4N linearization of the power-flow equations at the operating
// point: unknown order [dP; dQ; dv; dl], row order [bal-P; bal-Q; voltage
// drop; current definition].  The root voltage is a parameter (dv_0 = 0).
Eigen::MatrixXd sensitivity_matrix(const FeederTopology& topo,
                                   const OperatingPoint& op, int period);

// Factors the period's matrix once and solves all 2N unit right-hand sides.
PeriodSensitivities compute_period_sensitivities(const FeederTopology& topo,
                                                 const OperatingPoint& op,
                                                 int period);

// All periods 1..periods; the systems are independent and solved in parallel.
SensitivityTensor compute_sensitivities(const FeederTopology& topo,
                                        const OperatingPoint& op, int periods);

// Central-difference replica of one period's sensitivities, from power-flow
// solves at perturbed net demand run to their machine-precision fixed point.
// This is the validation oracle for the linear-system path.
PeriodSensitivities fd_sensitivities(const FeederTopology& topo,
                                     const Eigen::MatrixXd& net_p,
                                     const Eigen::MatrixXd& net_q,
                                     const Eigen::VectorXd& root_v, int period,
                                     double step = 1e-6);

// Worst disagreement between an analytic and a finite-difference set:
// relative where |analytic| >= 1e-8, absolute below that.
double sensitivity_error(const PeriodSensitivities& analytic,
                         const PeriodSensitivities& fd);

}  // namespace dfopf
