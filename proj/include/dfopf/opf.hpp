#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfopf/der.hpp"
#include "dfopf/model.hpp"
#include "dfopf/power_flow.hpp"
#include "dfopf/socp.hpp"
#include "dfopf/thermal.hpp"

namespace dfopf {

// How the day-ahead horizon is closed off: either a cyclic top-oil state
// (h_T = h_0, pricing next-day thermal burden through the cycle dual) or an
// appended extension of E periods with forecast data and no EVs.
enum class HorizonEnd { Cycle, Extended };

struct HorizonSpec {
  HorizonEnd mode = HorizonEnd::Cycle;
  int extension_periods = 12;

  int optimized_periods(int reporting_periods) const {
    return mode == HorizonEnd::Extended ? reporting_periods + extension_periods
                                        : reporting_periods;
  }
};

// Parses "cycle", "extended", or "extended:<E>".
HorizonSpec parse_horizon_end(const std::string& text);
std::string to_string(const HorizonSpec& spec);

// Per-period model data stretched over the optimized horizon H (= T in cycle
// mode, T+E in extended mode).  Extension columns copy the first E periods;
// EVs exist only within the reporting horizon.
struct HorizonData {
  int periods = 0;          // T
  int horizon_periods = 0;  // H
  Eigen::VectorXd cost_p, cost_q;        // H+1
  Eigen::VectorXd root_v;                // H+1, squared magnitude
  Eigen::MatrixXd demand_p, demand_q;    // (N+1) x (H+1), fixed loads
  std::vector<PvConstraintSet> pv;       // per PV unit, built over H
  std::vector<EvConstraintSet> ev;       // per EV, within T
  std::vector<LinearizedCoeffs> coeffs;  // per transformer
  std::vector<Eigen::VectorXd> zeta;     // per transformer, H+1
  Eigen::VectorXd h0;                    // per transformer, initial top-oil
};

HorizonData build_horizon_data(const FeederModel& model, const HorizonSpec& spec);

// Variable index maps; -1 marks "no variable".  Columns use the shared T+1
// layout; column 0 is the initial-condition slot, a variable only for the
// transformer top-oil state in cycle mode (the periodic orbit determines the
// day-boundary temperature) and for EV state of charge fixed at departure.
struct VariableMap {
  Eigen::MatrixXi v;        // (N+1) x (H+1), root row -1 (parameter)
  Eigen::MatrixXi l, P, Q;  // N x (H+1), line index = child node - 1
  Eigen::MatrixXi p, q;     // (N+1) x (H+1), root row -1
  Eigen::VectorXi P0, Q0;   // H+1
  Eigen::MatrixXi f, h;     // Y x (H+1)
  std::vector<Eigen::VectorXi> pv_p, pv_q;  // per PV unit
  std::vector<Eigen::VectorXi> ev_p, ev_q;  // per EV (charging periods)
  std::vector<Eigen::VectorXi> ev_u;        // per EV (interval boundaries)
  int count = 0;
};

// Equality row indices (rows of A).
struct RowMap {
  Eigen::VectorXi sub_p, sub_q;  // H+1
  Eigen::MatrixXi bal_p, bal_q;  // (N+1) x (H+1), rows 1..N
  Eigen::MatrixXi volt;          // (N+1) x (H+1)
  Eigen::MatrixXi inj_p, inj_q;  // (N+1) x (H+1)
  Eigen::MatrixXi xf2;           // Y x (H+1), top-oil recursion
  Eigen::VectorXi cycle;         // Y, -1 outside cycle mode
  int count = 0;
};

// Inequality/cone row indices (rows of G).
struct ConeRowMap {
  Eigen::MatrixXi v_up, v_lo;        // (N+1) x (H+1)
  Eigen::MatrixXi amp;               // N x (H+1)
  std::vector<Eigen::MatrixXi> xf1;  // per transformer: M x (H+1)
  Eigen::MatrixXi f_pos;             // Y x (H+1)
  Eigen::MatrixXi line_cone;         // N x (H+1), first row of each 4-dim cone
  int count = 0;
};

struct ProblemInstance {
  ConeProgram program;
  VariableMap vars;
  RowMap eq;
  ConeRowMap ineq;
  // Row normalization divisors applied during assembly; duals returned by the
  // solver are divided by these to recover the unscaled convention.
  Eigen::VectorXd eq_scale, ineq_scale;
  HorizonSpec horizon;
  HorizonData data;
};

ProblemInstance assemble(const FeederModel& model, const HorizonSpec& spec = {});

// Duals in the declared sign convention: per-hour prices, positive for
// marginal withdrawals under positive prices; inequality duals nonnegative.
struct DualSolution {
  Eigen::MatrixXd lambda_p, lambda_q;  // (N+1) x (H+1); row 0 = root
  Eigen::MatrixXd mu_up, mu_lo;        // (N+1) x (H+1): voltage bounds
  Eigen::MatrixXd nu;                  // N x (H+1): ampacity
  std::vector<Eigen::MatrixXd> xi;     // per transformer: M x (H+1)
  Eigen::VectorXd rho;                 // per transformer; 0 outside cycle mode
};

struct ExactnessReport {
  double max_soc_gap = 0.0;        // max over lines/periods of v·l - P² - Q²
  double max_piecewise_gap = 0.0;  // max |f - piecewise max|
  double max_xi_sum_error = 0.0;   // max |Σ_κ ξ - c_y|
  Eigen::MatrixXi binding_count;   // Y x (H+1): piecewise segments binding
  int min_binding = 0, max_binding = 0;
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };
std::string to_string(SolveStatus status);

struct SolveOptions {
  ConicSettings solver;
  std::string backend = "embedded";
  double exactness_gap_tol = 1e-6;  // SOC gap above this flags the run
};

struct SolveReport {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::string solver_status;  // backend-native status string
  int iterations = 0;
  double objective = 0.0;
  double real_power_cost = 0.0;
  double reactive_power_cost = 0.0;
  double transformer_cost = 0.0;
  double duality_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;

  OperatingPoint op;   // over H+1 columns; root voltage row filled in
  DerSchedules der;    // over H+1 columns
  Eigen::MatrixXd f_opt, h_opt;         // Y x (H+1); h column 0 = h_0
  std::vector<ThermalState> thermal;    // per transformer, simulated from l
  DualSolution duals;
  ExactnessReport exactness;
  HorizonSpec horizon;
  int periods = 0;          // T
  int horizon_periods = 0;  // H
};

SolveReport solve(const ProblemInstance& inst, const FeederModel& model,
                  const SolveOptions& options = {});
SolveReport solve(const FeederModel& model, const HorizonSpec& spec = {},
                  const SolveOptions& options = {});

// Recomputes exactness metrics from a report's primal/dual content.
ExactnessReport exactness_report(const SolveReport& report, const FeederModel& model);

}  // namespace dfopf
