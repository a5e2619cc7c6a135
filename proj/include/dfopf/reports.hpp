#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dfopf/dlmc.hpp"
#include "dfopf/opf.hpp"
#include "dfopf/power_flow.hpp"
#include "dfopf/sensitivity.hpp"
#include "dfopf/thermal.hpp"

namespace dfopf {

// All writers are byte-deterministic: fixed headers, fixed row order, and
// floating point rendered with 12 significant digits. Column orders are
// documented in docs/output_formats.md.

// "%.12g" with negative zero normalized away.
std::string format_number(double value);

// period,node,v,p_net,q_net,P,Q,l — one row per (period, node). The root row
// carries the substation head flows in P/Q and leaves l empty.
void write_operating_point_csv(std::ostream& os, const OperatingPoint& op,
                               int periods);

// node,period,kind,energy,loss_real,loss_reactive,voltage,ampacity,
// transformer,total,solver_dual,rel_gap — N*T*2 data rows, root excluded,
// kind P before Q.
void write_dlmc_csv(std::ostream& os, const DlmcBreakdown& bd,
                    const ReconciliationReport& rec);

// metric,value summary of a reconciliation pass.
void write_reconciliation_csv(std::ostream& os, const ReconciliationReport& rec);

// period,site,kind,quantity,index,value with optional fd_value,error columns
// appended when a finite-difference tensor is supplied (same shape).
void write_sensitivities_csv(std::ostream& os, const SensitivityTensor& tensor,
                             const std::vector<PeriodSensitivities>* fd = nullptr);

// period,load_sq,top_oil_c,hot_spot_c,f_aa_exact,f_aa_piecewise,
// loss_of_life_h. Row 0 shows the initial oil temperature only.
void write_thermal_csv(std::ostream& os, const ThermalState& state,
                       const Eigen::VectorXd& load_sq, const TimeGrid& grid);

// Full machine-readable solve summary (status, costs, exactness, prices,
// transformer trajectories, DER schedules).
void write_solve_report_json(std::ostream& os, const SolveReport& report,
                             const FeederModel& model);

// Convergence summary for a standalone power-flow run.
void write_pf_report_json(std::ostream& os, const PowerFlowResult& result,
                          const ResidualReport& residuals);

}  // namespace dfopf
