#include "dfopf/reports.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

namespace dfopf {

using nlohmann::json;

std::string format_number(double value) {
  if (value == 0.0) return "0";  // fold -0 into 0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

namespace {

// Round through the 12-digit text form so JSON numbers match the CSV policy.
double snap(double value) {
  if (value == 0.0) return 0.0;
  if (!std::isfinite(value)) return value;
  return std::strtod(format_number(value).c_str(), nullptr);
}

json series(const Eigen::VectorXd& v, int first, int last) {
  json arr = json::array();
  for (int t = first; t <= last; ++t) arr.push_back(snap(v[t]));
  return arr;
}

json row_series(const Eigen::MatrixXd& m, int row, int first, int last) {
  json arr = json::array();
  for (int t = first; t <= last; ++t) arr.push_back(snap(m(row, t)));
  return arr;
}

char kind_char(int kind) { return kind == 0 ? 'P' : 'Q'; }

}  // namespace

void write_operating_point_csv(std::ostream& os, const OperatingPoint& op,
                               int periods) {
  const int N = static_cast<int>(op.l.rows());
  os << "period,node,v,p_net,q_net,P,Q,l\n";
  for (int t = 1; t <= periods; ++t) {
    os << t << ",0," << format_number(op.v(0, t)) << ",0,0,"
       << format_number(op.P0[t]) << ',' << format_number(op.Q0[t]) << ",\n";
    for (int j = 1; j <= N; ++j) {
      os << t << ',' << j << ',' << format_number(op.v(j, t)) << ','
         << format_number(op.p(j, t)) << ',' << format_number(op.q(j, t)) << ','
         << format_number(op.P(j - 1, t)) << ',' << format_number(op.Q(j - 1, t))
         << ',' << format_number(op.l(j - 1, t)) << '\n';
    }
  }
}

void write_dlmc_csv(std::ostream& os, const DlmcBreakdown& bd,
                    const ReconciliationReport& rec) {
  os << "node,period,kind,energy,loss_real,loss_reactive,voltage,ampacity,"
        "transformer,total,solver_dual,rel_gap\n";
  const int N = static_cast<int>(bd.p.total.rows()) - 1;
  for (int j = 1; j <= N; ++j) {
    for (int t = 1; t <= bd.periods; ++t) {
      for (int kind = 0; kind < 2; ++kind) {
        const DlmcSide& side = kind == 0 ? bd.p : bd.q;
        const Eigen::MatrixXd& gap = kind == 0 ? rec.gap_p : rec.gap_q;
        os << j << ',' << t << ',' << kind_char(kind) << ','
           << format_number(side.energy(j, t)) << ','
           << format_number(side.loss_real(j, t)) << ','
           << format_number(side.loss_reactive(j, t)) << ','
           << format_number(side.voltage(j, t)) << ','
           << format_number(side.ampacity(j, t)) << ','
           << format_number(side.transformer(j, t)) << ','
           << format_number(side.total(j, t)) << ','
           << format_number(side.solver_dual(j, t)) << ','
           << format_number(gap(j, t)) << '\n';
      }
    }
  }
}

void write_reconciliation_csv(std::ostream& os, const ReconciliationReport& rec) {
  os << "metric,value\n";
  os << "max_rel_gap," << format_number(rec.max_rel_gap) << '\n';
  os << "mean_rel_gap," << format_number(rec.mean_rel_gap) << '\n';
  os << "worst_node," << rec.worst_node << '\n';
  os << "worst_period," << rec.worst_period << '\n';
  os << "worst_kind," << rec.worst_kind << '\n';
  os << "flagged," << rec.flagged << '\n';
  os << "tolerance," << format_number(rec.tolerance) << '\n';
}

void write_sensitivities_csv(std::ostream& os, const SensitivityTensor& tensor,
                             const std::vector<PeriodSensitivities>* fd) {
  os << "period,site,kind,quantity,index,value";
  if (fd) os << ",fd_value,error";
  os << '\n';

  const char* quantity_names[4] = {"dP", "dQ", "dv", "dl"};
  for (std::size_t ti = 0; ti < tensor.periods.size(); ++ti) {
    const PeriodSensitivities& s = tensor.periods[ti];
    const PeriodSensitivities* f = fd ? &(*fd)[ti] : nullptr;
    const int N = static_cast<int>(s.dl_dp.rows());
    const Eigen::MatrixXd* blocks[2][4] = {
        {&s.dP_dp, &s.dQ_dp, &s.dv_dp, &s.dl_dp},
        {&s.dP_dq, &s.dQ_dq, &s.dv_dq, &s.dl_dq}};
    const Eigen::MatrixXd* fd_blocks[2][4] = {
        {f ? &f->dP_dp : nullptr, f ? &f->dQ_dp : nullptr,
         f ? &f->dv_dp : nullptr, f ? &f->dl_dp : nullptr},
        {f ? &f->dP_dq : nullptr, f ? &f->dQ_dq : nullptr,
         f ? &f->dv_dq : nullptr, f ? &f->dl_dq : nullptr}};

    for (int site = 1; site <= N; ++site) {
      for (int kind = 0; kind < 2; ++kind) {
        for (int quantity = 0; quantity < 4; ++quantity) {
          for (int i = 1; i <= N; ++i) {
            const double value = (*blocks[kind][quantity])(i - 1, site - 1);
            os << s.period << ',' << site << ',' << (kind == 0 ? 'p' : 'q')
               << ',' << quantity_names[quantity] << ',' << i << ','
               << format_number(value);
            if (f) {
              const double fv = (*fd_blocks[kind][quantity])(i - 1, site - 1);
              const double scale = std::abs(value) >= 1e-8 ? std::abs(value) : 1.0;
              os << ',' << format_number(fv) << ','
                 << format_number(std::abs(value - fv) / scale);
            }
            os << '\n';
          }
        }
      }
    }
  }
}

void write_thermal_csv(std::ostream& os, const ThermalState& state,
                       const Eigen::VectorXd& load_sq, const TimeGrid& grid) {
  os << "period,load_sq,top_oil_c,hot_spot_c,f_aa_exact,f_aa_piecewise,"
        "loss_of_life_h\n";
  os << "0,," << format_number(state.top_oil[0]) << ",,,,0\n";
  for (int t = 1; t <= grid.periods; ++t) {
    os << t << ',' << format_number(load_sq[t]) << ','
       << format_number(state.top_oil[t]) << ','
       << format_number(state.hotspot[t]) << ','
       << format_number(state.aging_exact[t]) << ','
       << format_number(state.aging_piecewise[t]) << ','
       << format_number(state.loss_of_life_h[t]) << '\n';
  }
}

void write_solve_report_json(std::ostream& os, const SolveReport& report,
                             const FeederModel& model) {
  const int N = static_cast<int>(report.op.l.rows());
  const int T = report.periods;
  const int H = report.horizon_periods;

  json j;
  j["status"] = to_string(report.status);
  j["solver_status"] = report.solver_status;
  j["iterations"] = report.iterations;
  j["horizon"] = {{"mode", to_string(report.horizon)},
                  {"periods", T},
                  {"horizon_periods", H},
                  {"dt_hours", snap(model.grid.dt_hours)}};
  j["costs"] = {{"objective", snap(report.objective)},
                {"real_power", snap(report.real_power_cost)},
                {"reactive_power", snap(report.reactive_power_cost)},
                {"transformer", snap(report.transformer_cost)}};
  j["solver"] = {{"duality_gap", snap(report.duality_gap)},
                 {"primal_residual", snap(report.primal_residual)},
                 {"dual_residual", snap(report.dual_residual)}};
  if (report.status != SolveStatus::Optimal) {
    os << j.dump(2) << '\n';
    return;
  }

  j["exactness"] = {
      {"max_soc_gap", snap(report.exactness.max_soc_gap)},
      {"max_piecewise_gap", snap(report.exactness.max_piecewise_gap)},
      {"max_xi_sum_error", snap(report.exactness.max_xi_sum_error)},
      {"min_binding_segments", report.exactness.min_binding},
      {"max_binding_segments", report.exactness.max_binding}};

  json lambda_p = json::array(), lambda_q = json::array();
  for (int node = 0; node <= N; ++node) {
    lambda_p.push_back(row_series(report.duals.lambda_p, node, 1, T));
    lambda_q.push_back(row_series(report.duals.lambda_q, node, 1, T));
  }
  j["prices"] = {{"lambda_p", lambda_p}, {"lambda_q", lambda_q}};

  json xfmrs = json::array();
  for (std::size_t y = 0; y < model.transformers.size(); ++y) {
    const ThermalState& st = report.thermal[y];
    json entry = {
        {"line", model.transformers[y].line},
        {"rho", report.duals.rho.size() ? snap(report.duals.rho[y]) : 0.0},
        {"f", row_series(report.f_opt, static_cast<int>(y), 1, H)},
        {"h", row_series(report.h_opt, static_cast<int>(y), 0, H)},
        {"top_oil_c", series(st.top_oil, 0, H)},
        {"hot_spot_c", series(st.hotspot, 1, H)},
        {"f_aa_exact", series(st.aging_exact, 1, H)},
        {"loss_of_life_h", snap(st.loss_of_life_h[H])}};
    xfmrs.push_back(entry);
  }
  j["transformers"] = xfmrs;

  json pv = json::array();
  for (std::size_t u = 0; u < model.pvs.size(); ++u) {
    pv.push_back({{"node", model.pvs[u].node},
                  {"p", row_series(report.der.pv_p, static_cast<int>(u), 1, H)},
                  {"q", row_series(report.der.pv_q, static_cast<int>(u), 1, H)}});
  }
  json ev = json::array();
  for (std::size_t u = 0; u < model.evs.size(); ++u) {
    ev.push_back({{"p", row_series(report.der.ev_p, static_cast<int>(u), 1, T)},
                  {"q", row_series(report.der.ev_q, static_cast<int>(u), 1, T)},
                  {"u", row_series(report.der.ev_u, static_cast<int>(u), 0, T)}});
  }
  j["der"] = {{"pv", pv}, {"ev", ev}};

  os << j.dump(2) << '\n';
}

void write_pf_report_json(std::ostream& os, const PowerFlowResult& result,
                          const ResidualReport& residuals) {
  json j;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["worst_sweep_residual"] = snap(result.worst_residual);
  j["residuals"] = {{"real_balance", snap(residuals.real_balance)},
                    {"reactive_balance", snap(residuals.reactive_balance)},
                    {"voltage_drop", snap(residuals.voltage_drop)},
                    {"current_definition", snap(residuals.current_definition)},
                    {"max", snap(residuals.max())}};
  os << j.dump(2) << '\n';
}

}  // namespace dfopf
