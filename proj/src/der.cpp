#include "dfopf/der.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dfopf/errors.hpp"

namespace dfopf {

bool EvItinerary::connected_at(int t) const { return interval_at(t) >= 0; }

int EvItinerary::interval_at(int t) const {
  for (size_t z = 0; z < intervals.size(); ++z)
    if (t > intervals[z].begin && t <= intervals[z].end) return static_cast<int>(z);
  return -1;
}

PvConstraintSet build_pv_constraints(const PvUnit& pv, const TimeGrid& grid) {
  if (pv.insolation.size() != grid.columns())
    throw ValidationError("pv '" + pv.id + "': insolation series must cover periods 0..T");
  if (pv.capacity < 0.0)
    throw ValidationError("pv '" + pv.id + "': capacity must be nonnegative");

  PvConstraintSet out;
  for (int t = 1; t <= grid.periods; ++t) {
    const double rho = pv.insolation[t];
    if (rho < 0.0 || rho > 1.0)
      throw ValidationError("pv '" + pv.id + "': insolation must lie in [0,1]");
    if (rho == 0.0) continue;  // dark period: no variables, output pinned to zero
    out.active_periods.push_back(t);
    out.real_caps.push_back({t, rho * pv.capacity});
    out.cones.push_back({t, pv.capacity});
  }
  return out;
}

EvConstraintSet build_ev_constraints(const EvItinerary& ev, const TimeGrid& grid) {
  const int T = grid.periods;
  if (ev.intervals.empty())
    throw ValidationError("ev '" + ev.id + "': needs at least one parking interval");
  for (size_t z = 0; z < ev.intervals.size(); ++z) {
    const EvInterval& iv = ev.intervals[z];
    if (iv.begin < 0 || iv.end > T || iv.begin > iv.end)
      throw ValidationError("ev '" + ev.id + "': interval boundaries must satisfy 0 <= begin <= end <= T");
    if (z > 0 && iv.begin < ev.intervals[z - 1].end)
      throw ValidationError("ev '" + ev.id + "': intervals overlap or are out of order");
    if (iv.soc_min < 0.0 || iv.soc_min > ev.battery_capacity)
      throw ValidationError("ev '" + ev.id + "': interval soc floor must lie in [0, battery capacity]");
    if (iv.depletion < 0.0)
      throw ValidationError("ev '" + ev.id + "': depletion cannot be negative");
  }
  if (ev.soc_init < 0.0 || ev.soc_init > ev.battery_capacity)
    throw ValidationError("ev '" + ev.id + "': initial soc must lie in [0, battery capacity]");
  if (ev.charger_rating <= 0.0 || ev.charge_rate_max <= 0.0)
    throw ValidationError("ev '" + ev.id + "': charger rating and rate ceiling must be positive");

  EvConstraintSet out;
  const int Z = static_cast<int>(ev.intervals.size());
  for (int z = 0; z < Z; ++z) {
    const EvInterval& iv = ev.intervals[z];

    EvConstraintSet::EnergyBalance bal;
    bal.interval = z;
    bal.t_beg = iv.begin;
    bal.t_end = iv.end;
    for (int t = iv.begin + 1; t <= iv.end; ++t) {
      bal.charge_periods.push_back(t);
      out.charge_periods.push_back(t);
      out.charger.push_back({t, ev.charger_rating, ev.charge_rate_max});
    }
    out.balances.push_back(std::move(bal));

    if (std::find(out.soc_periods.begin(), out.soc_periods.end(), iv.begin) ==
        out.soc_periods.end())
      out.soc_periods.push_back(iv.begin);
    if (std::find(out.soc_periods.begin(), out.soc_periods.end(), iv.end) ==
        out.soc_periods.end())
      out.soc_periods.push_back(iv.end);

    out.bounds.push_back({iv.end, iv.soc_min, ev.battery_capacity});
    if (z + 1 < Z)
      out.depletions.push_back({iv.end, ev.intervals[z + 1].begin, iv.depletion});
  }
  out.fixes.push_back({ev.intervals.front().begin, ev.soc_init});
  std::sort(out.soc_periods.begin(), out.soc_periods.end());
  return out;
}

std::string ev_feasibility_precheck(const EvItinerary& ev, const TimeGrid& grid) {
  // Greedy maximum-charge trajectory: it pointwise-dominates every feasible
  // trajectory (the battery cap saturates monotonically), so each soc floor
  // is achievable iff the greedy trajectory meets it.
  const double rate = std::min(ev.charge_rate_max, ev.charger_rating);
  double u_max = ev.soc_init;
  for (size_t z = 0; z < ev.intervals.size(); ++z) {
    const EvInterval& iv = ev.intervals[z];
    const int periods = iv.end - iv.begin;
    u_max = std::min(ev.battery_capacity, u_max + rate * grid.dt_hours * periods);
    if (u_max + 1e-12 < iv.soc_min) {
      std::ostringstream msg;
      msg << "ev '" << ev.id << "': soc floor " << iv.soc_min << " at period "
          << iv.end << " is unreachable (maximum achievable " << u_max << ")";
      return msg.str();
    }
    u_max -= iv.depletion;
    if (u_max < -1e-12) {
      std::ostringstream msg;
      msg << "ev '" << ev.id << "': depletion after interval " << z
          << " exceeds the maximum achievable charge (" << u_max + iv.depletion << ")";
      return msg.str();
    }
    u_max = std::max(u_max, 0.0);
  }
  return {};
}

void aggregate_net_demand(int node_count, const TimeGrid& grid,
                          const std::vector<LoadProfile>& loads,
                          const std::vector<PvUnit>& pvs,
                          const std::vector<EvItinerary>& evs,
                          const DerSchedules& schedules,
                          Eigen::MatrixXd& net_p, Eigen::MatrixXd& net_q) {
  const int cols = grid.columns();
  net_p.setZero(node_count, cols);
  net_q.setZero(node_count, cols);

  for (const auto& ld : loads) {
    if (ld.p.size() != cols || ld.q.size() != cols)
      throw ValidationError("load '" + ld.id + "': series must cover periods 0..T");
    net_p.row(ld.node) += ld.p.transpose();
    net_q.row(ld.node) += ld.q.transpose();
  }

  const bool have_pv = schedules.pv_p.size() > 0;
  for (size_t s = 0; s < pvs.size(); ++s) {
    if (!have_pv) break;
    for (int t = 1; t <= grid.periods; ++t) {
      const double ps = schedules.pv_p(s, t), qs = schedules.pv_q(s, t);
      if (pvs[s].insolation[t] == 0.0 && (ps != 0.0 || qs != 0.0))
        throw ValidationError("pv '" + pvs[s].id + "': schedule produces at a dark period");
      net_p(pvs[s].node, t) -= ps;
      net_q(pvs[s].node, t) -= qs;
    }
  }

  const bool have_ev = schedules.ev_p.size() > 0;
  for (size_t e = 0; e < evs.size(); ++e) {
    if (!have_ev) break;
    for (int t = 1; t <= grid.periods; ++t) {
      const double pe = schedules.ev_p(e, t), qe = schedules.ev_q(e, t);
      const int z = evs[e].interval_at(t);
      if (z < 0 && (pe != 0.0 || qe != 0.0))
        throw ValidationError("ev '" + evs[e].id +
                              "': schedule charges outside every parking interval");
      if (z >= 0) {
        net_p(evs[e].intervals[z].node, t) += pe;
        net_q(evs[e].intervals[z].node, t) += qe;
      }
    }
  }

  net_p.row(0).setZero();
  net_q.row(0).setZero();
}

}  // namespace dfopf
