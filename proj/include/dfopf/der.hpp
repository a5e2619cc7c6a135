#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dfopf/time_grid.hpp"

namespace dfopf {

// Inflexible demand at one node. Series are per-unit, size T+1, entry 0 unused.
struct LoadProfile {
  std::string id;
  int node = -1;
  Eigen::VectorXd p;  // real, p.u.
  Eigen::VectorXd q;  // reactive, p.u.
};

// PV with a smart inverter: per period, real output 0 <= p <= rho_t * capacity
// and apparent power p^2 + q^2 <= capacity^2 (reactive either sign). Periods
// with rho_t = 0 contribute no variables at all.
struct PvUnit {
  std::string id;
  int node = -1;
  double capacity = 0.0;      // inverter rating, p.u.
  Eigen::VectorXd insolation; // rho_t in [0,1], size T+1, entry 0 unused
};

// One parking interval of an EV: connected at `node` during periods
// begin+1 .. end (boundaries are period indices in 0..T, begin <= end).
// soc_min applies to the state of charge at the interval's end; depletion is
// the energy drawn while driving to the NEXT interval.
struct EvInterval {
  int node = -1;
  int begin = 0;
  int end = 0;
  double soc_min = 0.0;    // p.u.h, floor on u at `end`
  double depletion = 0.0;  // p.u.h consumed after this interval
};

struct EvItinerary {
  std::string id;
  double battery_capacity = 0.0;  // p.u.h
  double charger_rating = 0.0;    // apparent-power cone radius, p.u.
  double charge_rate_max = 0.0;   // real-power ceiling per period, p.u.
  double soc_init = 0.0;          // u at the first interval's begin, p.u.h
  std::vector<EvInterval> intervals;  // time-ordered, non-overlapping

  bool connected_at(int t) const;     // is period t inside some interval?
  int interval_at(int t) const;       // index of that interval, or -1
};

// ---- constraint-set descriptors ----------------------------------------
// The optimization assembly consumes these; tests inspect them directly.

struct PvConstraintSet {
  struct RealCap { int t; double p_max; };       // p_t <= rho_t * capacity
  struct ApparentCone { int t; double radius; }; // ||(p_t, q_t)|| <= radius
  std::vector<int> active_periods;          // periods with rho_t > 0
  std::vector<RealCap> real_caps;           // one per active period
  std::vector<ApparentCone> cones;          // one per active period
};

struct EvConstraintSet {
  struct SocFix { int t; double value; };                 // u_t = value
  struct EnergyBalance {                                  // u_end = u_beg + dt * sum p
    int interval;
    int t_beg, t_end;
    std::vector<int> charge_periods;
  };
  struct Depletion { int t_from, t_to; double delta; };   // u_to = u_from - delta
  struct SocBound { int t; double u_min, u_max; };        // at interval ends
  struct ChargerLimit { int t; double cone_radius, rate_max; };

  std::vector<int> soc_periods;          // periods where u is a variable
  std::vector<int> charge_periods;       // periods where p,q are variables
  std::vector<SocFix> fixes;             // initial condition
  std::vector<EnergyBalance> balances;   // one per interval with charging periods
  std::vector<Depletion> depletions;     // between consecutive intervals
  std::vector<SocBound> bounds;          // one per interval end
  std::vector<ChargerLimit> charger;     // one per connected period
};

PvConstraintSet build_pv_constraints(const PvUnit& pv, const TimeGrid& grid);
EvConstraintSet build_ev_constraints(const EvItinerary& ev, const TimeGrid& grid);

// Cheap necessary-and-sufficient feasibility check of one itinerary against
// its own battery limits (ignores network constraints): propagate the
// greedy maximum-charge state of charge and test every floor against it.
// Returns an explanation for the first violated requirement, empty if fine.
std::string ev_feasibility_precheck(const EvItinerary& ev, const TimeGrid& grid);

// Nodal net demand p_j,t = sum of loads + EV charging - PV output, given
// fixed DER schedules. Matrices are (N+1) x (T+1); row 0 (root) stays zero.
// Schedules may be empty (treated as all-zero). Throws ValidationError if a
// schedule charges an EV outside its intervals or runs a PV at rho = 0.
struct DerSchedules {
  // one column set per unit, sized like the grid; zero where inactive
  Eigen::MatrixXd pv_p, pv_q;  // units x (T+1)
  Eigen::MatrixXd ev_p, ev_q;  // units x (T+1)
  Eigen::MatrixXd ev_u;        // units x (T+1), NaN where u is undefined
};

void aggregate_net_demand(int node_count, const TimeGrid& grid,
                          const std::vector<LoadProfile>& loads,
                          const std::vector<PvUnit>& pvs,
                          const std::vector<EvItinerary>& evs,
                          const DerSchedules& schedules,
                          Eigen::MatrixXd& net_p, Eigen::MatrixXd& net_q);

}  // namespace dfopf
