#pragma once

#include <cmath>

namespace dfopf {

// Planning horizon: T periods of equal length dt, indexed t in {0, 1, ..., T}.
// Index 0 is the initial-condition slot (top-oil temperature at the start of
// the day, initial EV state of charge); operating periods are 1..T.
//
// Every per-period array in this codebase is sized T+1 with column/entry 0
// reserved for the initial slot, so that "period t" always means index t.
// Quantities with no initial-condition meaning simply leave index 0 unused.
struct TimeGrid {
  int periods = 24;       // T
  double dt_hours = 1.0;  // period length: 1.0, 0.5 or 0.25 hours

  int columns() const { return periods + 1; }
};

inline bool valid_dt(double dt_hours) {
  return std::abs(dt_hours - 1.0) < 1e-12 || std::abs(dt_hours - 0.5) < 1e-12 ||
         std::abs(dt_hours - 0.25) < 1e-12;
}

}  // namespace dfopf
