#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dfopf/der.hpp"
#include "dfopf/feeder.hpp"
#include "dfopf/thermal.hpp"
#include "dfopf/time_grid.hpp"

namespace dfopf {

// Thermal description of one transformer, tied to its line.
struct TransformerThermal {
  int line = -1;  // index into FeederTopology::lines
  ThermalParams params;
};

// Complete per-unit description of one planning case, as produced by
// load_feeder. Transformer order here matches FeederTopology::transformer_lines
// and CostInputs::c_xfmr.
struct FeederModel {
  TimeGrid grid;
  FeederTopology topology;
  CostInputs costs;
  Eigen::VectorXd root_v;  // substation squared voltage, size T+1, entry 0 unused
  std::vector<LoadProfile> loads;
  std::vector<PvUnit> pvs;
  std::vector<EvItinerary> evs;
  std::vector<TransformerThermal> transformers;
};

}  // namespace dfopf
