#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dfopf/time_grid.hpp"

namespace dfopf {

// Single-phase-equivalent per-unit bases for the whole feeder.
// Z_base = kV^2 / MVA, I_base = MVA / kV. Voltage and current both appear
// squared in the branch-flow model, so the squared bases are what matter:
//   v = (V / V_base)^2,  l = (I / I_base)^2.
struct UnitBases {
  double mva = 1.0;
  double kv = 1.0;

  double impedance_ohm() const { return kv * kv / mva; }
  double current_ka() const { return mva / kv; }
};

// Directed line of the radial feeder, parent -> child. Lines are stored in
// child order: lines[j-1] is the unique line feeding node j. All electrical
// quantities are per-unit on the feeder bases.
struct Line {
  std::string id;
  int parent = -1;
  int child = -1;
  double r = 0.0;      // series resistance, p.u.
  double x = 0.0;      // series reactance, p.u.
  double l_max = 0.0;  // ampacity as squared current, p.u.
  bool is_transformer = false;
  int transformer_index = -1;  // position in FeederTopology::transformer_lines
};

// Rooted tree over nodes 0..N, node 0 the substation. Node indices are
// topological (parent < child), which the loader guarantees by relabeling.
struct FeederTopology {
  UnitBases bases;
  std::vector<std::string> node_ids;          // size N+1
  Eigen::VectorXd v_min, v_max;               // squared p.u. bounds, size N+1
  std::vector<Line> lines;                    // size N, lines[j-1] feeds node j
  std::vector<std::vector<int>> children;     // size N+1, child node lists
  std::vector<int> transformer_lines;         // line indices carrying a transformer

  int node_count() const { return static_cast<int>(node_ids.size()); }
  int line_count() const { return static_cast<int>(lines.size()); }

  int parent_of(int node) const { return lines[node - 1].parent; }
  const Line& line_into(int node) const { return lines[node - 1]; }

  // Line indices on the unique path from `node` up to the root, nearest first.
  std::vector<int> path_to_root(int node) const;

  // Index of `id` in node_ids, or -1.
  int node_index(const std::string& id) const;
};

// Prices. c_p / c_q are day-ahead real/reactive energy prices at the
// substation in $ per p.u. per hour (converted from $/MWh on load); c_xfmr
// is the transformer degradation cost in $ per hour of rated-speed aging,
// one entry per transformer.
struct CostInputs {
  Eigen::VectorXd c_p;     // size T+1, entry 0 unused
  Eigen::VectorXd c_q;     // size T+1, entry 0 unused
  Eigen::VectorXd c_xfmr;  // size = number of transformers
};

// Structural validation of an already-built topology: tree shape (every
// non-root node has exactly one feeding line, no cycles, all nodes reachable
// from the root), positive bounds, sane impedances. Throws ValidationError
// naming the offending element.
void validate_topology(const FeederTopology& topo);

}  // namespace dfopf
