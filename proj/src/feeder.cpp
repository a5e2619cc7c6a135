#include "dfopf/feeder.hpp"

#include <algorithm>
#include <set>

#include "dfopf/errors.hpp"

namespace dfopf {

std::vector<int> FeederTopology::path_to_root(int node) const {
  std::vector<int> path;
  int j = node;
  while (j != 0) {
    path.push_back(j - 1);
    j = lines[j - 1].parent;
  }
  return path;
}

int FeederTopology::node_index(const std::string& id) const {
  auto it = std::find(node_ids.begin(), node_ids.end(), id);
  return it == node_ids.end() ? -1 : static_cast<int>(it - node_ids.begin());
}

void validate_topology(const FeederTopology& topo) {
  const int n_nodes = topo.node_count();
  if (n_nodes < 2) throw ValidationError("feeder needs a root and at least one load node");
  if (topo.line_count() != n_nodes - 1)
    throw ValidationError("radial feeder must have exactly one line per non-root node");

  std::set<std::string> seen;
  for (const auto& id : topo.node_ids)
    if (!seen.insert(id).second)
      throw ValidationError("duplicate node id '" + id + "'");

  for (int j = 1; j < n_nodes; ++j) {
    const Line& ln = topo.lines[j - 1];
    if (ln.child != j)
      throw ValidationError("line '" + ln.id + "' is not stored in child order");
    if (ln.parent < 0 || ln.parent >= n_nodes)
      throw ValidationError("line '" + ln.id + "' references an unknown parent");
    if (ln.parent >= ln.child)
      throw ValidationError("node ordering is not topological at line '" + ln.id + "'");
    if (ln.r < 0.0 || ln.x < 0.0)
      throw ValidationError("line '" + ln.id + "' has a negative impedance");
    if (ln.r == 0.0 && ln.x == 0.0)
      throw ValidationError("line '" + ln.id + "' has zero impedance");
    if (ln.l_max <= 0.0)
      throw ValidationError("line '" + ln.id + "' needs a positive ampacity");
  }

  // Reachability: parent<child plus one-line-per-node already forces a tree
  // rooted at 0, but verify the walk terminates for defensive clarity.
  for (int j = 1; j < n_nodes; ++j) {
    int hops = 0;
    for (int k = j; k != 0; k = topo.lines[k - 1].parent)
      if (++hops > n_nodes)
        throw ValidationError("cycle detected while walking from node '" +
                              topo.node_ids[j] + "' to the root");
  }

  if (topo.v_min.size() != n_nodes || topo.v_max.size() != n_nodes)
    throw ValidationError("voltage bound arrays must cover every node");
  for (int j = 0; j < n_nodes; ++j) {
    if (topo.v_min[j] <= 0.0 || topo.v_max[j] <= topo.v_min[j])
      throw ValidationError("node '" + topo.node_ids[j] +
                            "' needs 0 < v_min < v_max");
  }

  for (int li : topo.transformer_lines) {
    if (li < 0 || li >= topo.line_count() || !topo.lines[li].is_transformer)
      throw ValidationError("transformer registry points at a non-transformer line");
  }
}

}  // namespace dfopf
