#include "dfopf/feeder_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "dfopf/errors.hpp"

namespace dfopf {

using nlohmann::json;

namespace {

[[noreturn]] void fail_parse(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    fail_parse(where, "missing field '" + key + "'");
  return obj.at(key);
}

double require_number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) fail_parse(where, "field '" + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback,
                 const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) fail_parse(where, "field '" + key + "' must be a number");
  return obj.at(key).get<double>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) fail_parse(where, "field '" + key + "' must be a string");
  return v.get<std::string>();
}

// Physical-units field with an optional per-unit alternative. Exactly one of
// the two spellings must be present; `scale` converts physical to per-unit.
double physical_or_pu(const json& obj, const std::string& phys_key,
                      const std::string& pu_key, double scale, const std::string& where) {
  const bool has_phys = obj.is_object() && obj.contains(phys_key);
  const bool has_pu = obj.is_object() && obj.contains(pu_key);
  if (has_phys == has_pu)
    fail_parse(where, "exactly one of '" + phys_key + "' / '" + pu_key + "' is required");
  return has_phys ? require_number(obj, phys_key, where) / scale
                  : require_number(obj, pu_key, where);
}

// Period series of length T (one entry per operating period). Returned with
// T+1 entries; entry 0 is a copy of entry 1 so initialization contexts (e.g.
// ambient temperature at t=0) have a value.
Eigen::VectorXd require_series(const json& obj, const std::string& key, int periods,
                               double scale, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_array() || static_cast<int>(v.size()) != periods)
    fail_parse(where, "field '" + key + "' must be an array of length " +
                          std::to_string(periods));
  Eigen::VectorXd out(periods + 1);
  for (int t = 0; t < periods; ++t) {
    if (!v[t].is_number())
      fail_parse(where, "field '" + key + "' must contain numbers only");
    out[t + 1] = v[t].get<double>() / scale;
  }
  out[0] = out[1];
  return out;
}

Eigen::VectorXd series_or_pu(const json& obj, const std::string& phys_key,
                             const std::string& pu_key, int periods, double scale,
                             const std::string& where) {
  const bool has_phys = obj.is_object() && obj.contains(phys_key);
  const bool has_pu = obj.is_object() && obj.contains(pu_key);
  if (has_phys == has_pu)
    fail_parse(where, "exactly one of '" + phys_key + "' / '" + pu_key + "' is required");
  return has_phys ? require_series(obj, phys_key, periods, scale, where)
                  : require_series(obj, pu_key, periods, 1.0, where);
}

ThermalParams parse_thermal(const json& xf, const UnitBases& bases,
                            const Eigen::VectorXd& shared_ambient, int periods,
                            const std::string& where) {
  ThermalParams tp;
  tp.loss_ratio = number_or(xf, "loss_ratio", 5.0, where);
  tp.rated_to_rise = number_or(xf, "rated_to_rise_c", 55.0, where);
  tp.rated_hs_rise = number_or(xf, "rated_hs_rise_c", 25.0, where);
  tp.tau_to_hours = number_or(xf, "tau_to_hours", 3.0, where);
  tp.tau_winding_min = number_or(xf, "tau_winding_min", 4.0, where);
  tp.k1 = number_or(xf, "k1", 1.0, where);
  tp.n = number_or(xf, "n", 0.8, where);
  tp.m = number_or(xf, "m", 0.8, where);

  if (xf.contains("rated_mva") == xf.contains("l_rated_pu2"))
    fail_parse(where, "exactly one of 'rated_mva' / 'l_rated_pu2' is required");
  if (xf.contains("rated_mva")) {
    const double s = require_number(xf, "rated_mva", where) / bases.mva;
    tp.l_rated = s * s;  // squared current at rated apparent power and 1 p.u. voltage
  } else {
    tp.l_rated = require_number(xf, "l_rated_pu2", where);
  }

  if (xf.contains("theta_to_init_c")) tp.theta_to_init = require_number(xf, "theta_to_init_c", where);
  if (xf.contains("l_init_pu2")) tp.l_init = require_number(xf, "l_init_pu2", where);

  tp.ambient = xf.contains("ambient_c")
                   ? require_series(xf, "ambient_c", periods, 1.0, where)
                   : shared_ambient;
  if (tp.ambient.size() == 0)
    fail_parse(where, "no ambient series: provide 'ambient_c' here or a top-level one");
  return tp;
}

}  // namespace

FeederModel parse_feeder(const std::string& json_text, const std::string& source) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": invalid JSON: " + e.what());
  }
  if (!root.is_object()) throw ParseError(source + ": top level must be an object");

  FeederModel model;

  // --- bases and grid ---
  const json& jb = require(root, "bases", source);
  model.topology.bases.mva = require_number(jb, "mva", source + ".bases");
  model.topology.bases.kv = require_number(jb, "kv", source + ".bases");
  if (model.topology.bases.mva <= 0.0 || model.topology.bases.kv <= 0.0)
    throw ValidationError(source + ".bases: mva and kv must be positive");
  const UnitBases& bases = model.topology.bases;

  const json& jg = require(root, "time_grid", source);
  model.grid.periods = static_cast<int>(require_number(jg, "periods", source + ".time_grid"));
  model.grid.dt_hours = number_or(jg, "dt_hours", 1.0, source + ".time_grid");
  if (model.grid.periods < 1)
    throw ValidationError(source + ".time_grid: periods must be >= 1");
  if (!valid_dt(model.grid.dt_hours))
    throw ValidationError(source + ".time_grid: dt_hours must be 1.0, 0.5 or 0.25");
  const int T = model.grid.periods;

  // --- nodes (original order; relabeled topologically below) ---
  const json& jn = require(root, "nodes", source);
  if (!jn.is_array() || jn.size() < 2)
    fail_parse(source, "'nodes' must be an array with at least two entries");
  const int n_nodes = static_cast<int>(jn.size());
  std::vector<std::string> raw_ids(n_nodes);
  Eigen::VectorXd raw_vmin(n_nodes), raw_vmax(n_nodes);
  std::map<std::string, int> id_to_raw;
  for (int i = 0; i < n_nodes; ++i) {
    const std::string where = source + ".nodes[" + std::to_string(i) + "]";
    raw_ids[i] = require_string(jn[i], "id", where);
    const double vmin = number_or(jn[i], "vmin_pu", 0.95, where);
    const double vmax = number_or(jn[i], "vmax_pu", 1.05, where);
    raw_vmin[i] = vmin * vmin;
    raw_vmax[i] = vmax * vmax;
    if (!id_to_raw.emplace(raw_ids[i], i).second)
      throw ValidationError(source + ": duplicate node id '" + raw_ids[i] + "'");
  }
  auto resolve_node = [&](const std::string& id, const std::string& where) {
    auto it = id_to_raw.find(id);
    if (it == id_to_raw.end())
      throw ValidationError(where + ": unknown node '" + id + "'");
    return it->second;
  };

  // --- lines (raw endpoints) ---
  const json& jl = require(root, "lines", source);
  if (!jl.is_array()) fail_parse(source, "'lines' must be an array");
  struct RawLine {
    std::string id;
    int from, to;
    double r, x, l_max;
    const json* xf;
  };
  std::vector<RawLine> raw_lines;
  std::vector<int> indegree(n_nodes, 0);
  for (size_t i = 0; i < jl.size(); ++i) {
    const std::string where = source + ".lines[" + std::to_string(i) + "]";
    RawLine rl;
    rl.id = require_string(jl[i], "id", where);
    rl.from = resolve_node(require_string(jl[i], "from", where), where);
    rl.to = resolve_node(require_string(jl[i], "to", where), where);
    rl.r = physical_or_pu(jl[i], "r_ohm", "r_pu", bases.impedance_ohm(), where);
    rl.x = physical_or_pu(jl[i], "x_ohm", "x_pu", bases.impedance_ohm(), where);
    if (jl[i].contains("ampacity_a")) {
      const double amps = require_number(jl[i], "ampacity_a", where);
      const double i_pu = amps / (bases.current_ka() * 1000.0);
      rl.l_max = i_pu * i_pu;
    } else {
      rl.l_max = require_number(jl[i], "l_max_pu2", where);
    }
    rl.xf = jl[i].contains("transformer") ? &jl[i].at("transformer") : nullptr;
    raw_lines.push_back(rl);
    indegree[rl.to]++;
  }
  if (static_cast<int>(raw_lines.size()) != n_nodes - 1)
    throw ValidationError(source + ": a radial feeder over " + std::to_string(n_nodes) +
                          " nodes needs exactly " + std::to_string(n_nodes - 1) + " lines");

  // --- identify the root and order nodes topologically (BFS) ---
  int raw_root = -1;
  for (int i = 0; i < n_nodes; ++i) {
    if (indegree[i] == 0) {
      if (raw_root >= 0)
        throw ValidationError(source + ": nodes '" + raw_ids[raw_root] + "' and '" +
                              raw_ids[i] + "' are both unfed; exactly one root allowed");
      raw_root = i;
    } else if (indegree[i] > 1) {
      throw ValidationError(source + ": node '" + raw_ids[i] +
                            "' is fed by more than one line");
    }
  }
  if (raw_root < 0)
    throw ValidationError(source + ": no root found (every node is fed; topology is cyclic)");

  std::vector<std::vector<std::pair<int, int>>> out_edges(n_nodes);  // (to, line)
  for (size_t i = 0; i < raw_lines.size(); ++i)
    out_edges[raw_lines[i].from].push_back({raw_lines[i].to, static_cast<int>(i)});

  std::vector<int> order, new_index(n_nodes, -1);
  std::queue<int> frontier;
  frontier.push(raw_root);
  new_index[raw_root] = 0;
  order.push_back(raw_root);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (auto [to, li] : out_edges[u]) {
      if (new_index[to] >= 0)
        throw ValidationError(source + ": cycle detected at node '" + raw_ids[to] + "'");
      new_index[to] = static_cast<int>(order.size());
      order.push_back(to);
      frontier.push(to);
    }
  }
  if (static_cast<int>(order.size()) != n_nodes) {
    for (int i = 0; i < n_nodes; ++i)
      if (new_index[i] < 0)
        throw ValidationError(source + ": node '" + raw_ids[i] +
                              "' is not reachable from the root (cyclic or disconnected)");
  }

  FeederTopology& topo = model.topology;
  topo.node_ids.resize(n_nodes);
  topo.v_min.resize(n_nodes);
  topo.v_max.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    topo.node_ids[new_index[i]] = raw_ids[i];
    topo.v_min[new_index[i]] = raw_vmin[i];
    topo.v_max[new_index[i]] = raw_vmax[i];
  }
  topo.lines.resize(n_nodes - 1);
  topo.children.assign(n_nodes, {});
  std::vector<const json*> xf_blocks;  // per transformer, in line order
  for (const RawLine& rl : raw_lines) {
    Line ln;
    ln.id = rl.id;
    ln.parent = new_index[rl.from];
    ln.child = new_index[rl.to];
    ln.r = rl.r;
    ln.x = rl.x;
    ln.l_max = rl.l_max;
    ln.is_transformer = rl.xf != nullptr;
    topo.lines[ln.child - 1] = ln;
    topo.children[ln.parent].push_back(ln.child);
  }
  for (auto& kids : topo.children) std::sort(kids.begin(), kids.end());

  // --- shared ambient (optional at top level) ---
  Eigen::VectorXd shared_ambient;
  if (root.contains("ambient_c"))
    shared_ambient = require_series(root, "ambient_c", T, 1.0, source);

  // --- transformers, in child order of their lines ---
  Eigen::VectorXd xf_costs(0);
  for (int j = 1; j < n_nodes; ++j) {
    Line& ln = topo.lines[j - 1];
    if (!ln.is_transformer) continue;
    // find the raw block again (lines were reordered)
    const json* xf = nullptr;
    for (const RawLine& rl : raw_lines)
      if (rl.id == ln.id) xf = rl.xf;
    const std::string where = source + ".lines('" + ln.id + "').transformer";
    ln.transformer_index = static_cast<int>(topo.transformer_lines.size());
    topo.transformer_lines.push_back(j - 1);

    TransformerThermal tt;
    tt.line = j - 1;
    tt.params = parse_thermal(*xf, bases, shared_ambient, T, where);
    model.transformers.push_back(std::move(tt));

    xf_costs.conservativeResize(xf_costs.size() + 1);
    xf_costs[xf_costs.size() - 1] = require_number(*xf, "cost_per_hour", where);
    xf_blocks.push_back(xf);
  }

  // --- costs ---
  const json& jc = require(root, "costs", source);
  model.costs.c_p = series_or_pu(jc, "energy_mwh", "energy_pu", T, 1.0 / bases.mva,
                                 source + ".costs");
  if (jc.contains("reactive_mvarh") || jc.contains("reactive_pu")) {
    model.costs.c_q = series_or_pu(jc, "reactive_mvarh", "reactive_pu", T,
                                   1.0 / bases.mva, source + ".costs");
  } else {
    model.costs.c_q = Eigen::VectorXd::Zero(T + 1);
  }
  model.costs.c_p[0] = model.costs.c_q[0] = 0.0;
  model.costs.c_xfmr = xf_costs;

  // --- root voltage (magnitude p.u., scalar or per-period array) ---
  model.root_v.setConstant(T + 1, 1.0);
  if (root.contains("root_voltage_pu")) {
    const json& rv = root.at("root_voltage_pu");
    if (rv.is_number()) {
      const double u = rv.get<double>();
      model.root_v.setConstant(u * u);
    } else {
      Eigen::VectorXd u = require_series(root, "root_voltage_pu", T, 1.0, source);
      model.root_v = u.array().square();
    }
  }

  // --- loads ---
  if (root.contains("loads")) {
    const json& jd = require(root, "loads", source);
    if (!jd.is_array()) fail_parse(source, "'loads' must be an array");
    for (size_t i = 0; i < jd.size(); ++i) {
      const std::string where = source + ".loads[" + std::to_string(i) + "]";
      LoadProfile ld;
      ld.id = require_string(jd[i], "id", where);
      ld.node = new_index[resolve_node(require_string(jd[i], "node", where), where)];
      if (ld.node == 0)
        throw ValidationError(where + ": loads cannot sit on the root node");
      ld.p = series_or_pu(jd[i], "p_mw", "p_pu", T, bases.mva, where);
      ld.q = series_or_pu(jd[i], "q_mvar", "q_pu", T, bases.mva, where);
      ld.p[0] = ld.q[0] = 0.0;
      model.loads.push_back(std::move(ld));
    }
  }

  // --- pv ---
  if (root.contains("pv")) {
    const json& jp = require(root, "pv", source);
    if (!jp.is_array()) fail_parse(source, "'pv' must be an array");
    for (size_t i = 0; i < jp.size(); ++i) {
      const std::string where = source + ".pv[" + std::to_string(i) + "]";
      PvUnit pv;
      pv.id = require_string(jp[i], "id", where);
      pv.node = new_index[resolve_node(require_string(jp[i], "node", where), where)];
      if (pv.node == 0) throw ValidationError(where + ": pv cannot sit on the root node");
      pv.capacity = physical_or_pu(jp[i], "capacity_mva", "capacity_pu", bases.mva, where);
      pv.insolation = require_series(jp[i], "insolation", T, 1.0, where);
      pv.insolation[0] = 0.0;
      build_pv_constraints(pv, model.grid);  // validates ranges
      model.pvs.push_back(std::move(pv));
    }
  }

  // --- ev ---
  if (root.contains("ev")) {
    const json& je = require(root, "ev", source);
    if (!je.is_array()) fail_parse(source, "'ev' must be an array");
    for (size_t i = 0; i < je.size(); ++i) {
      const std::string where = source + ".ev[" + std::to_string(i) + "]";
      EvItinerary ev;
      ev.id = require_string(je[i], "id", where);
      ev.battery_capacity =
          physical_or_pu(je[i], "battery_mwh", "battery_puh", bases.mva, where);
      ev.charger_rating =
          physical_or_pu(je[i], "charger_mva", "charger_pu", bases.mva, where);
      ev.charge_rate_max =
          physical_or_pu(je[i], "max_rate_mw", "max_rate_pu", bases.mva, where);
      ev.soc_init = physical_or_pu(je[i], "soc_init_mwh", "soc_init_puh", bases.mva, where);
      const json& jiv = require(je[i], "intervals", where);
      if (!jiv.is_array() || jiv.empty())
        fail_parse(where, "'intervals' must be a non-empty array");
      for (size_t z = 0; z < jiv.size(); ++z) {
        const std::string wz = where + ".intervals[" + std::to_string(z) + "]";
        EvInterval iv;
        iv.node = new_index[resolve_node(require_string(jiv[z], "node", wz), wz)];
        if (iv.node == 0) throw ValidationError(wz + ": ev cannot park on the root node");
        iv.begin = static_cast<int>(require_number(jiv[z], "begin", wz));
        iv.end = static_cast<int>(require_number(jiv[z], "end", wz));
        if (jiv[z].contains("soc_min_mwh") || jiv[z].contains("soc_min_puh"))
          iv.soc_min = physical_or_pu(jiv[z], "soc_min_mwh", "soc_min_puh", bases.mva, wz);
        if (jiv[z].contains("depletion_mwh") || jiv[z].contains("depletion_puh"))
          iv.depletion = physical_or_pu(jiv[z], "depletion_mwh", "depletion_puh", bases.mva, wz);
        ev.intervals.push_back(iv);
      }
      build_ev_constraints(ev, model.grid);  // validates shape
      const std::string verdict = ev_feasibility_precheck(ev, model.grid);
      if (!verdict.empty()) throw ValidationError(source + ": " + verdict);
      model.evs.push_back(std::move(ev));
    }
  }

  validate_topology(topo);
  return model;
}

FeederModel load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feeder file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_feeder(buf.str(), path);
}

}  // namespace dfopf
