#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dfopf/errors.hpp"
#include "dfopf/feeder_io.hpp"
#include "test_helpers.hpp"

using namespace dfopf;

namespace {

// Four nodes in a Y: root feeds a; a feeds b and c. Listed shuffled on
// purpose so the loader has to relabel topologically.
const char* kStarJson = R"json({
  "bases": {"mva": 1.0, "kv": 4.16},
  "time_grid": {"periods": 2, "dt_hours": 1.0},
  "nodes": [
    {"id": "b"}, {"id": "root"}, {"id": "c", "vmin_pu": 0.93, "vmax_pu": 1.07},
    {"id": "a"}
  ],
  "lines": [
    {"id": "Lab", "from": "a", "to": "b", "r_pu": 0.02, "x_pu": 0.01, "l_max_pu2": 4.0},
    {"id": "Lra", "from": "root", "to": "a", "r_pu": 0.01, "x_pu": 0.02, "l_max_pu2": 9.0},
    {"id": "Lac", "from": "a", "to": "c", "r_pu": 0.03, "x_pu": 0.015, "l_max_pu2": 1.0}
  ],
  "costs": {"energy_mwh": [40.0, 50.0]},
  "loads": [
    {"id": "db", "node": "b", "p_mw": [0.1, 0.2], "q_mvar": [0.05, 0.1]}
  ]
})json";

}  // namespace

TEST_CASE("loader: topological relabeling and id preservation") {
  const FeederModel m = parse_feeder(kStarJson, "star");
  const FeederTopology& topo = m.topology;

  REQUIRE(topo.node_count() == 4);
  CHECK(topo.node_ids[0] == "root");
  CHECK(topo.node_ids[1] == "a");
  // BFS order after 'a': its children in line order (b before c).
  CHECK(topo.node_ids[2] == "b");
  CHECK(topo.node_ids[3] == "c");

  for (const Line& ln : topo.lines) CHECK(ln.parent < ln.child);
  CHECK(topo.line_into(1).id == "Lra");
  CHECK(topo.line_into(2).id == "Lab");
  CHECK(topo.line_into(3).id == "Lac");
  CHECK(topo.children[1] == std::vector<int>{2, 3});

  // Custom voltage bounds survive the relabeling, squared.
  CHECK(topo.v_min[3] == doctest::Approx(0.93 * 0.93).epsilon(1e-15));
  CHECK(topo.v_max[3] == doctest::Approx(1.07 * 1.07).epsilon(1e-15));
  // Defaults elsewhere.
  CHECK(topo.v_min[1] == doctest::Approx(0.95 * 0.95).epsilon(1e-15));

  // Load landed on the relabeled node index for "b".
  REQUIRE(m.loads.size() == 1);
  CHECK(m.loads[0].node == 2);
  CHECK(m.loads[0].p[1] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(m.loads[0].p[2] == doctest::Approx(0.2).epsilon(1e-15));

  // Prices converted from $/MWh to $/p.u./h on a 1 MVA base: equal numbers.
  CHECK(m.costs.c_p[1] == doctest::Approx(40.0).epsilon(1e-15));
  CHECK(m.costs.c_p[2] == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(m.costs.c_q[1] == 0.0);
}

TEST_CASE("path_to_root walks nearest line first") {
  const FeederModel m = parse_feeder(kStarJson, "star");
  CHECK(m.topology.path_to_root(3) == std::vector<int>{2, 0});
  CHECK(m.topology.path_to_root(2) == std::vector<int>{1, 0});
  CHECK(m.topology.path_to_root(1) == std::vector<int>{0});
  CHECK(m.topology.path_to_root(0).empty());
}

TEST_CASE("loader: physical units convert to per-unit and round-trip") {
  const double z_base = 4.16 * 4.16 / 2.0;          // ohm on a 2 MVA base
  const double i_base_a = 2.0 / 4.16 * 1000.0;      // amps
  const double r_ohm = 0.01 * z_base;
  const double amps = 2.0 * i_base_a;               // 2 p.u. current -> l_max 4
  std::ostringstream text;
  text.precision(17);
  text << R"json({
    "bases": {"mva": 2.0, "kv": 4.16},
    "time_grid": {"periods": 1},
    "nodes": [{"id": "r"}, {"id": "n"}],
    "lines": [{"id": "L", "from": "r", "to": "n", "r_ohm": )json"
       << r_ohm << R"json(, "x_ohm": 0.1, "ampacity_a": )json" << amps << R"json(}],
    "costs": {"energy_mwh": [10.0]},
    "loads": [{"id": "d", "node": "n", "p_mw": [0.5], "q_mvar": [0.0]}]
  })json";
  const FeederModel m = parse_feeder(text.str(), "units");
  const Line& ln = m.topology.lines[0];
  CHECK(std::abs(ln.r - 0.01) <= 1e-12 * 0.01);
  CHECK(std::abs(ln.l_max - 4.0) <= 1e-12 * 4.0);
  // Round trip back to physical units.
  CHECK(std::abs(ln.r * m.topology.bases.impedance_ohm() - r_ohm) <= 1e-12 * r_ohm);
  CHECK(std::abs(std::sqrt(ln.l_max) * m.topology.bases.current_ka() * 1000.0 - amps) <=
        1e-12 * amps);
  // Load in MW on a 2 MVA base.
  CHECK(m.loads[0].p[1] == doctest::Approx(0.25).epsilon(1e-15));
  // Price in $/MWh -> $/p.u./h multiplies by the MVA base.
  CHECK(m.costs.c_p[1] == doctest::Approx(20.0).epsilon(1e-15));
}

TEST_CASE("loader: determinism") {
  const FeederModel a = parse_feeder(kStarJson, "star");
  const FeederModel b = parse_feeder(kStarJson, "star");
  CHECK(a.topology.node_ids == b.topology.node_ids);
  CHECK(a.topology.v_min == b.topology.v_min);
  CHECK(a.costs.c_p == b.costs.c_p);
  for (int j = 0; j < a.topology.line_count(); ++j) {
    CHECK(a.topology.lines[j].r == b.topology.lines[j].r);
    CHECK(a.topology.lines[j].x == b.topology.lines[j].x);
  }
}

TEST_CASE("loader: error taxonomy") {
  CHECK_THROWS_AS(parse_feeder("{ not json", "bad"), ParseError);
  CHECK_THROWS_AS(parse_feeder("[]", "bad"), ParseError);

  // Missing required field -> ParseError naming it.
  CHECK_THROWS_WITH_AS(
      parse_feeder(R"({"bases": {"mva": 1.0}, "time_grid": {"periods": 1}})", "f"),
      doctest::Contains("'kv'"), ParseError);

  // Series length mismatch.
  const char* short_series = R"json({
    "bases": {"mva": 1.0, "kv": 4.16},
    "time_grid": {"periods": 3},
    "nodes": [{"id": "r"}, {"id": "n"}],
    "lines": [{"id": "L", "from": "r", "to": "n", "r_pu": 0.01, "x_pu": 0.01, "l_max_pu2": 1.0}],
    "costs": {"energy_mwh": [10.0, 11.0]},
    "loads": []
  })json";
  CHECK_THROWS_AS(parse_feeder(short_series, "f"), ParseError);

  // Cyclic topology: the documented validation error names a node.
  CHECK_THROWS_WITH_AS(load_feeder(testing::fixture_path("cyclic.json")),
                       doctest::Contains("not reachable"), ValidationError);

  // Duplicate node ids.
  const char* dup = R"json({
    "bases": {"mva": 1.0, "kv": 4.16},
    "time_grid": {"periods": 1},
    "nodes": [{"id": "r"}, {"id": "r"}],
    "lines": [{"id": "L", "from": "r", "to": "r", "r_pu": 0.01, "x_pu": 0.0, "l_max_pu2": 1.0}],
    "costs": {"energy_mwh": [10.0]}
  })json";
  CHECK_THROWS_AS(parse_feeder(dup, "f"), ValidationError);

  CHECK_THROWS_AS(load_feeder("/nonexistent/feeder.json"), IoError);
}

TEST_CASE("validate_topology: rejects structural defects directly") {
  FeederTopology topo = testing::two_node_topology();
  CHECK_NOTHROW(validate_topology(topo));

  FeederTopology zero_z = testing::two_node_topology(0.0, 0.0);
  CHECK_THROWS_AS(validate_topology(zero_z), ValidationError);

  FeederTopology bad_bounds = testing::two_node_topology();
  bad_bounds.v_min[1] = 1.2;
  bad_bounds.v_max[1] = 0.8;
  CHECK_THROWS_AS(validate_topology(bad_bounds), ValidationError);
}
