#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "dfopf/feeder_io.hpp"
#include "dfopf/reports.hpp"
#include "dfopf/thermal.hpp"
#include "test_helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfopf;
using dfopf::testing::fixture_path;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out, err;
};

// Runs the installed binary with stdout/stderr captured.
CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string tag =
      std::to_string(::getpid()) + "_" + std::to_string(counter++);
  const fs::path out = fs::temp_directory_path() / ("dfopf_cli_out_" + tag);
  const fs::path err = fs::temp_directory_path() / ("dfopf_cli_err_" + tag);
  const std::string cmd = std::string(DFOPF_CLI_PATH) + " " + args + " >" +
                          out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = slurp(out);
  result.err = slurp(err);
  fs::remove(out);
  fs::remove(err);
  return result;
}

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           (stem + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

json error_json(const CliResult& r) {
  REQUIRE_FALSE(r.err.empty());
  return json::parse(r.err);
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("format_number renders 12 significant digits and folds -0") {
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(-1.0 / 3.0) == "-0.333333333333");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(123456789012345.0) == "1.23456789012e+14");
  CHECK(format_number(-2.5e-13) == "-2.5e-13");
}

TEST_CASE("csv writers emit header-only files for empty tables") {
  DlmcBreakdown bd;
  bd.periods = 0;
  for (DlmcSide* side : {&bd.p, &bd.q}) {
    side->energy = side->loss_real = side->loss_reactive = side->voltage =
        side->ampacity = side->transformer = side->total = side->solver_dual =
            Eigen::MatrixXd::Zero(1, 1);
  }
  ReconciliationReport rec;
  rec.gap_p = rec.gap_q = Eigen::MatrixXd::Zero(1, 1);
  std::ostringstream dlmc;
  write_dlmc_csv(dlmc, bd, rec);
  CHECK(dlmc.str() ==
        "node,period,kind,energy,loss_real,loss_reactive,voltage,ampacity,"
        "transformer,total,solver_dual,rel_gap\n");

  SensitivityTensor tensor;
  std::ostringstream sens;
  write_sensitivities_csv(sens, tensor);
  CHECK(sens.str() == "period,site,kind,quantity,index,value\n");

  OperatingPoint op;
  op.v = Eigen::MatrixXd::Zero(1, 1);
  op.l = op.P = op.Q = Eigen::MatrixXd::Zero(0, 1);
  op.p = op.q = Eigen::MatrixXd::Zero(1, 1);
  op.P0 = op.Q0 = Eigen::VectorXd::Zero(1);
  std::ostringstream opcsv;
  write_operating_point_csv(opcsv, op, 0);
  CHECK(opcsv.str() == "period,node,v,p_net,q_net,P,Q,l\n");
}

TEST_CASE("validate accepts the shipped fixtures") {
  for (const char* name : {"feeder2.json", "feeder15.json"}) {
    CliResult r = run_cli("validate --feeder " + fixture_path(name));
    CAPTURE(name);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("valid:") == 0);
  }
  CliResult r15 = run_cli("validate --feeder " + fixture_path("feeder15.json"));
  CHECK(r15.out.find("15 nodes") != std::string::npos);
  CHECK(r15.out.find("24 periods") != std::string::npos);
}

TEST_CASE("validate rejects a cyclic feeder naming the offending node") {
  CliResult r = run_cli("validate --feeder " + fixture_path("cyclic.json"));
  CHECK(r.exit_code == 3);
  json err = error_json(r);
  CHECK(err.at("error") == "validation");
  const std::string message = err.at("message").get<std::string>();
  CHECK(message.find("'b'") != std::string::npos);
  CHECK(message.find("cyclic") != std::string::npos);
}

TEST_CASE("each failure class maps to its own exit code") {
  SUBCASE("io: missing feeder file") {
    CliResult r = run_cli("validate --feeder /nonexistent/feeder.json");
    CHECK(r.exit_code == 6);
    CHECK(error_json(r).at("error") == "io");
  }
  SUBCASE("parse: malformed json") {
    TempDir dir("dfopf_badjson");
    const fs::path bad = dir.path / "bad.json";
    std::ofstream(bad) << "{ this is not json";
    CliResult r = run_cli("validate --feeder " + bad.string());
    CHECK(r.exit_code == 2);
    CHECK(error_json(r).at("error") == "parse");
  }
  SUBCASE("validation: cyclic topology") {
    CliResult r = run_cli("validate --feeder " + fixture_path("cyclic.json"));
    CHECK(r.exit_code == 3);
  }
  SUBCASE("infeasible: unreachable voltage floor") {
    CliResult r =
        run_cli("solve --feeder " + fixture_path("feeder2_infeasible.json"));
    CHECK(r.exit_code == 4);
    CHECK(error_json(r).at("error") == "infeasible");
  }
  SUBCASE("numerical: iteration cap reached") {
    CliResult r = run_cli("solve --max-iterations 1 --feeder " +
                          fixture_path("feeder2.json"));
    CHECK(r.exit_code == 5);
    CHECK(error_json(r).at("error") == "numerical");
  }
  SUBCASE("parse: command-line usage error") {
    CliResult r = run_cli("frobnicate");
    CHECK(r.exit_code == 2);
    CHECK(error_json(r).at("error") == "parse");
  }
}

TEST_CASE("pf writes a convergence report") {
  CliResult r = run_cli("pf --feeder " + fixture_path("feeder2.json"));
  CHECK(r.exit_code == 0);
  json report = json::parse(r.out);
  CHECK(report.at("converged") == true);
  CHECK(report.at("residuals").at("max").get<double>() <= 1e-10);

  TempDir dir("dfopf_pf");
  CliResult rd = run_cli("pf --feeder " + fixture_path("feeder2.json") +
                         " --out " + dir.str());
  CHECK(rd.exit_code == 0);
  CHECK(fs::exists(dir.path / "pf_report.json"));
  CHECK(fs::exists(dir.path / "operating_point.csv"));
}

TEST_CASE("solve reports the horizon mode it was asked for") {
  CliResult r = run_cli("solve --horizon-end extended:2 --feeder " +
                        fixture_path("feeder2.json"));
  CHECK(r.exit_code == 0);
  json report = json::parse(r.out);
  CHECK(report.at("horizon").at("mode") == "extended:2");
  CHECK(report.at("horizon").at("periods") == 2);
  CHECK(report.at("horizon").at("horizon_periods") == 4);
  CHECK(report.at("status") == "optimal");
}

TEST_CASE("config file fills in what flags leave unset, flags win") {
  TempDir dir("dfopf_cfg");
  const fs::path cfg = dir.path / "config.json";
  std::ofstream(cfg) << "{\"max-iterations\": 1}";

  // Config alone: the iteration cap bites and the solve fails numerically.
  CliResult capped = run_cli("solve --config " + cfg.string() + " --feeder " +
                             fixture_path("feeder2.json"));
  CHECK(capped.exit_code == 5);

  // An explicit flag overrides the config value.
  CliResult freed =
      run_cli("solve --config " + cfg.string() +
              " --max-iterations 100 --feeder " + fixture_path("feeder2.json"));
  CHECK(freed.exit_code == 0);

  // Unknown keys are rejected as parse errors.
  const fs::path bad = dir.path / "bad.json";
  std::ofstream(bad) << "{\"iterations\": 5}";
  CliResult rejected = run_cli("solve --config " + bad.string() + " --feeder " +
                               fixture_path("feeder2.json"));
  CHECK(rejected.exit_code == 2);
}

TEST_CASE("dlmc writes the five artifacts and reruns byte-identically") {
  TempDir a("dfopf_dlmc_a");
  TempDir b("dfopf_dlmc_b");
  const std::string base =
      "dlmc --feeder " + fixture_path("feeder15.json") + " --out ";
  CliResult first = run_cli(base + a.str());
  CHECK(first.exit_code == 0);
  CliResult second = run_cli(base + b.str());
  CHECK(second.exit_code == 0);

  const char* names[] = {"solve_report.json", "operating_point.csv",
                         "sensitivities.csv", "dlmc.csv",
                         "reconciliation.csv"};
  for (const char* name : names) {
    CAPTURE(name);
    REQUIRE(fs::exists(a.path / name));
    const std::string run1 = slurp(a.path / name);
    const std::string run2 = slurp(b.path / name);
    CHECK_FALSE(run1.empty());
    CHECK(run1 == run2);
  }

  // 14 nodes x 24 periods x 2 kinds data rows plus the header.
  const std::string dlmc = slurp(a.path / "dlmc.csv");
  CHECK(count_lines(dlmc) == 14 * 24 * 2 + 1);

  // The summary must reconcile within the default tolerance.
  const std::string rec = slurp(a.path / "reconciliation.csv");
  CHECK(rec.find("flagged,0\n") != std::string::npos);
}

TEST_CASE("sensitivities --fd-check appends the error columns") {
  CliResult plain =
      run_cli("sensitivities --feeder " + fixture_path("feeder2.json"));
  CHECK(plain.exit_code == 0);
  CHECK(plain.out.rfind("period,site,kind,quantity,index,value\n", 0) == 0);

  CliResult checked = run_cli("sensitivities --fd-check --feeder " +
                              fixture_path("feeder2.json"));
  CHECK(checked.exit_code == 0);
  CHECK(checked.out.rfind(
            "period,site,kind,quantity,index,value,fd_value,error\n", 0) == 0);

  // T=2 periods x 1 site x 2 kinds x 4 quantities x N=1 entries.
  CHECK(count_lines(checked.out) == 2 * 1 * 2 * 4 * 1 + 1);

  // Every finite-difference error on this tiny feeder is far below the
  // acceptance threshold.
  std::istringstream rows(checked.out);
  std::string line;
  std::getline(rows, line);  // header
  while (std::getline(rows, line)) {
    const auto last = line.rfind(',');
    CHECK(std::stod(line.substr(last + 1)) <= 1e-6);
  }
}

TEST_CASE("thermal-sim output matches the library simulation byte for byte") {
  TempDir dir("dfopf_thermal");
  const fs::path profile = dir.path / "profile.csv";
  std::ofstream(profile) << "period,load_sq\n1,0.5\n2,0.9\n";

  CliResult r = run_cli("thermal-sim --feeder " + fixture_path("feeder2.json") +
                        " --load-profile " + profile.string());
  CHECK(r.exit_code == 0);

  const FeederModel model = load_feeder(fixture_path("feeder2.json"));
  Eigen::VectorXd load_sq(3);
  load_sq << 0.0, 0.5, 0.9;
  const PiecewiseAging pw = build_piecewise_aging(default_aging_breakpoints());
  const ThermalState state =
      simulate_thermal(model.transformers[0].params, pw, model.grid, load_sq);
  std::ostringstream expected;
  write_thermal_csv(expected, state, load_sq, model.grid);
  CHECK(r.out == expected.str());

  // A single-column profile is accepted and equivalent.
  const fs::path bare = dir.path / "bare.csv";
  std::ofstream(bare) << "0.5\n0.9\n";
  CliResult r2 = run_cli("thermal-sim --feeder " + fixture_path("feeder2.json") +
                         " --load-profile " + bare.string());
  CHECK(r2.exit_code == 0);
  CHECK(r2.out == r.out);

  // Wrong sample count is a validation error.
  const fs::path shorty = dir.path / "short.csv";
  std::ofstream(shorty) << "0.5\n";
  CliResult r3 = run_cli("thermal-sim --feeder " + fixture_path("feeder2.json") +
                         " --load-profile " + shorty.string());
  CHECK(r3.exit_code == 3);
}
