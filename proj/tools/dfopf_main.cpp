// Command-line front end. Subcommands:
//   validate      parse + validate a feeder file
//   pf            power flow at the fixed loads (no optimization)
//   solve         day-ahead planning solve
//   sensitivities solve, reconstruct the operating point, write the tensor
//   dlmc          full chain: solve -> operating point -> sensitivities ->
//                 decomposition -> reconciliation
//   thermal-sim   standalone transformer thermal simulation over a load CSV
//
// Exit codes: 0 success, 1 internal, 2 parse, 3 validation, 4 infeasible,
// 5 numerical, 6 io (one per class in include/dfopf/errors.hpp). Every error
// path prints a single-line JSON object {"error": <class>, "message": ...}
// on stderr. Settings precedence is flags > --config file > built-in
// defaults; the config file is a flat JSON object keyed by long flag names.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfopf/dlmc.hpp"
#include "dfopf/errors.hpp"
#include "dfopf/feeder_io.hpp"
#include "dfopf/opf.hpp"
#include "dfopf/power_flow.hpp"
#include "dfopf/reports.hpp"
#include "dfopf/sensitivity.hpp"
#include "dfopf/thermal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitNumerical = 5;
constexpr int kExitIo = 6;

void emit_error(const std::string& kind, const std::string& message) {
  json err;
  err["error"] = kind;
  err["message"] = message;
  std::cerr << err.dump() << "\n";
}

// Every tunable in one struct; the defaults here are the bottom of the
// precedence chain.
struct Settings {
  std::string feeder;
  std::string config_path;
  std::string out_dir;
  std::string horizon_end = "cycle";
  std::string backend = "embedded";
  double feastol = 1e-9;
  double abstol = 1e-9;
  double reltol = 1e-10;
  int max_iterations = 100;
  bool verbose = false;
  double exactness_gap_tol = 1e-6;
  double reconcile_tol = 1e-4;
  bool fd_check = false;
  double fd_step = 1e-6;
  std::string load_profile;
  int transformer = 0;
};

// The option handles of one subcommand, so the config merge can tell which
// flags the user actually passed.
struct SubOptions {
  CLI::App* cmd = nullptr;
  std::map<std::string, CLI::Option*> by_key;

  CLI::Option* track(const std::string& key, CLI::Option* opt) {
    by_key[key] = opt;
    return opt;
  }
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw dfopf::IoError("cannot read config file '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const json::exception& e) {
    throw dfopf::ParseError("config '" + path + "': " + e.what());
  }
  if (!cfg.is_object())
    throw dfopf::ParseError("config '" + path + "': top level must be an object");
  return cfg;
}

// Keys a config file may legally contain (union over subcommands); keys that
// do not apply to the invoked subcommand are ignored so one file can serve
// several commands.
const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "horizon-end", "backend",       "feastol",       "abstol",
      "reltol",      "max-iterations", "verbose",      "exactness-gap-tol",
      "reconcile-tol", "fd-step",     "transformer"};
  return keys;
}

template <typename T>
void take(const json& cfg, const std::string& key, const SubOptions& sub, T& slot) {
  auto opt = sub.by_key.find(key);
  if (opt == sub.by_key.end()) return;          // not applicable here
  if (opt->second->count() > 0) return;         // explicit flag wins
  if (!cfg.contains(key)) return;
  try {
    slot = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw dfopf::ParseError("config: bad value for '" + key + "': " + e.what());
  }
}

void apply_config(const SubOptions& sub, Settings& s) {
  const json cfg = load_config(s.config_path);
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (!known_config_keys().count(it.key()))
      throw dfopf::ParseError("config: unknown key '" + it.key() + "'");
  take(cfg, "horizon-end", sub, s.horizon_end);
  take(cfg, "backend", sub, s.backend);
  take(cfg, "feastol", sub, s.feastol);
  take(cfg, "abstol", sub, s.abstol);
  take(cfg, "reltol", sub, s.reltol);
  take(cfg, "max-iterations", sub, s.max_iterations);
  take(cfg, "verbose", sub, s.verbose);
  take(cfg, "exactness-gap-tol", sub, s.exactness_gap_tol);
  take(cfg, "reconcile-tol", sub, s.reconcile_tol);
  take(cfg, "fd-step", sub, s.fd_step);
  take(cfg, "transformer", sub, s.transformer);
}

dfopf::SolveOptions solve_options(const Settings& s) {
  dfopf::SolveOptions o;
  o.backend = s.backend;
  o.solver.feastol = s.feastol;
  o.solver.abstol = s.abstol;
  o.solver.reltol = s.reltol;
  o.solver.max_iterations = s.max_iterations;
  o.solver.verbose = s.verbose;
  o.exactness_gap_tol = s.exactness_gap_tol;
  return o;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec)
    throw dfopf::IoError("cannot create output directory '" + dir +
                         "': " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw dfopf::IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

void require_optimal(const dfopf::SolveReport& report) {
  if (report.status == dfopf::SolveStatus::Infeasible)
    throw dfopf::InfeasibleError("problem is infeasible (solver status: " +
                                 report.solver_status + ")");
  if (report.status != dfopf::SolveStatus::Optimal)
    throw dfopf::NumericalError(
        "solver did not converge (status: " + report.solver_status +
        ", iterations: " + std::to_string(report.iterations) + ")");
}

// Fixed nodal demand (loads only; PV and EV injections are decision
// variables and play no role in a plain power flow).
void fixed_demand(const dfopf::FeederModel& model, Eigen::MatrixXd& net_p,
                  Eigen::MatrixXd& net_q) {
  const int nodes = model.topology.node_count();
  const int cols = model.grid.columns();
  net_p.setZero(nodes, cols);
  net_q.setZero(nodes, cols);
  for (const auto& load : model.loads) {
    net_p.row(load.node) += load.p.transpose();
    net_q.row(load.node) += load.q.transpose();
  }
}

// Load profile CSV for thermal-sim: optional header, then either
// "load_sq" or "period,load_sq" rows, one per operating period.
Eigen::VectorXd read_load_profile(const std::string& path, int periods) {
  std::ifstream is(path);
  if (!is) throw dfopf::IoError("cannot read load profile '" + path + "'");
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (trimmed.empty()) continue;
    const auto comma = trimmed.rfind(',');
    const std::string field =
        comma == std::string::npos ? trimmed : trimmed.substr(comma + 1);
    try {
      std::size_t used = 0;
      const double value = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
      values.push_back(value);
    } catch (const std::exception&) {
      if (values.empty() && lineno == 1) continue;  // header row
      throw dfopf::ParseError("load profile '" + path + "': bad value '" +
                              field + "' on line " + std::to_string(lineno));
    }
  }
  if (static_cast<int>(values.size()) != periods)
    throw dfopf::ValidationError(
        "load profile '" + path + "' has " + std::to_string(values.size()) +
        " samples but the feeder horizon has " + std::to_string(periods) +
        " periods");
  Eigen::VectorXd load_sq(periods + 1);
  load_sq[0] = 0.0;
  for (int t = 1; t <= periods; ++t) {
    if (values[t - 1] < 0.0)
      throw dfopf::ValidationError("load profile '" + path +
                                   "': squared loading must be nonnegative");
    load_sq[t] = values[t - 1];
  }
  return load_sq;
}

int run_validate(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  std::cout << "valid: " << model.topology.node_count() << " nodes, "
            << model.topology.line_count() << " lines, " << model.grid.periods
            << " periods, " << model.transformers.size() << " transformer(s), "
            << model.loads.size() << " load(s), " << model.pvs.size()
            << " pv unit(s), " << model.evs.size() << " ev(s)\n";
  return 0;
}

int run_pf(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  Eigen::MatrixXd net_p, net_q;
  fixed_demand(model, net_p, net_q);
  const dfopf::PowerFlowResult result = dfopf::solve_power_flow(
      model.topology, model.grid, net_p, net_q, model.root_v);
  const dfopf::ResidualReport residuals =
      dfopf::residual_report(model.topology, model.grid, result.op);
  if (s.out_dir.empty()) {
    dfopf::write_pf_report_json(std::cout, result, residuals);
    return 0;
  }
  const fs::path dir = prepare_out_dir(s.out_dir);
  {
    auto os = open_out(dir / "pf_report.json");
    dfopf::write_pf_report_json(os, result, residuals);
  }
  {
    auto os = open_out(dir / "operating_point.csv");
    dfopf::write_operating_point_csv(os, result.op, model.grid.periods);
  }
  return 0;
}

int run_solve(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  const dfopf::HorizonSpec spec = dfopf::parse_horizon_end(s.horizon_end);
  const dfopf::SolveReport report = dfopf::solve(model, spec, solve_options(s));
  require_optimal(report);
  if (s.out_dir.empty()) {
    dfopf::write_solve_report_json(std::cout, report, model);
    return 0;
  }
  const fs::path dir = prepare_out_dir(s.out_dir);
  {
    auto os = open_out(dir / "solve_report.json");
    dfopf::write_solve_report_json(os, report, model);
  }
  {
    auto os = open_out(dir / "operating_point.csv");
    dfopf::write_operating_point_csv(os, report.op, report.periods);
  }
  return 0;
}

int run_sensitivities(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  const dfopf::HorizonSpec spec = dfopf::parse_horizon_end(s.horizon_end);
  const dfopf::SolveReport report = dfopf::solve(model, spec, solve_options(s));
  require_optimal(report);
  const dfopf::PowerFlowResult pf =
      dfopf::reconstructed_operating_point(report, model);
  const dfopf::SensitivityTensor tensor =
      dfopf::compute_sensitivities(model.topology, pf.op, report.periods);

  std::vector<dfopf::PeriodSensitivities> fd;
  if (s.fd_check) {
    const Eigen::VectorXd root_v = pf.op.v.row(0).transpose();
    fd.reserve(report.periods);
    for (int t = 1; t <= report.periods; ++t)
      fd.push_back(dfopf::fd_sensitivities(model.topology, pf.op.p, pf.op.q,
                                           root_v, t, s.fd_step));
  }
  const std::vector<dfopf::PeriodSensitivities>* fd_ptr =
      s.fd_check ? &fd : nullptr;
  if (s.out_dir.empty()) {
    dfopf::write_sensitivities_csv(std::cout, tensor, fd_ptr);
    return 0;
  }
  const fs::path dir = prepare_out_dir(s.out_dir);
  auto os = open_out(dir / "sensitivities.csv");
  dfopf::write_sensitivities_csv(os, tensor, fd_ptr);
  return 0;
}

int run_dlmc(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  const dfopf::HorizonSpec spec = dfopf::parse_horizon_end(s.horizon_end);
  const dfopf::SolveReport report = dfopf::solve(model, spec, solve_options(s));
  require_optimal(report);
  const dfopf::PowerFlowResult pf =
      dfopf::reconstructed_operating_point(report, model);
  const dfopf::SensitivityTensor tensor =
      dfopf::compute_sensitivities(model.topology, pf.op, report.periods);
  const dfopf::PiCoefficients pi = dfopf::transformer_pi(report, model);
  const dfopf::DlmcBreakdown breakdown =
      dfopf::decompose(report, model, tensor, pi);
  const dfopf::ReconciliationReport rec =
      dfopf::reconcile(breakdown, s.reconcile_tol);

  const fs::path dir = prepare_out_dir(s.out_dir);
  {
    auto os = open_out(dir / "solve_report.json");
    dfopf::write_solve_report_json(os, report, model);
  }
  {
    // The exact power-flow point the sensitivities were evaluated at.
    auto os = open_out(dir / "operating_point.csv");
    dfopf::write_operating_point_csv(os, pf.op, report.periods);
  }
  {
    auto os = open_out(dir / "sensitivities.csv");
    dfopf::write_sensitivities_csv(os, tensor);
  }
  {
    auto os = open_out(dir / "dlmc.csv");
    dfopf::write_dlmc_csv(os, breakdown, rec);
  }
  {
    auto os = open_out(dir / "reconciliation.csv");
    dfopf::write_reconciliation_csv(os, rec);
  }
  if (rec.flagged > 0)
    std::cerr << "warning: " << rec.flagged
              << " DLMC entries exceed the reconciliation tolerance (max "
              << dfopf::format_number(rec.max_rel_gap) << ")\n";
  return 0;
}

int run_thermal_sim(const Settings& s) {
  const dfopf::FeederModel model = dfopf::load_feeder(s.feeder);
  if (model.transformers.empty())
    throw dfopf::ValidationError("feeder '" + s.feeder +
                                 "' has no transformer to simulate");
  if (s.transformer < 0 ||
      s.transformer >= static_cast<int>(model.transformers.size()))
    throw dfopf::ValidationError(
        "transformer index " + std::to_string(s.transformer) +
        " out of range (feeder has " +
        std::to_string(model.transformers.size()) + ")");
  const dfopf::ThermalParams& params =
      model.transformers[s.transformer].params;
  const Eigen::VectorXd load_sq =
      read_load_profile(s.load_profile, model.grid.periods);
  const dfopf::PiecewiseAging pw =
      dfopf::build_piecewise_aging(dfopf::default_aging_breakpoints());
  const dfopf::ThermalState state =
      dfopf::simulate_thermal(params, pw, model.grid, load_sq);
  if (s.out_dir.empty()) {
    dfopf::write_thermal_csv(std::cout, state, load_sq, model.grid);
    return 0;
  }
  const fs::path dir = prepare_out_dir(s.out_dir);
  auto os = open_out(dir / "thermal.csv");
  dfopf::write_thermal_csv(os, state, load_sq, model.grid);
  return 0;
}

void add_common(SubOptions& sub, Settings& s) {
  sub.cmd->add_option("--feeder", s.feeder, "Feeder JSON file")
      ->required();
  sub.track("config",
            sub.cmd->add_option("--config", s.config_path,
                                "JSON config file (flags take precedence)"));
}

void add_out(SubOptions& sub, Settings& s, bool required = false) {
  CLI::Option* o = sub.cmd->add_option(
      "--out", s.out_dir, "Output directory (default: primary artifact to stdout)");
  if (required) o->required();
}

void add_solver(SubOptions& sub, Settings& s) {
  sub.track("backend", sub.cmd->add_option("--backend", s.backend,
                                           "Conic solver backend"));
  sub.track("feastol", sub.cmd->add_option("--feastol", s.feastol,
                                           "Primal/dual feasibility tolerance")
                           ->check(CLI::PositiveNumber));
  sub.track("abstol", sub.cmd->add_option("--abstol", s.abstol,
                                          "Absolute duality-gap tolerance")
                          ->check(CLI::PositiveNumber));
  sub.track("reltol", sub.cmd->add_option("--reltol", s.reltol,
                                          "Relative duality-gap tolerance")
                          ->check(CLI::PositiveNumber));
  sub.track("max-iterations",
            sub.cmd->add_option("--max-iterations", s.max_iterations,
                                "Interior-point iteration cap")
                ->check(CLI::PositiveNumber));
  sub.track("verbose", sub.cmd->add_flag("--verbose", s.verbose,
                                         "Per-iteration solver trace"));
  sub.track("exactness-gap-tol",
            sub.cmd->add_option("--exactness-gap-tol", s.exactness_gap_tol,
                                "SOC gap above which a solve is flagged")
                ->check(CLI::PositiveNumber));
}

void add_horizon(SubOptions& sub, Settings& s) {
  sub.track("horizon-end",
            sub.cmd->add_option("--horizon-end", s.horizon_end,
                                "Horizon closure: cycle | extended[:E]"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Day-ahead operational planning and nodal marginal-cost decomposition "
      "for radial distribution feeders"};
  app.require_subcommand(1);

  Settings s;
  SubOptions validate_cmd, pf_cmd, solve_cmd, sens_cmd, dlmc_cmd, thermal_cmd;

  validate_cmd.cmd =
      app.add_subcommand("validate", "Parse and validate a feeder file");
  add_common(validate_cmd, s);

  pf_cmd.cmd = app.add_subcommand(
      "pf", "Power flow at the fixed loads (writes pf_report.json)");
  add_common(pf_cmd, s);
  add_out(pf_cmd, s);

  solve_cmd.cmd = app.add_subcommand(
      "solve", "Day-ahead planning solve (writes solve_report.json)");
  add_common(solve_cmd, s);
  add_out(solve_cmd, s);
  add_solver(solve_cmd, s);
  add_horizon(solve_cmd, s);

  sens_cmd.cmd = app.add_subcommand(
      "sensitivities",
      "Operating-point sensitivities (writes sensitivities.csv)");
  add_common(sens_cmd, s);
  add_out(sens_cmd, s);
  add_solver(sens_cmd, s);
  add_horizon(sens_cmd, s);
  sens_cmd.cmd->add_flag("--fd-check", s.fd_check,
                         "Append central finite-difference value and error "
                         "columns (slow)");
  sens_cmd.track("fd-step",
                 sens_cmd.cmd->add_option("--fd-step", s.fd_step,
                                          "Finite-difference step size")
                     ->check(CLI::PositiveNumber));

  dlmc_cmd.cmd = app.add_subcommand(
      "dlmc",
      "Full chain: solve, operating point, sensitivities, decomposition, "
      "reconciliation");
  add_common(dlmc_cmd, s);
  add_out(dlmc_cmd, s, /*required=*/true);
  add_solver(dlmc_cmd, s);
  add_horizon(dlmc_cmd, s);
  dlmc_cmd.track("reconcile-tol",
                 dlmc_cmd.cmd->add_option("--reconcile-tol", s.reconcile_tol,
                                          "Relative gap above which an entry "
                                          "is flagged")
                     ->check(CLI::PositiveNumber));

  thermal_cmd.cmd = app.add_subcommand(
      "thermal-sim", "Standalone transformer thermal simulation");
  add_common(thermal_cmd, s);
  add_out(thermal_cmd, s);
  thermal_cmd.cmd
      ->add_option("--load-profile", s.load_profile,
                   "CSV of per-period squared loading (optionally period,load)")
      ->required();
  thermal_cmd.track("transformer",
                    thermal_cmd.cmd->add_option("--transformer", s.transformer,
                                                "Transformer index (0-based)"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("parse", e.what());
    return kExitParse;
  }

  try {
    if (validate_cmd.cmd->parsed()) {
      apply_config(validate_cmd, s);
      return run_validate(s);
    }
    if (pf_cmd.cmd->parsed()) {
      apply_config(pf_cmd, s);
      return run_pf(s);
    }
    if (solve_cmd.cmd->parsed()) {
      apply_config(solve_cmd, s);
      return run_solve(s);
    }
    if (sens_cmd.cmd->parsed()) {
      apply_config(sens_cmd, s);
      return run_sensitivities(s);
    }
    if (dlmc_cmd.cmd->parsed()) {
      apply_config(dlmc_cmd, s);
      return run_dlmc(s);
    }
    if (thermal_cmd.cmd->parsed()) {
      apply_config(thermal_cmd, s);
      return run_thermal_sim(s);
    }
    emit_error("parse", "no subcommand given");
    return kExitParse;
  } catch (const dfopf::ParseError& e) {
    emit_error("parse", e.what());
    return kExitParse;
  } catch (const dfopf::ValidationError& e) {
    emit_error("validation", e.what());
    return kExitValidation;
  } catch (const dfopf::InfeasibleError& e) {
    emit_error("infeasible", e.what());
    return kExitInfeasible;
  } catch (const dfopf::NumericalError& e) {
    emit_error("numerical", e.what());
    return kExitNumerical;
  } catch (const dfopf::IoError& e) {
    emit_error("io", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return kExitInternal;
  }
}
