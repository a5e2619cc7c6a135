#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

namespace dfopf {

// Conic program in standard form:
//   minimize    c'x
//   subject to  A x = b
//               G x + s = h,  s in K
// where K = R^nonneg_+  x  SOC(d_1) x ... x SOC(d_k), in that row order.
// Second-order cone of dimension d: { (u0, u1) : u0 >= ||u1||_2 }.
struct ConeProgram {
  Eigen::SparseMatrix<double> A;  // n_eq x n
  Eigen::SparseMatrix<double> G;  // n_ineq x n
  Eigen::VectorXd b, h, c;
  int nonneg = 0;                 // leading LP rows of G
  std::vector<int> soc_dims;      // SOC block sizes following the LP rows

  int n_vars() const { return static_cast<int>(c.size()); }
  int n_eq() const { return static_cast<int>(b.size()); }
  int n_ineq() const { return static_cast<int>(h.size()); }
};

enum class SolverStatus {
  Optimal,
  OptimalInaccurate,  // stalled, but the best iterate meets the relaxed band
  PrimalInfeasible,
  DualInfeasible,
  MaxIterations,
  NumericalFailure,
};

std::string to_string(SolverStatus s);

struct ConicSettings {
  double feastol = 1e-9;
  double abstol = 1e-9;
  double reltol = 1e-10;
  // Accepted when the iteration can no longer improve (endgame roundoff):
  // the best iterate is returned as OptimalInaccurate if it meets these.
  double feastol_inaccurate = 1e-6;
  double reltol_inaccurate = 1e-6;
  int max_iterations = 100;
  int refinement_steps = 3;
  double static_regularization = 1e-9;
  double step_fraction = 0.99;
  bool equilibrate = true;
  int equilibration_iterations = 3;
  bool verbose = false;
};

struct ConeSolution {
  SolverStatus status = SolverStatus::NumericalFailure;
  Eigen::VectorXd x, y, z, s;  // primal x; equality dual y; cone dual z; slack s
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;          // absolute duality gap
  double relative_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

// Homogeneous self-dual embedding interior-point method with Nesterov-Todd
// scaling and a Mehrotra predictor-corrector, on a sparse quasi-definite KKT
// system (LDLT with static regularization and iterative refinement).
ConeSolution solve_cone_program(const ConeProgram& prog, const ConicSettings& settings = {});

// Pluggable backend seam. The embedded interior-point method is the default
// and the only backend compiled in; the registry exists so an external
// solver can be slotted in without touching call sites.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual ConeSolution solve(const ConeProgram& prog, const ConicSettings& settings) = 0;
};

std::unique_ptr<ConicBackend> make_backend(const std::string& name);  // "embedded"
std::vector<std::string> available_backends();

}  // namespace dfopf
