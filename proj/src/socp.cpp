#include "dfopf/socp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/SparseCholesky>

#include "dfopf/errors.hpp"

namespace dfopf {

std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Optimal: return "optimal";
    case SolverStatus::OptimalInaccurate: return "optimal-reduced-accuracy";
    case SolverStatus::PrimalInfeasible: return "primal-infeasible";
    case SolverStatus::DualInfeasible: return "dual-infeasible";
    case SolverStatus::MaxIterations: return "max-iterations";
    case SolverStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Row layout of the cone block: LP rows first, then each SOC block.
struct ConeLayout {
  int nl = 0;
  std::vector<int> dims;
  std::vector<int> starts;  // offset of each SOC block
  int m = 0;
  int degree = 0;  // nl + number of SOC cones

  static ConeLayout from(const ConeProgram& prog) {
    ConeLayout lay;
    lay.nl = prog.nonneg;
    lay.dims = prog.soc_dims;
    int at = lay.nl;
    for (int d : lay.dims) {
      lay.starts.push_back(at);
      at += d;
    }
    lay.m = at;
    lay.degree = lay.nl + static_cast<int>(lay.dims.size());
    return lay;
  }
};

// Identity element of the cone (ones on LP, e0 on each SOC).
Eigen::VectorXd cone_identity(const ConeLayout& lay) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(lay.m);
  e.head(lay.nl).setOnes();
  for (size_t k = 0; k < lay.dims.size(); ++k) e[lay.starts[k]] = 1.0;
  return e;
}

// Largest step a so that u + a*d stays in the cone (+inf if unbounded).
double max_step_lp(const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  double a = kInf;
  for (int i = 0; i < u.size(); ++i)
    if (d[i] < 0.0) a = std::min(a, -u[i] / d[i]);
  return a;
}

double max_step_soc(const Eigen::Ref<const Eigen::VectorXd>& u,
                    const Eigen::Ref<const Eigen::VectorXd>& d) {
  // First positive root of (u0+a*d0)^2 - |u1+a*d1|^2, the boundary crossing
  // of the interior path.
  const int n = static_cast<int>(u.size());
  const double c2 = d[0] * d[0] - d.tail(n - 1).squaredNorm();
  const double c1 = u[0] * d[0] - u.tail(n - 1).dot(d.tail(n - 1));
  const double c0 = u[0] * u[0] - u.tail(n - 1).squaredNorm();

  if (c2 == 0.0) {
    if (c1 >= 0.0) return kInf;
    return -c0 / (2.0 * c1);
  }
  const double disc = c1 * c1 - c2 * c0;
  if (c2 > 0.0 && disc <= 0.0) return kInf;
  const double sq = std::sqrt(std::max(disc, 0.0));
  // Stable quadratic roots of c2*a^2 + 2*c1*a + c0.
  const double qq = -(c1 + (c1 >= 0.0 ? sq : -sq));
  double r1 = qq / c2;
  double r2 = (qq != 0.0) ? c0 / qq : kInf;
  if (r1 > r2) std::swap(r1, r2);
  if (r1 > 0.0) return r1;
  if (r2 > 0.0) return r2;
  return kInf;
}

double max_step(const ConeLayout& lay, const Eigen::VectorXd& u,
                const Eigen::VectorXd& d) {
  double a = max_step_lp(u.head(lay.nl), d.head(lay.nl));
  for (size_t k = 0; k < lay.dims.size(); ++k)
    a = std::min(a, max_step_soc(u.segment(lay.starts[k], lay.dims[k]),
                                 d.segment(lay.starts[k], lay.dims[k])));
  return a;
}

// How far a point sits outside the cone (<= 0 means strictly inside).
double cone_violation(const ConeLayout& lay, const Eigen::VectorXd& u) {
  double v = -kInf;
  if (lay.nl > 0) v = std::max(v, -u.head(lay.nl).minCoeff());
  for (size_t k = 0; k < lay.dims.size(); ++k) {
    const auto blk = u.segment(lay.starts[k], lay.dims[k]);
    v = std::max(v, blk.tail(lay.dims[k] - 1).norm() - blk[0]);
  }
  return v;
}

// Nesterov-Todd scaling state. W is symmetric PD with W z = W^{-1} s = lambda.
struct NtScaling {
  const ConeLayout* lay = nullptr;
  Eigen::VectorXd w_lp;     // sqrt(s/z) on LP entries
  Eigen::VectorXd lambda;   // scaled point, size m
  std::vector<double> eta;  // per SOC cone
  std::vector<Eigen::VectorXd> wbar;

  void set_identity(const ConeLayout& layout) {
    lay = &layout;
    w_lp = Eigen::VectorXd::Ones(layout.nl);
    lambda = Eigen::VectorXd::Zero(layout.m);
    eta.assign(layout.dims.size(), 1.0);
    wbar.clear();
    for (int d : layout.dims) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
      w[0] = 1.0;
      wbar.push_back(w);
    }
  }

  bool update(const ConeLayout& layout, const Eigen::VectorXd& s,
              const Eigen::VectorXd& z) {
    lay = &layout;
    w_lp.resize(layout.nl);
    lambda.resize(layout.m);
    for (int i = 0; i < layout.nl; ++i) {
      if (s[i] <= 0.0 || z[i] <= 0.0) return false;
      w_lp[i] = std::sqrt(s[i] / z[i]);
      lambda[i] = std::sqrt(s[i] * z[i]);
    }
    eta.resize(layout.dims.size());
    wbar.resize(layout.dims.size());
    for (size_t k = 0; k < layout.dims.size(); ++k) {
      const int d = layout.dims[k];
      const auto sk = s.segment(layout.starts[k], d);
      const auto zk = z.segment(layout.starts[k], d);
      const double sres = sk[0] * sk[0] - sk.tail(d - 1).squaredNorm();
      const double zres = zk[0] * zk[0] - zk.tail(d - 1).squaredNorm();
      if (sres <= 0.0 || zres <= 0.0 || sk[0] <= 0.0 || zk[0] <= 0.0) return false;
      const Eigen::VectorXd sb = sk / std::sqrt(sres);
      const Eigen::VectorXd zb = zk / std::sqrt(zres);
      const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
      Eigen::VectorXd w(d);
      w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
      w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
      eta[k] = std::pow(sres / zres, 0.25);
      wbar[k] = w;
      // lambda = W z, via the rank-one structure of W.
      const double zdot = w.tail(d - 1).dot(zk.tail(d - 1));
      lambda[layout.starts[k]] = eta[k] * (w[0] * zk[0] + zdot);
      lambda.segment(layout.starts[k] + 1, d - 1) =
          eta[k] * (zk.tail(d - 1) + (zk[0] + zdot / (1.0 + w[0])) * w.tail(d - 1));
    }
    return true;
  }

  // W v (symmetric scaling applied to a full cone vector).
  Eigen::VectorXd apply_W(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(lay->m);
    out.head(lay->nl) = w_lp.cwiseProduct(v.head(lay->nl));
    for (size_t k = 0; k < lay->dims.size(); ++k) {
      const int d = lay->dims[k], at = lay->starts[k];
      const auto vk = v.segment(at, d);
      const Eigen::VectorXd& w = wbar[k];
      const double dot1 = w.tail(d - 1).dot(vk.tail(d - 1));
      out[at] = eta[k] * (w[0] * vk[0] + dot1);
      out.segment(at + 1, d - 1) =
          eta[k] * (vk.tail(d - 1) + (vk[0] + dot1 / (1.0 + w[0])) * w.tail(d - 1));
    }
    return out;
  }

  // W^{-1} v.
  Eigen::VectorXd apply_Winv(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(lay->m);
    out.head(lay->nl) = v.head(lay->nl).cwiseQuotient(w_lp);
    for (size_t k = 0; k < lay->dims.size(); ++k) {
      const int d = lay->dims[k], at = lay->starts[k];
      const auto vk = v.segment(at, d);
      const Eigen::VectorXd& w = wbar[k];
      const double dot1 = w.tail(d - 1).dot(vk.tail(d - 1));
      out[at] = (w[0] * vk[0] - dot1) / eta[k];
      out.segment(at + 1, d - 1) =
          (vk.tail(d - 1) + (-vk[0] + dot1 / (1.0 + w[0])) * w.tail(d - 1)) / eta[k];
    }
    return out;
  }

  // W'W v = W^2 v (used for matrix-free refinement residuals).
  Eigen::VectorXd apply_W2(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(lay->m);
    out.head(lay->nl) = w_lp.array().square() * v.head(lay->nl).array();
    for (size_t k = 0; k < lay->dims.size(); ++k) {
      const int d = lay->dims[k], at = lay->starts[k];
      const auto vk = v.segment(at, d);
      const Eigen::VectorXd& w = wbar[k];
      const double e2 = eta[k] * eta[k];
      const double dot = w.dot(vk);
      out[at] = e2 * (2.0 * w[0] * dot - vk[0]);
      out.segment(at + 1, d - 1) = e2 * (2.0 * dot * w.tail(d - 1) + vk.tail(d - 1));
    }
    return out;
  }

  // Jordan product u o v per cone.
  Eigen::VectorXd jordan(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(lay->m);
    out.head(lay->nl) = u.head(lay->nl).cwiseProduct(v.head(lay->nl));
    for (size_t k = 0; k < lay->dims.size(); ++k) {
      const int d = lay->dims[k], at = lay->starts[k];
      const auto uk = u.segment(at, d);
      const auto vk = v.segment(at, d);
      out[at] = uk.dot(vk);
      out.segment(at + 1, d - 1) = uk[0] * vk.tail(d - 1) + vk[0] * uk.tail(d - 1);
    }
    return out;
  }

  // lambda \ v (inverse of the arrowhead operator of lambda).
  Eigen::VectorXd lambda_solve(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(lay->m);
    out.head(lay->nl) = v.head(lay->nl).cwiseQuotient(lambda.head(lay->nl));
    for (size_t k = 0; k < lay->dims.size(); ++k) {
      const int d = lay->dims[k], at = lay->starts[k];
      const auto lk = lambda.segment(at, d);
      const auto vk = v.segment(at, d);
      const double det = lk[0] * lk[0] - lk.tail(d - 1).squaredNorm();
      const double t = lk.tail(d - 1).dot(vk.tail(d - 1));
      out[at] = (lk[0] * vk[0] - t) / det;
      out.segment(at + 1, d - 1) =
          vk.tail(d - 1) / lk[0] + ((t / lk[0] - vk[0]) / det) * lk.tail(d - 1);
    }
    return out;
  }
};

// Ruiz equilibration of the stacked [A; G] with cone rows scaled as a group.
struct Equilibration {
  Eigen::VectorXd d_col, e_row, f_row;  // x, equality-row, cone-row scalings

  static Equilibration run(SpMat& A, SpMat& G, Eigen::VectorXd& b, Eigen::VectorXd& h,
                           Eigen::VectorXd& c, const ConeLayout& lay, int iterations) {
    const int n = static_cast<int>(c.size());
    const int p = static_cast<int>(b.size());
    const int m = static_cast<int>(h.size());
    Equilibration eq;
    eq.d_col = Eigen::VectorXd::Ones(n);
    eq.e_row = Eigen::VectorXd::Ones(p);
    eq.f_row = Eigen::VectorXd::Ones(m);

    auto safe_inv_sqrt = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };

    for (int it = 0; it < iterations; ++it) {
      Eigen::VectorXd ra = Eigen::VectorXd::Zero(p), rg = Eigen::VectorXd::Zero(m),
                      cn = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < A.outerSize(); ++j)
        for (SpMat::InnerIterator itA(A, j); itA; ++itA) {
          ra[itA.row()] = std::max(ra[itA.row()], std::abs(itA.value()));
          cn[j] = std::max(cn[j], std::abs(itA.value()));
        }
      for (int j = 0; j < G.outerSize(); ++j)
        for (SpMat::InnerIterator itG(G, j); itG; ++itG) {
          rg[itG.row()] = std::max(rg[itG.row()], std::abs(itG.value()));
          cn[j] = std::max(cn[j], std::abs(itG.value()));
        }
      // One scale per SOC block keeps the cone geometry intact.
      for (size_t k = 0; k < lay.dims.size(); ++k) {
        const double blk = rg.segment(lay.starts[k], lay.dims[k]).maxCoeff();
        rg.segment(lay.starts[k], lay.dims[k]).setConstant(blk);
      }

      Eigen::VectorXd sa = ra.unaryExpr(safe_inv_sqrt), sg = rg.unaryExpr(safe_inv_sqrt),
                      sc = cn.unaryExpr(safe_inv_sqrt);
      A = sa.asDiagonal() * A * sc.asDiagonal();
      G = sg.asDiagonal() * G * sc.asDiagonal();
      eq.e_row.array() *= sa.array();
      eq.f_row.array() *= sg.array();
      eq.d_col.array() *= sc.array();
    }
    b.array() *= eq.e_row.array();
    h.array() *= eq.f_row.array();
    c.array() *= eq.d_col.array();
    return eq;
  }
};

class Ipm {
 public:
  Ipm(const ConeProgram& prog, const ConicSettings& cfg)
      : orig_(prog), cfg_(cfg), lay_(ConeLayout::from(prog)) {
    A_ = prog.A;
    G_ = prog.G;
    b_ = prog.b;
    h_ = prog.h;
    c_ = prog.c;
    if (cfg_.equilibrate)
      eq_ = Equilibration::run(A_, G_, b_, h_, c_, lay_, cfg_.equilibration_iterations);
    else {
      eq_.d_col = Eigen::VectorXd::Ones(prog.n_vars());
      eq_.e_row = Eigen::VectorXd::Ones(prog.n_eq());
      eq_.f_row = Eigen::VectorXd::Ones(prog.n_ineq());
    }
    n_ = prog.n_vars();
    p_ = prog.n_eq();
    m_ = prog.n_ineq();
    e_ = cone_identity(lay_);
    resx0_ = std::max(1.0, inf_norm(orig_.c));
    resy0_ = std::max(1.0, inf_norm(orig_.b));
    resz0_ = std::max(1.0, inf_norm(orig_.h));
  }

  ConeSolution run();

 private:
  static double inf_norm(const Eigen::VectorXd& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  }

  void build_kkt(const NtScaling& W, double reg);
  // Factorize with regularization escalation: a failed pivot sequence is
  // retried with progressively heavier static regularization (iterative
  // refinement corrects the perturbation afterwards). Returns false only
  // when even the heaviest setting fails.
  bool factorize_kkt(const NtScaling& W);
  Eigen::VectorXd kkt_solve(const Eigen::VectorXd& rhs, const NtScaling& W) const;
  Eigen::VectorXd kkt_apply(const Eigen::VectorXd& v, const NtScaling& W) const;

  // Convergence metrics evaluated on the original (unequilibrated) data.
  struct Metrics {
    double pres, dres, gap, relgap, pcost, dcost, pinfres, dinfres, by_hz, cx;
  };
  Metrics metrics() const;

  ConeSolution extract(SolverStatus status, const Metrics& mt) const;

  const ConeProgram& orig_;
  ConicSettings cfg_;
  ConeLayout lay_;
  SpMat A_, G_;
  Eigen::VectorXd b_, h_, c_, e_;
  Equilibration eq_;
  int n_ = 0, p_ = 0, m_ = 0;
  double resx0_ = 1.0, resy0_ = 1.0, resz0_ = 1.0;

  // iterate (in equilibrated coordinates)
  Eigen::VectorXd x_, y_, z_, s_;
  double tau_ = 1.0, kappa_ = 1.0;
  int iters_ = 0;

  SpMat K_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool pattern_analyzed_ = false;
};

void Ipm::build_kkt(const NtScaling& W, double reg) {
  const int dim = n_ + p_ + m_;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(A_.nonZeros() + G_.nonZeros()) * 2 + dim + 16 * lay_.dims.size());

  for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, reg);
  for (int i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, -reg);

  for (int j = 0; j < A_.outerSize(); ++j)
    for (SpMat::InnerIterator it(A_, j); it; ++it) {
      trip.emplace_back(n_ + it.row(), j, it.value());
      trip.emplace_back(j, n_ + it.row(), it.value());
    }
  for (int j = 0; j < G_.outerSize(); ++j)
    for (SpMat::InnerIterator it(G_, j); it; ++it) {
      trip.emplace_back(n_ + p_ + it.row(), j, it.value());
      trip.emplace_back(j, n_ + p_ + it.row(), it.value());
    }

  // -(W'W + reg I) on the cone block: diagonal for LP, dense per SOC cone.
  for (int i = 0; i < lay_.nl; ++i) {
    const double w2 = W.w_lp[i] * W.w_lp[i];
    trip.emplace_back(n_ + p_ + i, n_ + p_ + i, -(w2 + reg));
  }
  for (size_t k = 0; k < lay_.dims.size(); ++k) {
    const int d = lay_.dims[k], at = n_ + p_ + lay_.starts[k];
    const double e2 = W.eta[k] * W.eta[k];
    const Eigen::VectorXd& w = W.wbar[k];
    for (int r = 0; r < d; ++r)
      for (int cidx = 0; cidx < d; ++cidx) {
        double val = 2.0 * w[r] * w[cidx];
        if (r == cidx) val += (r == 0 ? -1.0 : 1.0);
        val *= e2;
        if (r == cidx) val += reg;
        trip.emplace_back(at + r, at + cidx, -val);
      }
  }

  K_.resize(dim, dim);
  K_.setFromTriplets(trip.begin(), trip.end());
  if (!pattern_analyzed_) {
    ldlt_.analyzePattern(K_);
    pattern_analyzed_ = true;
  }
  ldlt_.factorize(K_);
}

bool Ipm::factorize_kkt(const NtScaling& W) {
  double reg = cfg_.static_regularization;
  build_kkt(W, reg);
  while (ldlt_.info() != Eigen::Success && reg < 1e-3) {
    reg *= 100.0;
    build_kkt(W, reg);
  }
  return ldlt_.info() == Eigen::Success;
}

Eigen::VectorXd Ipm::kkt_apply(const Eigen::VectorXd& v, const NtScaling& W) const {
  Eigen::VectorXd out(n_ + p_ + m_);
  const auto vx = v.head(n_);
  const auto vy = v.segment(n_, p_);
  const auto vz = v.tail(m_);
  out.head(n_) = A_.transpose() * vy + G_.transpose() * vz;
  out.segment(n_, p_) = A_ * vx;
  out.tail(m_) = G_ * vx - W.apply_W2(vz);
  return out;
}

Eigen::VectorXd Ipm::kkt_solve(const Eigen::VectorXd& rhs, const NtScaling& W) const {
  Eigen::VectorXd sol = ldlt_.solve(rhs);
  for (int it = 0; it < cfg_.refinement_steps; ++it) {
    const Eigen::VectorXd resid = rhs - kkt_apply(sol, W);
    if (resid.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, rhs.cwiseAbs().maxCoeff()))
      break;
    sol += ldlt_.solve(resid);
  }
  return sol;
}

Ipm::Metrics Ipm::metrics() const {
  // Map the iterate back to original coordinates (tau-scaled later).
  const Eigen::VectorXd x = eq_.d_col.cwiseProduct(x_);
  const Eigen::VectorXd y = eq_.e_row.cwiseProduct(y_);
  const Eigen::VectorXd z = eq_.f_row.cwiseProduct(z_);
  const Eigen::VectorXd s = s_.cwiseQuotient(eq_.f_row);

  Metrics mt{};
  const Eigen::VectorXd rx = orig_.A.transpose() * y + orig_.G.transpose() * z + orig_.c * tau_;
  const Eigen::VectorXd ry = orig_.A * x - orig_.b * tau_;
  const Eigen::VectorXd rz = orig_.G * x + s - orig_.h * tau_;
  mt.pres = std::max(inf_norm(ry) / resy0_, inf_norm(rz) / resz0_) / tau_;
  mt.dres = inf_norm(rx) / resx0_ / tau_;
  mt.pcost = orig_.c.dot(x) / tau_;
  mt.dcost = -(orig_.b.dot(y) + orig_.h.dot(z)) / tau_;
  mt.gap = s.dot(z) / (tau_ * tau_);
  const double denom = std::max(std::abs(mt.pcost), std::abs(mt.dcost));
  mt.relgap = denom > 1e-300 ? mt.gap / denom : mt.gap;

  mt.by_hz = orig_.b.dot(y) + orig_.h.dot(z);
  mt.cx = orig_.c.dot(x);
  mt.pinfres = mt.by_hz < 0.0
                   ? inf_norm(orig_.A.transpose() * y + orig_.G.transpose() * z) / -mt.by_hz
                   : kInf;
  mt.dinfres = mt.cx < 0.0
                   ? std::max(inf_norm(orig_.A * x), inf_norm(orig_.G * x + s)) / -mt.cx
                   : kInf;
  return mt;
}

ConeSolution Ipm::extract(SolverStatus status, const Metrics& mt) const {
  ConeSolution sol;
  sol.status = status;
  sol.iterations = iters_;

  double scale = 1.0;
  if (status == SolverStatus::Optimal || status == SolverStatus::OptimalInaccurate ||
      status == SolverStatus::MaxIterations ||
      status == SolverStatus::NumericalFailure) {
    scale = 1.0 / tau_;
  } else if (status == SolverStatus::PrimalInfeasible) {
    scale = mt.by_hz < 0.0 ? 1.0 / -mt.by_hz : 1.0;  // b'y + h'z = -1 certificate
  } else if (status == SolverStatus::DualInfeasible) {
    scale = mt.cx < 0.0 ? 1.0 / -mt.cx : 1.0;  // c'x = -1 certificate
  }

  sol.x = scale * eq_.d_col.cwiseProduct(x_);
  sol.y = scale * eq_.e_row.cwiseProduct(y_);
  sol.z = scale * eq_.f_row.cwiseProduct(z_);
  sol.s = scale * s_.cwiseQuotient(eq_.f_row);
  sol.primal_objective = mt.pcost;
  sol.dual_objective = mt.dcost;
  sol.gap = mt.gap;
  sol.relative_gap = mt.relgap;
  sol.primal_residual = mt.pres;
  sol.dual_residual = mt.dres;
  return sol;
}

ConeSolution Ipm::run() {
  if (m_ == 0)
    throw ValidationError("cone program needs at least one inequality row");

  NtScaling W;
  W.set_identity(lay_);
  if (!factorize_kkt(W))
    throw NumericalError("initial KKT factorization failed");

  // Primal init: solve for a point with G x + s = h, A x = b; then push s
  // into the cone interior. Dual init likewise for (y, z).
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_ + p_ + m_);
  rhs.segment(n_, p_) = b_;
  rhs.tail(m_) = h_;
  Eigen::VectorXd init_p = kkt_solve(rhs, W);
  x_ = init_p.head(n_);
  s_ = -init_p.tail(m_);
  double viol = cone_violation(lay_, s_);
  if (viol >= 0.0) s_ += (1.0 + viol) * e_;

  rhs.setZero();
  rhs.head(n_) = -c_;
  Eigen::VectorXd init_d = kkt_solve(rhs, W);
  y_ = init_d.segment(n_, p_);
  z_ = init_d.tail(m_);
  viol = cone_violation(lay_, z_);
  if (viol >= 0.0) z_ += (1.0 + viol) * e_;

  tau_ = 1.0;
  kappa_ = 1.0;

  Metrics best_mt{};
  double best_score = kInf;
  Eigen::VectorXd best_x, best_y, best_z, best_s;
  double best_tau = 1.0, best_kappa = 1.0;
  int consecutive_small_steps = 0;

  // Previous point and direction, kept so a step that lands numerically
  // outside the cone can be retreated (halved) instead of aborting the run.
  Eigen::VectorXd px, py, pz, ps, dx_l, dy_l, dz_l, ds_l;
  double ptau = 1.0, pkappa = 1.0, dtau_l = 0.0, dkap_l = 0.0, alpha_l = 0.0;
  bool have_step = false;

  // Stalls and roundoff breakdowns hand back the best iterate; if it meets
  // the relaxed band it still counts as solved, at reduced accuracy.
  auto finish = [&](SolverStatus hard) {
    x_ = best_x; y_ = best_y; z_ = best_z; s_ = best_s;
    tau_ = best_tau; kappa_ = best_kappa;
    const bool acceptable =
        best_mt.pres <= cfg_.feastol_inaccurate &&
        best_mt.dres <= cfg_.feastol_inaccurate &&
        best_mt.relgap <= cfg_.reltol_inaccurate;
    return extract(acceptable ? SolverStatus::OptimalInaccurate : hard, best_mt);
  };

  for (iters_ = 0; iters_ <= cfg_.max_iterations; ++iters_) {
    const Metrics mt = metrics();
    if (cfg_.verbose)
      std::printf("it %3d  pcost % .6e  gap %.3e  pres %.3e  dres %.3e  tau %.2e  kap %.2e\n",
                  iters_, mt.pcost, mt.gap, mt.pres, mt.dres, tau_, kappa_);

    const double score = std::max({mt.pres, mt.dres, mt.relgap});
    if (score < best_score) {
      best_score = score;
      best_mt = mt;
      best_x = x_; best_y = y_; best_z = z_; best_s = s_;
      best_tau = tau_; best_kappa = kappa_;
    }

    if (mt.pres <= cfg_.feastol && mt.dres <= cfg_.feastol &&
        (mt.gap <= cfg_.abstol || mt.relgap <= cfg_.reltol))
      return extract(SolverStatus::Optimal, mt);
    if (mt.pinfres <= cfg_.feastol * 10.0 && kappa_ > tau_ * 1e-4)
      return extract(SolverStatus::PrimalInfeasible, mt);
    if (mt.dinfres <= cfg_.feastol * 10.0 && kappa_ > tau_ * 1e-4)
      return extract(SolverStatus::DualInfeasible, mt);
    if (iters_ == cfg_.max_iterations) break;

    bool scaled = W.update(lay_, s_, z_);
    for (int attempt = 0; !scaled && have_step && attempt < 8; ++attempt) {
      alpha_l *= 0.5;  // retreat toward the last strictly interior point
      x_ = px + alpha_l * dx_l;
      y_ = py + alpha_l * dy_l;
      z_ = pz + alpha_l * dz_l;
      s_ = ps + alpha_l * ds_l;
      tau_ = ptau + alpha_l * dtau_l;
      kappa_ = pkappa + alpha_l * dkap_l;
      scaled = W.update(lay_, s_, z_);
    }
    if (!scaled) {
      if (cfg_.verbose) std::printf("** NT scaling update failed after retreat\n");
      return finish(SolverStatus::NumericalFailure);
    }
    if (!factorize_kkt(W)) {
      if (cfg_.verbose) std::printf("** KKT factorization failed\n");
      return finish(SolverStatus::NumericalFailure);
    }

    // Residuals in the equilibrated space drive the step equations.
    const Eigen::VectorXd rx = A_.transpose() * y_ + G_.transpose() * z_ + c_ * tau_;
    const Eigen::VectorXd ry = A_ * x_ - b_ * tau_;
    const Eigen::VectorXd rz = G_ * x_ + s_ - h_ * tau_;
    const double rt = c_.dot(x_) + b_.dot(y_) + h_.dot(z_) + kappa_;
    const double mu = (s_.dot(z_) + tau_ * kappa_) / (lay_.degree + 1);

    rhs.head(n_) = -c_;
    rhs.segment(n_, p_) = b_;
    rhs.tail(m_) = h_;
    const Eigen::VectorXd u1 = kkt_solve(rhs, W);
    const double denom = c_.dot(u1.head(n_)) + b_.dot(u1.segment(n_, p_)) +
                         h_.dot(u1.tail(m_)) - kappa_ / tau_;

    auto newton = [&](double sigma, const Eigen::VectorXd& ds, double dkappa,
                      Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                      Eigen::VectorXd& dsv, double& dtau, double& dkap) {
      Eigen::VectorXd r2(n_ + p_ + m_);
      r2.head(n_) = -(1.0 - sigma) * rx;
      r2.segment(n_, p_) = -(1.0 - sigma) * ry;
      const Eigen::VectorXd wlds = W.apply_W(W.lambda_solve(ds));
      r2.tail(m_) = -(1.0 - sigma) * rz - wlds;
      const Eigen::VectorXd u2 = kkt_solve(r2, W);

      const double num = -(1.0 - sigma) * rt - dkappa / tau_ - c_.dot(u2.head(n_)) -
                         b_.dot(u2.segment(n_, p_)) - h_.dot(u2.tail(m_));
      dtau = num / denom;
      dx = u2.head(n_) + dtau * u1.head(n_);
      dy = u2.segment(n_, p_) + dtau * u1.segment(n_, p_);
      dz = u2.tail(m_) + dtau * u1.tail(m_);
      dsv = wlds - W.apply_W2(dz);
      dkap = (dkappa - kappa_ * dtau) / tau_;
    };

    // Affine (predictor) direction.
    const Eigen::VectorXd lam_sq = W.jordan(W.lambda, W.lambda);
    Eigen::VectorXd dxa, dya, dza, dsa;
    double dtaua, dkapa;
    newton(0.0, -lam_sq, -tau_ * kappa_, dxa, dya, dza, dsa, dtaua, dkapa);

    double alpha_aff = std::min(max_step(lay_, s_, dsa), max_step(lay_, z_, dza));
    if (dtaua < 0.0) alpha_aff = std::min(alpha_aff, -tau_ / dtaua);
    if (dkapa < 0.0) alpha_aff = std::min(alpha_aff, -kappa_ / dkapa);
    alpha_aff = std::min(alpha_aff, 1.0);

    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 0.0, 0.9999);

    // Combined (corrector) direction with Mehrotra second-order term.
    const Eigen::VectorXd corr =
        W.jordan(W.apply_Winv(dsa), W.apply_W(dza));
    const Eigen::VectorXd ds =
        -lam_sq - corr + sigma * mu * e_;
    const double dkappa = -tau_ * kappa_ - dtaua * dkapa + sigma * mu;

    Eigen::VectorXd dx, dy, dz, dsv;
    double dtau, dkap;
    newton(sigma, ds, dkappa, dx, dy, dz, dsv, dtau, dkap);

    double alpha = std::min(max_step(lay_, s_, dsv), max_step(lay_, z_, dz));
    if (dtau < 0.0) alpha = std::min(alpha, -tau_ / dtau);
    if (dkap < 0.0) alpha = std::min(alpha, -kappa_ / dkap);
    alpha = std::min(cfg_.step_fraction * alpha, 1.0);

    if (alpha < 1e-7) {
      if (++consecutive_small_steps >= 2) break;
    } else {
      consecutive_small_steps = 0;
    }

    px = x_; py = y_; pz = z_; ps = s_;
    ptau = tau_; pkappa = kappa_;
    dx_l = dx; dy_l = dy; dz_l = dz; ds_l = dsv;
    dtau_l = dtau; dkap_l = dkap;
    alpha_l = alpha;
    have_step = true;

    x_ += alpha * dx;
    y_ += alpha * dy;
    z_ += alpha * dz;
    s_ += alpha * dsv;
    tau_ += alpha * dtau;
    kappa_ += alpha * dkap;

    if (tau_ <= 0.0 || kappa_ <= 0.0) break;
  }

  // Ran out of iterations or stalled: hand back the best iterate seen.
  return finish(iters_ >= cfg_.max_iterations ? SolverStatus::MaxIterations
                                              : SolverStatus::NumericalFailure);
}

class EmbeddedIpBackend final : public ConicBackend {
 public:
  std::string name() const override { return "embedded"; }
  ConeSolution solve(const ConeProgram& prog, const ConicSettings& settings) override {
    return solve_cone_program(prog, settings);
  }
};

}  // namespace

ConeSolution solve_cone_program(const ConeProgram& prog, const ConicSettings& settings) {
  int cone_rows = prog.nonneg;
  for (int d : prog.soc_dims) {
    if (d < 2) throw ValidationError("second-order cones need dimension >= 2");
    cone_rows += d;
  }
  if (cone_rows != prog.n_ineq())
    throw ValidationError("cone sizes do not add up to the inequality row count");
  if (prog.A.cols() != prog.n_vars() || prog.G.cols() != prog.n_vars() ||
      prog.A.rows() != prog.n_eq() || prog.G.rows() != prog.n_ineq())
    throw ValidationError("cone program matrix shapes are inconsistent");

  Ipm ipm(prog, settings);
  return ipm.run();
}

std::unique_ptr<ConicBackend> make_backend(const std::string& name) {
  if (name == "embedded") return std::make_unique<EmbeddedIpBackend>();
  throw ValidationError("unknown solver backend '" + name + "' (available: embedded)");
}

std::vector<std::string> available_backends() { return {"embedded"}; }

}  // namespace dfopf
