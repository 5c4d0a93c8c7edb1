#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <variant>

#include "dynopt/types.hpp"

namespace dynopt {

// ---------------------------------------------------------------------------
// Inequality constraints g(x,u) <= 0.
//
// Constraints are declared as structured blocks so that solvers which need
// more than value/derivative access (ADMM projections, terminal handling)
// can exploit the structure. Aggregate callbacks over all rows are
// synthesized by OCProblem.
// ---------------------------------------------------------------------------

/// lo <= u <= hi elementwise, 2m rows: [u - hi; lo - u].
struct ControlBox {
  Vec lo, hi;
};

/// lo <= x[index] <= hi, 2 rows.
struct StateBox {
  int index = 0;
  double lo = 0.0, hi = 0.0;
};

/// Keep-out disk on two state coordinates: r^2 - |p - c|^2 <= 0.
struct StateDisk {
  int ix = 0, iy = 1;
  double cx = 0.0, cy = 0.0, radius = 1.0;
};

/// Arbitrary rows with user callbacks. Row Hessians default to zero.
struct GenericConstraint {
  int rows = 0;
  bool uses_state = true;
  bool uses_control = true;
  /// Optional per-row overrides of the block-wide flags above.
  std::vector<bool> row_uses_control;
  std::vector<bool> row_uses_state;
  std::function<Vec(const Vec& x, const Vec& u)> value;
  std::function<void(const Vec& x, const Vec& u, Mat& gx, Mat& gu)> jac;
  // Accumulates sum_i weight[i] * second derivatives of row i.
  std::function<void(const Vec& x, const Vec& u, const Vec& weights, Mat& hxx,
                     Mat& huu, Mat& hux)>
      weighted_hess;
};

using Constraint = std::variant<ControlBox, StateBox, StateDisk, GenericConstraint>;

// ---------------------------------------------------------------------------
// Optimal control problem over a horizon of N knots (states 1..N in the
// notation of the docs; storage is 0-based, the conversion lives here and
// nowhere else). Controls exist at knots 1..N-1.
// ---------------------------------------------------------------------------
struct OCProblem {
  int N = 0;  ///< number of knot points (states); N-1 controls
  int n = 0;  ///< state dimension
  int m = 0;  ///< control dimension
  Vec x_init;

  std::function<Vec(const Vec& x, const Vec& u)> dynamics;
  std::function<void(const Vec& x, const Vec& u, Mat& fx, Mat& fu)> dynamics_jac;

  std::function<double(const Vec& x, const Vec& u)> stage_cost;
  std::function<void(const Vec& x, const Vec& u, Vec& lx, Vec& lu, Mat& lxx,
                     Mat& luu, Mat& lux)>
      stage_cost_derivs;
  std::function<double(const Vec& x)> terminal_cost;
  std::function<void(const Vec& x, Vec& phix, Mat& phixx)> terminal_cost_derivs;

  std::vector<Constraint> constraints;

  // -- constraint row bookkeeping --------------------------------------------

  static int block_rows(const Constraint& c) {
    if (std::holds_alternative<ControlBox>(c))
      return 2 * static_cast<int>(std::get<ControlBox>(c).lo.size());
    if (std::holds_alternative<StateBox>(c)) return 2;
    if (std::holds_alternative<StateDisk>(c)) return 1;
    return std::get<GenericConstraint>(c).rows;
  }

  /// Total inequality rows w (0 for unconstrained problems).
  int ineq_rows() const {
    int w = 0;
    for (const auto& c : constraints) w += block_rows(c);
    return w;
  }

  /// Per-row flag: does the row involve the control?
  std::vector<bool> rows_using_control() const {
    std::vector<bool> f;
    for (const auto& c : constraints) {
      int r = block_rows(c);
      if (const auto* gc = std::get_if<GenericConstraint>(&c);
          gc && !gc->row_uses_control.empty()) {
        f.insert(f.end(), gc->row_uses_control.begin(), gc->row_uses_control.end());
        continue;
      }
      bool uses = std::holds_alternative<ControlBox>(c) ||
                  (std::holds_alternative<GenericConstraint>(c) &&
                   std::get<GenericConstraint>(c).uses_control);
      f.insert(f.end(), r, uses);
    }
    return f;
  }

  std::vector<bool> rows_using_state() const {
    std::vector<bool> f;
    for (const auto& c : constraints) {
      int r = block_rows(c);
      if (const auto* gc = std::get_if<GenericConstraint>(&c);
          gc && !gc->row_uses_state.empty()) {
        f.insert(f.end(), gc->row_uses_state.begin(), gc->row_uses_state.end());
        continue;
      }
      bool uses = !std::holds_alternative<ControlBox>(c) &&
                  (!std::holds_alternative<GenericConstraint>(c) ||
                   std::get<GenericConstraint>(c).uses_state);
      f.insert(f.end(), r, uses);
    }
    return f;
  }

  // -- aggregate constraint evaluation ---------------------------------------

  Vec ineq(const Vec& x, const Vec& u) const {
    Vec g(ineq_rows());
    int at = 0;
    for (const auto& c : constraints) {
      if (const auto* b = std::get_if<ControlBox>(&c)) {
        int mm = static_cast<int>(b->lo.size());
        g.segment(at, mm) = u - b->hi;
        g.segment(at + mm, mm) = b->lo - u;
        at += 2 * mm;
      } else if (const auto* s = std::get_if<StateBox>(&c)) {
        g(at) = x(s->index) - s->hi;
        g(at + 1) = s->lo - x(s->index);
        at += 2;
      } else if (const auto* d = std::get_if<StateDisk>(&c)) {
        double dx = x(d->ix) - d->cx, dy = x(d->iy) - d->cy;
        g(at) = d->radius * d->radius - (dx * dx + dy * dy);
        at += 1;
      } else {
        const auto& gc = std::get<GenericConstraint>(c);
        g.segment(at, gc.rows) = gc.value(x, u);
        at += gc.rows;
      }
    }
    return g;
  }

  /// Terminal inequality g(x_N): same dimension w; control-dependent rows are
  /// vacuous at the final knot (fixed value -1, zero derivatives). Plugging a
  /// literal zero control would falsely flag boxes with positive lower
  /// bounds, so vacuity is enforced structurally.
  Vec ineq_terminal(const Vec& x) const {
    Vec g = ineq(x, Vec::Zero(m));
    auto uses_u = rows_using_control();
    for (int i = 0; i < g.size(); ++i)
      if (uses_u[static_cast<size_t>(i)]) g(i) = -1.0;
    return g;
  }

  void ineq_jac(const Vec& x, const Vec& u, Mat& gx, Mat& gu) const {
    const int w = ineq_rows();
    gx = Mat::Zero(w, n);
    gu = Mat::Zero(w, m);
    int at = 0;
    for (const auto& c : constraints) {
      if (const auto* b = std::get_if<ControlBox>(&c)) {
        int mm = static_cast<int>(b->lo.size());
        gu.block(at, 0, mm, m).setIdentity();
        gu.block(at + mm, 0, mm, m) = -Mat::Identity(mm, m);
        at += 2 * mm;
      } else if (const auto* s = std::get_if<StateBox>(&c)) {
        gx(at, s->index) = 1.0;
        gx(at + 1, s->index) = -1.0;
        at += 2;
      } else if (const auto* d = std::get_if<StateDisk>(&c)) {
        gx(at, d->ix) = -2.0 * (x(d->ix) - d->cx);
        gx(at, d->iy) = -2.0 * (x(d->iy) - d->cy);
        at += 1;
      } else {
        const auto& gc = std::get<GenericConstraint>(c);
        Mat bx, bu;
        gc.jac(x, u, bx, bu);
        gx.block(at, 0, gc.rows, n) = bx;
        gu.block(at, 0, gc.rows, m) = bu;
        at += gc.rows;
      }
    }
  }

  void ineq_jac_terminal(const Vec& x, Mat& gx) const {
    Mat gu;
    ineq_jac(x, Vec::Zero(m), gx, gu);
    auto uses_u = rows_using_control();
    for (int i = 0; i < gx.rows(); ++i)
      if (uses_u[static_cast<size_t>(i)]) gx.row(i).setZero();
  }

  /// Accumulates sum_i weights[i] * (d2 g_i) into the given blocks.
  void ineq_hess_weighted(const Vec& x, const Vec& u, const Vec& weights,
                          Mat& hxx, Mat& huu, Mat& hux) const {
    int at = 0;
    for (const auto& c : constraints) {
      if (const auto* b = std::get_if<ControlBox>(&c)) {
        at += 2 * static_cast<int>(b->lo.size());  // linear rows
      } else if (std::holds_alternative<StateBox>(c)) {
        at += 2;  // linear rows
      } else if (const auto* d = std::get_if<StateDisk>(&c)) {
        hxx(d->ix, d->ix) += -2.0 * weights(at);
        hxx(d->iy, d->iy) += -2.0 * weights(at);
        at += 1;
      } else {
        const auto& gc = std::get<GenericConstraint>(c);
        if (gc.weighted_hess)
          gc.weighted_hess(x, u, weights.segment(at, gc.rows), hxx, huu, hux);
        at += gc.rows;
      }
    }
  }

  void validate() const {
    if (N < 2) throw DimensionError("OCProblem: N must be >= 2");
    for (const auto& c : constraints)
      if (const auto* b = std::get_if<ControlBox>(&c);
          b && (!b->lo.allFinite() || !b->hi.allFinite()))
        throw DimensionError(
            "OCProblem: ControlBox bounds must be finite (use a "
            "GenericConstraint for one-sided rows)");
    if (n < 1 || m < 1) throw DimensionError("OCProblem: n, m must be >= 1");
    if (x_init.size() != n) throw DimensionError("OCProblem: x_init size != n");
    if (!dynamics || !stage_cost || !terminal_cost)
      throw DimensionError("OCProblem: missing dynamics or cost callbacks");
  }
};

// ---------------------------------------------------------------------------
// Trajectory: X has N states, U has N-1 controls. For multiple shooting the
// stored X proposal need not satisfy the dynamics; `shooting_defects` marks
// that the equality residual x_{k+1} - f(x_k, u_k) is meaningful.
// ---------------------------------------------------------------------------
struct Trajectory {
  std::vector<Vec> X;
  std::vector<Vec> U;
  bool shooting_defects = false;

  int horizon() const { return static_cast<int>(X.size()); }

  /// Augmented control u~_k = [u_k; x_{k+1}] of the multiple-shooting form.
  Vec aug_control(int k) const {
    Vec v(U[static_cast<size_t>(k)].size() + X[static_cast<size_t>(k) + 1].size());
    v << U[static_cast<size_t>(k)], X[static_cast<size_t>(k) + 1];
    return v;
  }

  void check_shapes(const OCProblem& p) const {
    if (static_cast<int>(X.size()) != p.N || static_cast<int>(U.size()) != p.N - 1)
      throw DimensionError("Trajectory: |X| != N or |U| != N-1");
    for (const auto& x : X)
      if (x.size() != p.n) throw DimensionError("Trajectory: state size != n");
    for (const auto& u : U)
      if (u.size() != p.m) throw DimensionError("Trajectory: control size != m");
  }
};

// ---------------------------------------------------------------------------
// Dual state shared by the constrained solvers.
// ---------------------------------------------------------------------------
struct DualState {
  std::vector<Vec> lambda;    ///< N rows of w (terminal row uses g(x_N))
  std::vector<Vec> nu;        ///< N-1 rows of n (multiple shooting only)
  std::vector<Vec> lambda_e;  ///< PDAL estimates
  std::vector<Vec> nu_e;
  std::vector<Vec> slack;  ///< N rows of w (IP methods)
  Vec rho_ineq;            ///< per-constraint penalty, shared across time
  Vec rho_eq;
  double mu = 0.0;  ///< barrier / IP parameter
  Vec eta;          ///< per-constraint satisfaction tolerance
  double eps_inner = 0.0;

  static DualState zeros(const OCProblem& p, bool multiple_shooting = false) {
    DualState d;
    const int w = p.ineq_rows();
    d.lambda.assign(static_cast<size_t>(p.N), Vec::Zero(w));
    d.lambda_e.assign(static_cast<size_t>(p.N), Vec::Zero(w));
    if (multiple_shooting) {
      d.nu.assign(static_cast<size_t>(p.N - 1), Vec::Zero(p.n));
      d.nu_e.assign(static_cast<size_t>(p.N - 1), Vec::Zero(p.n));
      d.rho_eq = Vec::Ones(p.n);
    }
    d.rho_ineq = Vec::Ones(w);
    d.eta = Vec::Ones(w);
    return d;
  }
};

// ---------------------------------------------------------------------------
// Per-iteration record and solve report (Table-2 style metrics).
// ---------------------------------------------------------------------------
struct IterationRecord {
  int iter = 0;
  double cost = 0.0;          ///< original cost J
  double grad_metric = 0.0;   ///< gradient of the method's objective
  double ineq_violation = 0.0;
  double eq_violation = 0.0;
  double complementarity = 0.0;  ///< r_c where the method defines one
  double rho = 0.0;              ///< max penalty parameter snapshot
  double mu = 0.0;               ///< barrier parameter if any
  double alpha = 0.0;            ///< accepted step size
  double tau = 0.0;              ///< regularizer
};

struct SolveReport {
  std::vector<IterationRecord> iterations;
  SolveStatus status = SolveStatus::MaxIterations;
  Trajectory trajectory;
  DualState duals;

  double final_cost() const {
    return iterations.empty() ? 0.0 : iterations.back().cost;
  }
  double final_ineq_violation() const {
    return iterations.empty() ? 0.0 : iterations.back().ineq_violation;
  }
  double final_eq_violation() const {
    return iterations.empty() ? 0.0 : iterations.back().eq_violation;
  }
};

// ---------------------------------------------------------------------------
// problem_core operations
// ---------------------------------------------------------------------------

/// Applies the control sequence from x_init. Throws NonFiniteError on a
/// divergent rollout.
inline Trajectory rollout(const OCProblem& p, const std::vector<Vec>& U) {
  if (static_cast<int>(U.size()) != p.N - 1)
    throw DimensionError("rollout: |U| != N-1");
  Trajectory t;
  t.X.resize(static_cast<size_t>(p.N));
  t.U = U;
  t.X[0] = p.x_init;
  for (int k = 0; k + 1 < p.N; ++k) {
    t.X[static_cast<size_t>(k) + 1] = p.dynamics(t.X[static_cast<size_t>(k)], U[static_cast<size_t>(k)]);
    if (!all_finite(t.X[static_cast<size_t>(k) + 1]))
      throw NonFiniteError("rollout: non-finite state at knot " + std::to_string(k + 1));
  }
  return t;
}

inline double total_cost(const OCProblem& p, const Trajectory& t) {
  t.check_shapes(p);
  double J = 0.0;
  for (int k = 0; k + 1 < p.N; ++k)
    J += p.stage_cost(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
  J += p.terminal_cost(t.X[static_cast<size_t>(p.N) - 1]);
  return J;
}

struct ViolationNorms {
  double ineq = 0.0;
  double eq = 0.0;
};

/// Infinity norms over all knots: max_k ||[g]_+||_inf (terminal included) and
/// max_k ||x_{k+1} - f(x_k,u_k)||_inf when the trajectory carries shooting
/// defects (0 otherwise).
inline ViolationNorms violation_norms(const OCProblem& p, const Trajectory& t) {
  ViolationNorms v;
  if (p.ineq_rows() > 0) {
    for (int k = 0; k + 1 < p.N; ++k)
      v.ineq = std::max(v.ineq,
                        inf_norm(positive_part(p.ineq(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]))));
    v.ineq = std::max(v.ineq, inf_norm(positive_part(p.ineq_terminal(t.X[static_cast<size_t>(p.N) - 1]))));
  }
  if (t.shooting_defects) {
    for (int k = 0; k + 1 < p.N; ++k) {
      Vec r = t.X[static_cast<size_t>(k) + 1] - p.dynamics(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
      v.eq = std::max(v.eq, inf_norm(r));
    }
  }
  return v;
}

inline std::vector<Vec> zero_controls(const OCProblem& p) {
  return std::vector<Vec>(static_cast<size_t>(p.N - 1), Vec::Zero(p.m));
}

inline std::vector<Vec> constant_controls(const OCProblem& p, const Vec& u) {
  return std::vector<Vec>(static_cast<size_t>(p.N - 1), u);
}

}  // namespace dynopt
