#pragma once

#include "dynopt/problem.hpp"

namespace dynopt {

// ---------------------------------------------------------------------------
// Multiple-shooting lift: the decision variable at knot k becomes
// u~_k = [u_k; x_{k+1}], the "dynamics" of the lifted problem is the selector
// Pi(u~) = x_{k+1}, and the true dynamics reappear as equality rows
// h(x, u~) = x_{k+1} - f(x, u) handled by the AL/PDAL penalty machinery.
// This makes the lifted problem an ordinary DDP instance: the forward pass on
// Pi is exactly the linear update law of the multiple-shooting variants.
// ---------------------------------------------------------------------------
struct MultiShootProblem {
  OCProblem aug;    ///< n states, m+n "controls"
  OCProblem base;   ///< original single-shooting problem

  int n() const { return base.n; }
  int m() const { return base.m; }

  /// Defect h_k = Pi(u~) - f(x, u) and its Jacobians h_x (n x n) and
  /// h_u~ (n x (m+n)).
  Vec defect(const Vec& x, const Vec& ut) const {
    return ut.tail(base.n) - base.dynamics(x, ut.head(base.m));
  }
  void defect_jac(const Vec& x, const Vec& ut, Mat& hx, Mat& hu) const {
    Mat fx, fu;
    base.dynamics_jac(x, ut.head(base.m), fx, fu);
    hx = -fx;
    hu = Mat::Zero(base.n, base.m + base.n);
    hu.leftCols(base.m) = -fu;
    hu.rightCols(base.n).setIdentity();
  }

  /// View of an augmented trajectory as a base trajectory carrying defects.
  Trajectory base_view(const Trajectory& t) const {
    Trajectory b;
    b.shooting_defects = true;
    b.X = t.X;
    b.U.reserve(t.U.size());
    for (const auto& ut : t.U) b.U.push_back(ut.head(base.m));
    return b;
  }

  /// Augmented trajectory from a state-trajectory guess plus controls.
  /// X0 may be dynamically infeasible; X0[0] is pinned to x_init.
  Trajectory lift(const std::vector<Vec>& X0, const std::vector<Vec>& U0) const {
    if (static_cast<int>(X0.size()) != base.N || static_cast<int>(U0.size()) != base.N - 1)
      throw DimensionError("multishoot lift: bad guess lengths");
    Trajectory t;
    t.X.resize(static_cast<size_t>(base.N));
    t.U.resize(static_cast<size_t>(base.N - 1));
    t.X[0] = base.x_init;
    for (int k = 0; k + 1 < base.N; ++k) {
      Vec ut(base.m + base.n);
      ut << U0[static_cast<size_t>(k)], X0[static_cast<size_t>(k) + 1];
      t.U[static_cast<size_t>(k)] = ut;
      t.X[static_cast<size_t>(k) + 1] = X0[static_cast<size_t>(k) + 1];
    }
    return t;
  }

  double max_defect(const Trajectory& t) const {
    double e = 0.0;
    for (int k = 0; k + 1 < base.N; ++k)
      e = std::max(e, inf_norm(defect(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)])));
    return e;
  }
};

inline MultiShootProblem make_multishoot(const OCProblem& base) {
  base.validate();
  MultiShootProblem ms;
  ms.base = base;
  OCProblem& a = ms.aug;
  a.N = base.N;
  a.n = base.n;
  a.m = base.m + base.n;
  a.x_init = base.x_init;
  const int n = base.n, m = base.m;

  a.dynamics = [n, m](const Vec&, const Vec& ut) { return ut.tail(n); };
  a.dynamics_jac = [n, m](const Vec&, const Vec&, Mat& fx, Mat& fu) {
    fx = Mat::Zero(n, n);
    fu = Mat::Zero(n, m + n);
    fu.rightCols(n).setIdentity();
  };

  a.stage_cost = [base](const Vec& x, const Vec& ut) {
    return base.stage_cost(x, ut.head(base.m));
  };
  a.stage_cost_derivs = [base, n, m](const Vec& x, const Vec& ut, Vec& lx, Vec& lu,
                                     Mat& lxx, Mat& luu, Mat& lux) {
    Vec blx, blu;
    Mat blxx, bluu, blux;
    base.stage_cost_derivs(x, ut.head(m), blx, blu, blxx, bluu, blux);
    lx = blx;
    lu = Vec::Zero(m + n);
    lu.head(m) = blu;
    lxx = blxx;
    luu = Mat::Zero(m + n, m + n);
    luu.topLeftCorner(m, m) = bluu;
    lux = Mat::Zero(m + n, n);
    lux.topRows(m) = blux;
  };
  a.terminal_cost = base.terminal_cost;
  a.terminal_cost_derivs = base.terminal_cost_derivs;

  // All base inequality rows, seen from the lifted variable: g does not
  // depend on the x_{k+1} half of u~.
  GenericConstraint lifted;
  lifted.rows = base.ineq_rows();
  if (lifted.rows > 0) {
    lifted.uses_state = true;
    lifted.uses_control = true;
    lifted.row_uses_control = base.rows_using_control();
    lifted.row_uses_state = base.rows_using_state();
    lifted.value = [base, m](const Vec& x, const Vec& ut) {
      return base.ineq(x, ut.head(m));
    };
    lifted.jac = [base, n, m](const Vec& x, const Vec& ut, Mat& gx, Mat& gu) {
      Mat bgx, bgu;
      base.ineq_jac(x, ut.head(m), bgx, bgu);
      gx = bgx;
      gu = Mat::Zero(bgx.rows(), m + n);
      gu.leftCols(m) = bgu;
    };
    lifted.weighted_hess = [base, n, m](const Vec& x, const Vec& ut, const Vec& wts,
                                        Mat& hxx, Mat& huu, Mat& hux) {
      Mat bhuu = Mat::Zero(m, m), bhux = Mat::Zero(m, n);
      base.ineq_hess_weighted(x, ut.head(m), wts, hxx, bhuu, bhux);
      huu.topLeftCorner(m, m) += bhuu;
      hux.topRows(m) += bhux;
    };
    a.constraints.push_back(lifted);
  }
  return ms;
}

}  // namespace dynopt
