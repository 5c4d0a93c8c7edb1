#pragma once

#include "dynopt/ddp/solver.hpp"
#include "dynopt/qp.hpp"

namespace dynopt {

struct ADMMOptions {
  double rho = 50.0;  ///< uniform consensus penalty (fixed unless adapt_rho)
  bool adapt_rho = false;
  double adapt_factor = 2.0;
  double adapt_trigger = 10.0;  ///< residual-ratio trigger
  double tol_primal = 1e-4;
  double tol_dual = 1e-4;
  int max_cycles = 300;
  int inner_ddp_iters = 10;  ///< capped DDP sub-solve per cycle
  DdpOptions ddp;
};

struct ADMMState {
  std::vector<Vec> U_c;      ///< N-1 safe control copies
  std::vector<Vec> X_c;      ///< N safe state copies
  std::vector<Vec> lam_u;    ///< control-consensus multipliers
  std::vector<Vec> lam_x;    ///< state-consensus multipliers
  Vec rho_u, rho_x;
  double primal_residual = kInf;
  double dual_residual = kInf;
};

namespace detail {

/// Exact projection of a control-part target onto the control constraint
/// rows; boxes clamp, anything else goes through a small QP on linearized
/// rows.
inline Vec admm_project_control(const OCProblem& p, const Vec& target) {
  Vec u = target;
  for (const auto& c : p.constraints) {
    if (const auto* b = std::get_if<ControlBox>(&c))
      u = u.cwiseMax(b->lo).cwiseMin(b->hi);
  }
  // generic control-only rows via projection QP (linear rows solved exactly)
  for (const auto& c : p.constraints) {
    const auto* gc = std::get_if<GenericConstraint>(&c);
    if (!gc || gc->uses_state || !gc->uses_control) continue;
    Vec xdummy = Vec::Zero(p.n);
    for (int pass = 0; pass < 3; ++pass) {
      Vec g = gc->value(xdummy, u);
      if (g.maxCoeff() <= 1e-12) break;
      Mat gx, gu;
      gc->jac(xdummy, u, gx, gu);
      QPProblem qp;
      qp.H = Mat::Identity(p.m, p.m);
      qp.c = -(target - u);
      qp.A_eq = Mat::Zero(0, p.m);
      qp.b_eq = Vec::Zero(0);
      qp.A_in = gu;
      qp.b_in = -g;
      auto r = solve_qp(qp, 1e-10);
      if (r.status == QPStatus::Infeasible)
        throw ProjectionError("admm: empty control copy set");
      u += r.z;
    }
  }
  return u;
}

inline Vec admm_project_state(const OCProblem& p, const Vec& target) {
  Vec x = target;
  for (const auto& c : p.constraints) {
    if (const auto* s = std::get_if<StateBox>(&c))
      x(s->index) = std::min(std::max(x(s->index), s->lo), s->hi);
  }
  // keep-out disks: push the point radially to the boundary, worst first
  for (int pass = 0; pass < 10; ++pass) {
    const StateDisk* worst = nullptr;
    double worst_v = 1e-12;
    for (const auto& c : p.constraints) {
      if (const auto* d = std::get_if<StateDisk>(&c)) {
        double dx = x(d->ix) - d->cx, dy = x(d->iy) - d->cy;
        double v = d->radius * d->radius - (dx * dx + dy * dy);
        if (v > worst_v) {
          worst_v = v;
          worst = d;
        }
      }
    }
    if (!worst) break;
    double dx = x(worst->ix) - worst->cx, dy = x(worst->iy) - worst->cy;
    double dist = std::sqrt(dx * dx + dy * dy);
    if (dist < 1e-12) {
      dx = 1.0;  // center hit: push along a fixed direction
      dy = 0.0;
      dist = 1.0;
    }
    x(worst->ix) = worst->cx + dx / dist * worst->radius;
    x(worst->iy) = worst->cy + dy / dist * worst->radius;
  }
  return x;
}

}  // namespace detail

/// Per-knot copy update: argmin ||y_new - y_c + lambda/rho||^2 over the
/// feasible set, split into its control and state parts.
inline void admm_copy_update(const OCProblem& p, const Trajectory& t,
                             ADMMState& st) {
  const int N = p.N;
  for (int k = 0; k + 1 < N; ++k) {
    Vec tu = t.U[static_cast<size_t>(k)] + st.lam_u[static_cast<size_t>(k)].cwiseQuotient(st.rho_u);
    st.U_c[static_cast<size_t>(k)] = detail::admm_project_control(p, tu);
    Vec tx = t.X[static_cast<size_t>(k)] + st.lam_x[static_cast<size_t>(k)].cwiseQuotient(st.rho_x);
    st.X_c[static_cast<size_t>(k)] = detail::admm_project_state(p, tx);
  }
  Vec txN = t.X[static_cast<size_t>(N) - 1] +
            st.lam_x[static_cast<size_t>(N) - 1].cwiseQuotient(st.rho_x);
  st.X_c[static_cast<size_t>(N) - 1] = detail::admm_project_state(p, txN);
}

/// Dual ascent on the consensus constraint plus the two residual norms.
inline void admm_dual_update(const OCProblem& p, const Trajectory& t, ADMMState& st,
                             const std::vector<Vec>& Xc_prev,
                             const std::vector<Vec>& Uc_prev) {
  const int N = p.N;
  double rp = 0.0, rd = 0.0;
  for (int k = 0; k < N; ++k) {
    if (k + 1 < N) {
      Vec ru = t.U[static_cast<size_t>(k)] - st.U_c[static_cast<size_t>(k)];
      st.lam_u[static_cast<size_t>(k)] += st.rho_u.cwiseProduct(ru);
      rp = std::max(rp, inf_norm(ru));
      rd = std::max(rd, inf_norm(st.rho_u.cwiseProduct(
                            st.U_c[static_cast<size_t>(k)] - Uc_prev[static_cast<size_t>(k)])));
    }
    Vec rx = t.X[static_cast<size_t>(k)] - st.X_c[static_cast<size_t>(k)];
    st.lam_x[static_cast<size_t>(k)] += st.rho_x.cwiseProduct(rx);
    rp = std::max(rp, inf_norm(rx));
    rd = std::max(rd, inf_norm(st.rho_x.cwiseProduct(st.X_c[static_cast<size_t>(k)] -
                                                     Xc_prev[static_cast<size_t>(k)])));
  }
  st.primal_residual = rp;
  st.dual_residual = rd;
}

/// Proximity-to-copy Q modification: gradient rho.*(y - y_c + lambda/rho),
/// Hessian diag(rho) regardless of constraint activity.
class ADMMHook : public QModHook {
 public:
  ADMMHook(const OCProblem& p, const ADMMState& st) : p_(p), st_(st) {}

  double stage_penalty(int k, const Vec& x, const Vec& u) const override {
    return half_sq(u, st_.U_c[static_cast<size_t>(k)], st_.lam_u[static_cast<size_t>(k)], st_.rho_u) +
           half_sq(x, st_.X_c[static_cast<size_t>(k)], st_.lam_x[static_cast<size_t>(k)], st_.rho_x);
  }
  double terminal_penalty(const Vec& xN) const override {
    return half_sq(xN, st_.X_c.back(), st_.lam_x.back(), st_.rho_x);
  }
  void stage_mod(int k, const Vec& x, const Vec& u, Vec& lx, Vec& lu, Mat& lxx,
                 Mat& luu, Mat& lux) const override {
    lu += st_.rho_u.cwiseProduct(u - st_.U_c[static_cast<size_t>(k)] +
                                 st_.lam_u[static_cast<size_t>(k)].cwiseQuotient(st_.rho_u));
    lx += st_.rho_x.cwiseProduct(x - st_.X_c[static_cast<size_t>(k)] +
                                 st_.lam_x[static_cast<size_t>(k)].cwiseQuotient(st_.rho_x));
    luu += Mat(st_.rho_u.asDiagonal());
    lxx += Mat(st_.rho_x.asDiagonal());
    (void)lux;
  }
  void terminal_mod(const Vec& xN, Vec& phix, Mat& phixx) const override {
    phix += st_.rho_x.cwiseProduct(xN - st_.X_c.back() +
                                   st_.lam_x.back().cwiseQuotient(st_.rho_x));
    phixx += Mat(st_.rho_x.asDiagonal());
  }

 private:
  static double half_sq(const Vec& y, const Vec& yc, const Vec& lam, const Vec& rho) {
    double s = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double t = y(i) - yc(i) + lam(i) / rho(i);
      s += 0.5 * rho(i) * t * t;
    }
    return s;
  }
  const OCProblem& p_;
  const ADMMState& st_;
};

/// ADMM-based constrained DDP: DDP primal update with proximity penalty,
/// per-knot feasible-copy projection, dual ascent, residual termination.
inline SolveReport solve_admm(const OCProblem& p, const std::vector<Vec>& U0,
                              const ADMMOptions& opt = {}) {
  p.validate();
  for (const auto& c : p.constraints) {
    const auto* gc = std::get_if<GenericConstraint>(&c);
    if (gc && gc->uses_state && gc->uses_control)
      throw ProjectionError(
          "solve_admm: constraints coupling state and control have no copy split");
  }

  SolveReport report;
  Trajectory traj = rollout(p, U0);
  ADMMState st;
  st.rho_u = Vec::Constant(p.m, opt.rho);
  st.rho_x = Vec::Constant(p.n, opt.rho);
  st.lam_u.assign(static_cast<size_t>(p.N - 1), Vec::Zero(p.m));
  st.lam_x.assign(static_cast<size_t>(p.N), Vec::Zero(p.n));
  st.U_c.assign(static_cast<size_t>(p.N - 1), Vec::Zero(p.m));
  st.X_c.assign(static_cast<size_t>(p.N), Vec::Zero(p.n));
  admm_copy_update(p, traj, st);  // copies from the projected initial rollout

  SolveStatus status = SolveStatus::MaxIterations;
  RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                  opt.ddp.tau_max};

  for (int cycle = 0; cycle < opt.max_cycles; ++cycle) {
    ADMMHook hook(p, st);
    SolveReport sub;
    SolveStatus inner =
        ddp_iterate(p, traj, reg, &hook, opt.ddp, opt.inner_ddp_iters, 1e-9, sub);
    if (inner == SolveStatus::RegularizerExceeded) {
      status = inner;
      break;
    }
    reg.tau = 0.0;

    auto Xc_prev = st.X_c;
    auto Uc_prev = st.U_c;
    admm_copy_update(p, traj, st);
    admm_dual_update(p, traj, st, Xc_prev, Uc_prev);

    IterationRecord rec;
    rec.iter = static_cast<int>(report.iterations.size());
    rec.cost = total_cost(p, traj);
    rec.grad_metric = sub.iterations.empty() ? 0.0 : sub.iterations.back().grad_metric;
    auto v = violation_norms(p, traj);
    rec.ineq_violation = v.ineq;
    rec.complementarity = st.primal_residual;
    rec.rho = st.rho_u.maxCoeff();
    rec.alpha = sub.iterations.empty() ? 0.0 : sub.iterations.back().alpha;
    rec.tau = 0.0;
    report.iterations.push_back(rec);

    if (st.primal_residual <= opt.tol_primal && st.dual_residual <= opt.tol_dual) {
      status = SolveStatus::Converged;
      break;
    }

    if (opt.adapt_rho) {
      // residual balancing, not constraint-violation based
      if (st.primal_residual > opt.adapt_trigger * st.dual_residual) {
        st.rho_u *= opt.adapt_factor;
        st.rho_x *= opt.adapt_factor;
      } else if (st.dual_residual > opt.adapt_trigger * st.primal_residual) {
        st.rho_u /= opt.adapt_factor;
        st.rho_x /= opt.adapt_factor;
      }
    }
  }

  report.status = status;
  report.trajectory = std::move(traj);
  return report;
}

}  // namespace dynopt
