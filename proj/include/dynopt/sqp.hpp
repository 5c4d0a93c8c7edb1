#pragma once

#include "dynopt/problem.hpp"
#include "dynopt/qp.hpp"

namespace dynopt {

enum class SQPMode { Single, Multi };
enum class SQPHessian { GaussNewton, BFGS };

struct SQPOptions {
  SQPMode mode = SQPMode::Multi;
  SQPHessian hessian = SQPHessian::GaussNewton;
  double sigma = 1e-4;  ///< merit sufficient-decrease constant
  double eta = 0.4;     ///< merit curvature constant, sigma <= eta < 1/2
  double alpha_min = 1e-4;
  double kkt_tol = 1e-7;
  int max_iter = 150;
  double qp_tol = 1e-10;
  int max_reg_rounds = 12;  ///< Hessian regularization retries per iteration
};

// ---------------------------------------------------------------------------
// Stacked-trajectory helpers. Y = [X; U] with X in R^{nN}, U in R^{m(N-1)}.
// ---------------------------------------------------------------------------

/// Single-shooting condensing matrix F with dX = F dU for the linearized
/// dynamics along an exactly rolled-out trajectory.
inline Mat build_condensing(const OCProblem& p, const Trajectory& t) {
  const int n = p.n, m = p.m, N = p.N;
  const int mu = m * (N - 1);
  Mat F = Mat::Zero(n * N, mu);
  for (int k = 0; k + 1 < N; ++k) {
    Mat A, B;
    p.dynamics_jac(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)], A, B);
    F.middleRows(n * (k + 1), n) = A * F.middleRows(n * k, n);
    F.block(n * (k + 1), m * k, n, m) = B;
  }
  return F;
}

/// Multiple-shooting equality rows: F_hat(Y) + F_hat_Y dY = 0 with
/// residual rows [x_1 - x_init; x_{k+1} - f(x_k, u_k)].
struct MultiJacobian {
  Vec residual;  // nN
  Mat FY1;       // nN x nN   (I / -A bidiagonal)
  Mat FY2;       // nN x m(N-1)
};

inline MultiJacobian build_multi_jacobian(const OCProblem& p, const Trajectory& t) {
  const int n = p.n, m = p.m, N = p.N;
  MultiJacobian mj;
  mj.residual = Vec::Zero(n * N);
  mj.FY1 = Mat::Zero(n * N, n * N);
  mj.FY2 = Mat::Zero(n * N, m * (N - 1));
  mj.residual.head(n) = t.X[0] - p.x_init;
  mj.FY1.topLeftCorner(n, n).setIdentity();
  for (int k = 0; k + 1 < N; ++k) {
    Mat A, B;
    p.dynamics_jac(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)], A, B);
    mj.residual.segment(n * (k + 1), n) =
        t.X[static_cast<size_t>(k) + 1] - p.dynamics(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
    mj.FY1.block(n * (k + 1), n * (k + 1), n, n).setIdentity();
    mj.FY1.block(n * (k + 1), n * k, n, n) = -A;
    mj.FY2.block(n * (k + 1), m * k, n, m) = -B;
  }
  return mj;
}

// ---------------------------------------------------------------------------
// Appendix-A merit machinery (c >= 0 convention internally; the library's
// g <= 0 rows are negated at this boundary).
// ---------------------------------------------------------------------------

/// Minimum-norm penalty: rho* = 0 when b <= 0, else (b/|a|^2) a.
inline Vec merit_min_norm_rho(const Vec& a, double b) {
  if (b <= 0.0) return Vec::Zero(a.size());
  double na = a.squaredNorm();
  if (na <= 0.0) return Vec::Zero(a.size());
  return (b / na) * a;
}

/// Damping that permits only finitely many oscillations of rho.
inline Vec merit_damped_rho(const Vec& rho_prev, const Vec& rho_star,
                            double delta_rho = 1.0) {
  Vec out(rho_star.size());
  for (int i = 0; i < rho_star.size(); ++i) {
    double hat = rho_prev(i) < 4.0 * (rho_star(i) + delta_rho)
                     ? rho_prev(i)
                     : std::sqrt(rho_prev(i) * (rho_star(i) + delta_rho));
    out(i) = std::max(rho_star(i), hat);
  }
  return out;
}

/// Slack initialization cases of the AL merit.
inline Vec merit_init_slacks(const Vec& c, const Vec& lambda, const Vec& rho) {
  Vec s(c.size());
  for (int i = 0; i < c.size(); ++i)
    s(i) = rho(i) == 0.0 ? std::max(0.0, c(i))
                         : std::max(0.0, c(i) - lambda(i) / rho(i));
  return s;
}

/// Damped BFGS with the modified-AL curvature repair. Returns false when the
/// update was skipped (defined outcome, H untouched).
inline bool bfgs_update(Mat& H, const Vec& step, Vec y, const Vec& a_dagger,
                        double sigma_k, double omega_cap = 1e5) {
  double yd = y.dot(step);
  if (yd < sigma_k) {
    double b_dagger = sigma_k - yd;
    Vec ap = a_dagger.cwiseMax(0.0);
    double na = ap.squaredNorm();
    if (na <= 0.0) return false;
    Vec omega = (b_dagger / na) * ap;
    if (omega.squaredNorm() > omega_cap) return false;
    // delta_y' step = omega' a_dagger_+ scaled so that (y+dy)'step = sigma_k
    y += (b_dagger / na) * ap.cwiseProduct(a_dagger.cwiseSign().cwiseMax(0.0));
    // note: contribution of non-positive rows is zero by construction
    yd = y.dot(step);
    if (yd < 0.5 * sigma_k) return false;
  }
  Vec q = H * step;
  double qd = q.dot(step);
  if (yd <= 0.0 || qd <= 0.0) return false;
  H += (1.0 / yd) * (y * y.transpose()) - (1.0 / qd) * (q * q.transpose());
  H = 0.5 * (H + H.transpose()).eval();
  return true;
}

// ---------------------------------------------------------------------------

namespace detail {

struct CostStack {
  Vec JX, JU;
  Mat Hxx, Huu, Hux;  // Gauss-Newton (cost curvature only), block diagonal
};

inline CostStack stack_cost(const OCProblem& p, const Trajectory& t) {
  const int n = p.n, m = p.m, N = p.N;
  CostStack cs;
  cs.JX = Vec::Zero(n * N);
  cs.JU = Vec::Zero(m * (N - 1));
  cs.Hxx = Mat::Zero(n * N, n * N);
  cs.Huu = Mat::Zero(m * (N - 1), m * (N - 1));
  cs.Hux = Mat::Zero(m * (N - 1), n * N);
  for (int k = 0; k + 1 < N; ++k) {
    Vec lx, lu;
    Mat lxx, luu, lux;
    p.stage_cost_derivs(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)], lx, lu, lxx, luu, lux);
    cs.JX.segment(n * k, n) = lx;
    cs.JU.segment(m * k, m) = lu;
    cs.Hxx.block(n * k, n * k, n, n) = lxx;
    cs.Huu.block(m * k, m * k, m, m) = luu;
    cs.Hux.block(m * k, n * k, m, n) = lux;
  }
  Vec phix;
  Mat phixx;
  p.terminal_cost_derivs(t.X[static_cast<size_t>(N) - 1], phix, phixx);
  cs.JX.tail(n) = phix;
  cs.Hxx.bottomRightCorner(n, n) = phixx;
  return cs;
}

struct ConstraintStack {
  Vec G;   // wN
  Mat GX;  // wN x nN
  Mat GU;  // wN x m(N-1)
};

inline ConstraintStack stack_constraints(const OCProblem& p, const Trajectory& t) {
  const int n = p.n, m = p.m, N = p.N, w = p.ineq_rows();
  ConstraintStack st;
  st.G = Vec::Zero(w * N);
  st.GX = Mat::Zero(w * N, n * N);
  st.GU = Mat::Zero(w * N, m * (N - 1));
  for (int k = 0; k + 1 < N; ++k) {
    st.G.segment(w * k, w) = p.ineq(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
    Mat gx, gu;
    p.ineq_jac(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)], gx, gu);
    st.GX.block(w * k, n * k, w, n) = gx;
    st.GU.block(w * k, m * k, w, m) = gu;
  }
  st.G.tail(w) = p.ineq_terminal(t.X[static_cast<size_t>(N) - 1]);
  Mat gxN;
  p.ineq_jac_terminal(t.X[static_cast<size_t>(N) - 1], gxN);
  st.GX.bottomRightCorner(w, n) = gxN;
  return st;
}

inline Trajectory traj_from_controls(const OCProblem& p, const Vec& Ustk) {
  std::vector<Vec> U(static_cast<size_t>(p.N - 1));
  for (int k = 0; k + 1 < p.N; ++k) U[static_cast<size_t>(k)] = Ustk.segment(p.m * k, p.m);
  return rollout(p, U);
}

inline Trajectory traj_from_stacked(const OCProblem& p, const Vec& Y) {
  const int n = p.n, m = p.m, N = p.N;
  Trajectory t;
  t.shooting_defects = true;
  t.X.resize(static_cast<size_t>(N));
  t.U.resize(static_cast<size_t>(N - 1));
  for (int k = 0; k < N; ++k) t.X[static_cast<size_t>(k)] = Y.segment(n * k, n);
  for (int k = 0; k + 1 < N; ++k)
    t.U[static_cast<size_t>(k)] = Y.segment(n * N + m * k, m);
  return t;
}

inline double total_cost_stacked(const OCProblem& p, const Trajectory& t) {
  double J = 0.0;
  for (int k = 0; k + 1 < p.N; ++k)
    J += p.stage_cost(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
  return J + p.terminal_cost(t.X.back());
}

}  // namespace detail

struct SQPDiagnostics {
  /// merit slope check phi'(0) <= -1/2 d'Hd recorded every iteration
  std::vector<double> merit_slope;
  std::vector<double> merit_slope_bound;
  /// Cholesky success of H after each (possibly repaired) BFGS update
  bool hessian_always_pd = true;
  int rho_increases = 0;
  int rho_decreases = 0;
};

/// Single- and multiple-shooting SQP with the AL merit function, min-norm
/// penalty selection with damping, and BFGS or Gauss-Newton Hessians.
inline SolveReport solve_sqp(const OCProblem& p, const std::vector<Vec>& U0,
                             const std::vector<Vec>* X0 = nullptr,
                             const SQPOptions& opt = {},
                             SQPDiagnostics* diag = nullptr) {
  p.validate();
  const int n = p.n, m = p.m, N = p.N, w = p.ineq_rows();
  const int nu = m * (N - 1);
  const int nx = n * N;
  const bool multi = opt.mode == SQPMode::Multi;
  const int nvar = multi ? nx + nu : nu;
  const int nineq = w * N;

  SolveReport report;
  Trajectory traj;
  if (multi && X0) {
    traj = detail::traj_from_stacked(p, [&] {
      Vec Y(nx + nu);
      for (int k = 0; k < N; ++k) Y.segment(n * k, n) = (*X0)[static_cast<size_t>(k)];
      Y.head(n) = p.x_init;
      for (int k = 0; k + 1 < N; ++k) Y.segment(nx + m * k, m) = U0[static_cast<size_t>(k)];
      return Y;
    }());
  } else {
    traj = rollout(p, U0);
    traj.shooting_defects = multi;
  }

  Vec lambda = Vec::Zero(nineq);
  Vec nu_eq = Vec::Zero(multi ? nx : 0);
  Vec rho = Vec::Zero(nineq + (multi ? nx : 0));
  Mat Hbfgs;  // lazily initialized identity in the decision space
  if (opt.hessian == SQPHessian::BFGS) Hbfgs = Mat::Identity(nvar, nvar);
  SolveStatus status = SolveStatus::MaxIterations;

  // previous-iterate data for BFGS
  Vec prev_grad_f, prev_step;
  Mat prev_cjac;

  for (int it = 0; it < opt.max_iter; ++it) {
    detail::CostStack cs = detail::stack_cost(p, traj);
    detail::ConstraintStack gst = detail::stack_constraints(p, traj);
    MultiJacobian mj;
    Mat F;

    Vec grad_f(nvar);
    Mat H(nvar, nvar);
    Mat A_in(nineq, nvar);
    Vec b_in = -gst.G;
    Mat A_eq;
    Vec b_eq;

    if (multi) {
      mj = build_multi_jacobian(p, traj);
      grad_f << cs.JX, cs.JU;
      if (opt.hessian == SQPHessian::GaussNewton) {
        H.setZero();
        H.topLeftCorner(nx, nx) = cs.Hxx;
        H.bottomRightCorner(nu, nu) = cs.Huu;
        H.bottomLeftCorner(nu, nx) = cs.Hux;
        H.topRightCorner(nx, nu) = cs.Hux.transpose();
      } else {
        H = Hbfgs;
      }
      if (nineq > 0) {
        A_in.leftCols(nx) = gst.GX;
        A_in.rightCols(nu) = gst.GU;
      }
      A_eq.resize(nx, nvar);
      A_eq.leftCols(nx) = mj.FY1;
      A_eq.rightCols(nu) = mj.FY2;
      b_eq = -mj.residual;
    } else {
      F = build_condensing(p, traj);
      grad_f = F.transpose() * cs.JX + cs.JU;
      if (opt.hessian == SQPHessian::GaussNewton) {
        H = F.transpose() * cs.Hxx * F + cs.Huu + cs.Hux * F +
            (cs.Hux * F).transpose();
      } else {
        H = Hbfgs;
      }
      if (nineq > 0) A_in = gst.GX * F + gst.GU;
      A_eq = Mat::Zero(0, nvar);
      b_eq = Vec::Zero(0);
    }

    // KKT residuals at the current point
    Vec stat = grad_f;
    if (nineq > 0) stat += A_in.transpose() * lambda;
    if (multi) stat += A_eq.transpose() * nu_eq;
    double r_stat = inf_norm(stat);
    double r_feas = nineq > 0 ? inf_norm(positive_part(gst.G)) : 0.0;
    double r_eq = multi ? inf_norm(mj.residual) : 0.0;
    double r_comp = nineq > 0 ? inf_norm(lambda.cwiseProduct(gst.G)) : 0.0;

    auto record = [&](double alpha, double tau) {
      IterationRecord rec;
      rec.iter = static_cast<int>(report.iterations.size());
      rec.cost = detail::total_cost_stacked(p, traj);
      rec.grad_metric = r_stat;
      rec.ineq_violation = r_feas;
      rec.eq_violation = r_eq;
      rec.complementarity = r_comp;
      rec.rho = rho.size() ? rho.maxCoeff() : 0.0;
      rec.alpha = alpha;
      rec.tau = tau;
      report.iterations.push_back(rec);
    };

    if (std::max({r_stat, r_feas, r_eq, r_comp}) <= opt.kkt_tol) {
      record(0.0, 0.0);
      status = SolveStatus::Converged;
      break;
    }

    // QP subproblem, with Hessian regularization fallback on line-search
    // failure
    double tau = 0.0;
    bool stepped = false;
    double alpha_taken = 0.0;
    for (int round = 0; round < opt.max_reg_rounds && !stepped; ++round) {
      Mat Hreg = H;
      Hreg.diagonal().array() += tau;
      QPProblem qp{Hreg, grad_f, A_eq, b_eq,
                   nineq > 0 ? A_in : Mat::Zero(0, nvar),
                   nineq > 0 ? b_in : Vec::Zero(0)};
      QPResult sol = solve_qp(qp, opt.qp_tol, 200);
      if (sol.status == QPStatus::Infeasible) {
        record(0.0, tau);
        report.status = SolveStatus::LineSearchFailed;
        report.trajectory = traj;
        return report;
      }
      Vec dz = sol.z;
      Vec dlam = (nineq > 0 ? sol.lambda : Vec::Zero(0)) - lambda;
      Vec dnu = multi ? Vec(sol.nu - nu_eq) : Vec::Zero(0);

      // ---- merit setup (c >= 0 convention) ----
      Vec c = -gst.G;
      Vec s = merit_init_slacks(c, lambda, rho.head(nineq));
      Vec cjac_dz = nineq > 0 ? Vec(-(A_in * dz)) : Vec::Zero(0);
      Vec ds = c + cjac_dz - s;

      double quad = grad_f.dot(dz) + 0.5 * dz.dot(Hreg * dz);
      double b_merit = quad - dlam.dot(c - s) + lambda.dot(c - s) -
                       lambda.dot(c - s);  // = quad - (dlam - lambda)'(c-s) ... expanded below
      b_merit = quad - (dlam - lambda).dot(c - s);
      Vec a2(nineq + (multi ? nx : 0));
      a2.head(nineq) = (c - s).cwiseProduct(c - s);
      if (multi) {
        a2.tail(nx) = mj.residual.cwiseProduct(mj.residual);
        b_merit -= (dnu - nu_eq).dot(mj.residual);
      }
      Vec rho_star = merit_min_norm_rho(a2, b_merit);
      Vec rho_bar = merit_damped_rho(rho, rho_star);
      if (diag) {
        for (int i = 0; i < rho.size(); ++i) {
          if (rho_bar(i) > rho(i)) ++diag->rho_increases;
          if (rho_bar(i) < rho(i)) ++diag->rho_decreases;
        }
      }

      auto phi = [&](double alpha) {
        Trajectory ta;
        Vec Gt, Ft;
        if (multi) {
          Vec Y(nvar);
          for (int k = 0; k < N; ++k) Y.segment(n * k, n) = traj.X[static_cast<size_t>(k)];
          for (int k = 0; k + 1 < N; ++k) Y.segment(nx + m * k, m) = traj.U[static_cast<size_t>(k)];
          Y += alpha * dz;
          ta = detail::traj_from_stacked(p, Y);
          detail::ConstraintStack gs2 = detail::stack_constraints(p, ta);
          Gt = gs2.G;
          Ft = build_multi_jacobian(p, ta).residual;
        } else {
          Vec Ustk(nu);
          for (int k = 0; k + 1 < N; ++k) Ustk.segment(m * k, m) = traj.U[static_cast<size_t>(k)];
          Ustk += alpha * dz;
          ta = detail::traj_from_controls(p, Ustk);
          Gt = detail::stack_constraints(p, ta).G;
        }
        double J = detail::total_cost_stacked(p, ta);
        Vec ca = -Gt;
        Vec sa = s + alpha * ds;
        Vec la = lambda + alpha * dlam;
        double val = J - la.dot(ca - sa) +
                     0.5 * (ca - sa).dot(rho_bar.head(nineq).cwiseProduct(ca - sa));
        if (multi) {
          Vec na = nu_eq + alpha * dnu;
          val += -na.dot(Ft) + 0.5 * Ft.dot(rho_bar.tail(nx).cwiseProduct(Ft));
        }
        return val;
      };
      auto dphi = [&](double alpha) {
        double h = 1e-7 * std::max(1.0, std::abs(alpha));
        return (phi(alpha + h) - phi(alpha - h)) / (2.0 * h);
      };

      double phi0 = phi(0.0);
      double dphi0 = dphi(0.0);
      if (diag) {
        diag->merit_slope.push_back(dphi0);
        diag->merit_slope_bound.push_back(-0.5 * dz.dot(Hreg * dz));
      }

      double alpha = 0.0;
      // full-step test first
      {
        double phi1 = phi(1.0);
        double dphi1 = dphi(1.0);
        if (phi1 - phi0 <= opt.sigma * dphi0 &&
            (dphi1 <= opt.eta * dphi0 || std::abs(dphi1) <= -opt.eta * dphi0)) {
          alpha = 1.0;
        } else {
          for (double a = 0.5; a >= opt.alpha_min; a *= 0.5) {
            double pa = phi(a);
            if (pa - phi0 <= opt.sigma * a * dphi0 &&
                std::abs(dphi(a)) <= -opt.eta * dphi0) {
              alpha = a;
              break;
            }
          }
        }
      }
      if (alpha == 0.0) {
        tau = tau == 0.0 ? 1e-6 : tau * 10.0;  // regularize and re-solve
        continue;
      }

      // ---- accept the step ----
      rho = rho_bar;
      Vec step = alpha * dz;
      Trajectory tnew;
      if (multi) {
        Vec Y(nvar);
        for (int k = 0; k < N; ++k) Y.segment(n * k, n) = traj.X[static_cast<size_t>(k)];
        for (int k = 0; k + 1 < N; ++k) Y.segment(nx + m * k, m) = traj.U[static_cast<size_t>(k)];
        Y += step;
        tnew = detail::traj_from_stacked(p, Y);
      } else {
        Vec Ustk(nu);
        for (int k = 0; k + 1 < N; ++k) Ustk.segment(m * k, m) = traj.U[static_cast<size_t>(k)];
        Ustk += step;
        tnew = detail::traj_from_controls(p, Ustk);
      }
      Vec lambda_new = lambda + alpha * dlam;
      Vec nu_new = multi ? Vec(nu_eq + alpha * dnu) : nu_eq;

      if (opt.hessian == SQPHessian::BFGS) {
        // modified-Lagrangian gradient difference in the decision space
        detail::CostStack cs2 = detail::stack_cost(p, tnew);
        detail::ConstraintStack g2 = detail::stack_constraints(p, tnew);
        Vec grad_f_new(nvar);
        Mat A_in_new(nineq, nvar);
        if (multi) {
          grad_f_new << cs2.JX, cs2.JU;
          if (nineq > 0) {
            A_in_new.leftCols(nx) = g2.GX;
            A_in_new.rightCols(nu) = g2.GU;
          }
        } else {
          Mat F2 = build_condensing(p, tnew);
          grad_f_new = F2.transpose() * cs2.JX + cs2.JU;
          if (nineq > 0) A_in_new = g2.GX * F2 + g2.GU;
        }
        Vec y = grad_f_new - grad_f;
        if (nineq > 0) y += (A_in_new - A_in).transpose() * lambda_new;
        double sigma_k = alpha * (1.0 - opt.eta) * dz.dot(Hbfgs * dz);
        // curvature-repair data: d_L = c(new) - linearized c, per row
        Vec a_dagger = Vec::Zero(nineq);
        if (nineq > 0) {
          Vec c_new = -g2.G;
          Vec c_lin = -gst.G + (-(A_in * step));
          Vec d_L = c_new - c_lin;
          Vec jac_diff_step = -(A_in_new - A_in) * step;
          a_dagger = d_L.cwiseProduct(jac_diff_step);
        }
        bool updated = bfgs_update(Hbfgs, step, y, a_dagger, sigma_k);
        if (updated && diag) {
          Eigen::LLT<Mat> llt(Hbfgs);
          if (llt.info() != Eigen::Success) diag->hessian_always_pd = false;
        }
      }

      traj = std::move(tnew);
      lambda = std::move(lambda_new);
      nu_eq = std::move(nu_new);
      alpha_taken = alpha;
      stepped = true;
      record(alpha, tau);
    }

    if (!stepped) {
      status = SolveStatus::LineSearchFailed;
      break;
    }
    (void)alpha_taken;
  }

  report.status = status;
  report.trajectory = traj;
  return report;
}

inline SolveReport solve_sqp_single(const OCProblem& p, const std::vector<Vec>& U0,
                                    SQPOptions opt = {}, SQPDiagnostics* diag = nullptr) {
  opt.mode = SQPMode::Single;
  return solve_sqp(p, U0, nullptr, opt, diag);
}

inline SolveReport solve_sqp_multi(const OCProblem& p, const std::vector<Vec>& U0,
                                   const std::vector<Vec>& X0, SQPOptions opt = {},
                                   SQPDiagnostics* diag = nullptr) {
  opt.mode = SQPMode::Multi;
  return solve_sqp(p, U0, &X0, opt, diag);
}

}  // namespace dynopt
