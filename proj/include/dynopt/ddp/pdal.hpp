#pragma once

#include "dynopt/ddp/al.hpp"
#include "dynopt/ddp/multishoot.hpp"
#include "dynopt/ddp/solver.hpp"

namespace dynopt {

struct PDALOptions {
  ALSchedule schedule;
  DdpOptions ddp;
  double state_reg = 0.0;  ///< Tikhonov on the x_{k+1} block (multi only)
};

// ---------------------------------------------------------------------------
// Per-knot PDAL quantities. The active set comes from the shifted projection
// [g + mu (lambda_e - lambda/2)]_+ > 0, equivalently 2 pi_I - lambda > 0 with
// pi_I = rho.*g + lambda_e; m_pd = [2 pi_I - lambda]_+ acts as the multiplier
// estimate appearing in every derivative.
// ---------------------------------------------------------------------------
struct PDALKnot {
  Vec m_pd;
  Vec active;     ///< 1/0 mask
  Vec mu;         ///< 1 ./ rho
  Vec q_lambda;   ///< -(mu/2) .* (m_pd - lambda)  (the r_I residual)
  Vec m_mu_diag;  ///< (mu/2) .* (active + 1)
};

inline PDALKnot pdal_knot(const Vec& g, const Vec& lambda, const Vec& lambda_e,
                          const Vec& rho) {
  PDALKnot kn;
  const int w = static_cast<int>(g.size());
  kn.mu = rho.cwiseInverse();
  kn.m_pd = Vec::Zero(w);
  kn.active = Vec::Zero(w);
  for (int i = 0; i < w; ++i) {
    double v = 2.0 * (rho(i) * g(i) + lambda_e(i)) - lambda(i);
    if (v > 0.0) {
      kn.m_pd(i) = v;
      kn.active(i) = 1.0;
    }
  }
  kn.q_lambda = (-0.5) * kn.mu.cwiseProduct(kn.m_pd - lambda);
  kn.m_mu_diag = 0.5 * kn.mu.cwiseProduct(kn.active + Vec::Ones(w));
  return kn;
}

/// Scalar PDAL penalty of one inequality bundle (used by the line search).
inline double pdal_penalty_ineq(const Vec& g, const Vec& lambda, const Vec& lambda_e,
                                const Vec& rho) {
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double mu = 1.0 / rho(i);
    const double gp = std::max(0.0, g(i) + mu * (lambda_e(i) - 0.5 * lambda(i)));
    const double t1 = gp - mu * (lambda_e(i) - 0.5 * lambda(i));
    const double t2 = gp - mu * 0.5 * lambda(i);
    s += lambda_e(i) * t1 + 0.5 * rho(i) * t1 * t1 + 0.5 * rho(i) * t2 * t2;
  }
  return s;
}

/// Equality counterpart (multiple shooting): nu_e'h + |h|^2/(2 mu) +
/// |h + mu (nu_e - nu)|^2 / (2 mu).
inline double pdal_penalty_eq(const Vec& h, const Vec& nu, const Vec& nu_e,
                              const Vec& rho_e) {
  double s = 0.0;
  for (int j = 0; j < h.size(); ++j) {
    const double mu = 1.0 / rho_e(j);
    const double t = h(j) + mu * (nu_e(j) - nu(j));
    s += nu_e(j) * h(j) + 0.5 * rho_e(j) * h(j) * h(j) + 0.5 * rho_e(j) * t * t;
  }
  return s;
}

/// Joint per-knot system in (du, dlambda). `transformed` selects the
/// symmetric form (unknown [du; -dlambda]) whose left-hand side carries no
/// penalty parameter for linear constraints; otherwise the raw Newton system
/// of the quadratized PDAL (unknown [du; dlambda]).
struct PDALSystem {
  Mat lhs;
  Vec rhs_ff;
  Mat rhs_fb;
};

inline PDALSystem pdal_knot_system(const QExpansion& q, const Vec& lambda,
                                   const PDALKnot& kn, const Vec& rho, const Mat& gx,
                                   const Mat& gu, const Mat& wh_uu, const Mat& wh_ux,
                                   bool transformed) {
  const int m = static_cast<int>(q.Qu.size());
  const int n = static_cast<int>(q.Qx.size());
  const int w = static_cast<int>(lambda.size());
  Mat guA = kn.active.asDiagonal() * gu;
  Mat gxA = kn.active.asDiagonal() * gx;
  Mat Hs = q.Quu + wh_uu;          // Quu + sum m_pd g_uu
  Mat Hs_ux = q.Qux + wh_ux;       // Qux + sum m_pd g_ux

  PDALSystem sys;
  sys.lhs = Mat::Zero(m + w, m + w);
  sys.rhs_ff = Vec::Zero(m + w);
  sys.rhs_fb = Mat::Zero(m + w, n);
  if (transformed) {
    sys.lhs.topLeftCorner(m, m) = Hs;
    sys.lhs.topRightCorner(m, w) = -guA.transpose();
    sys.lhs.bottomLeftCorner(w, m) = -guA;
    sys.lhs.bottomRightCorner(w, w) = -Mat(kn.m_mu_diag.asDiagonal());
    sys.rhs_ff.head(m) = -(q.Qu + guA.transpose() * lambda);
    sys.rhs_ff.tail(w) = -kn.q_lambda;
    sys.rhs_fb.topRows(m) = -Hs_ux;
    sys.rhs_fb.bottomRows(w) = gxA;
  } else {
    Mat P = rho.asDiagonal();
    sys.lhs.topLeftCorner(m, m) = Hs + 2.0 * guA.transpose() * P * guA;
    sys.lhs.topRightCorner(m, w) = -guA.transpose();
    sys.lhs.bottomLeftCorner(w, m) = -guA;
    sys.lhs.bottomRightCorner(w, w) = Mat(kn.m_mu_diag.asDiagonal());
    sys.rhs_ff.head(m) = -(q.Qu + gu.transpose() * kn.m_pd);
    sys.rhs_ff.tail(w) = -kn.q_lambda;
    sys.rhs_fb.topRows(m) = -(Hs_ux + 2.0 * guA.transpose() * P * gxA);
    sys.rhs_fb.bottomRows(w) = gxA;
  }
  return sys;
}

namespace detail {

struct PDALGains {
  std::vector<Vec> kappa, r;
  std::vector<Mat> K, R;
  Vec rN;
  Mat RN;
  double grad_metric = 0.0;  ///< max_k ||grad_u L_PD||_inf
  double r_dual = 0.0;       ///< max_k ||q_lambda||_inf (the r_I metric)
  bool ok = false;
};

/// Backward sweep of single-shooting PDAL: joint (du, dlambda) gains and the
/// dual-aware value recursion.
inline PDALGains pdal_backward(const OCProblem& p, const Trajectory& t,
                               const DualState& d, double tau) {
  const int N = p.N;
  const int n = p.n, m = p.m, w = p.ineq_rows();
  PDALGains G;
  G.kappa.resize(static_cast<size_t>(N - 1));
  G.K.resize(static_cast<size_t>(N - 1));
  G.r.resize(static_cast<size_t>(N - 1));
  G.R.resize(static_cast<size_t>(N - 1));

  // terminal knot carries its own multiplier block
  const Vec& xN = t.X[static_cast<size_t>(N) - 1];
  Vec phix;
  Mat phixx;
  p.terminal_cost_derivs(xN, phix, phixx);
  Vec gN = p.ineq_terminal(xN);
  Mat gxN;
  p.ineq_jac_terminal(xN, gxN);
  PDALKnot knN = pdal_knot(gN, d.lambda.back(), d.lambda_e.back(), d.rho_ineq);
  Mat gxNA = knN.active.asDiagonal() * gxN;
  {
    Vec hat_x = phix + gxN.transpose() * knN.m_pd;
    Mat hat_xx = phixx + 2.0 * gxNA.transpose() * d.rho_ineq.asDiagonal() * gxNA;
    {
      Mat huu = Mat::Zero(m, m), hux = Mat::Zero(m, n);
      p.ineq_hess_weighted(xN, Vec::Zero(m), knN.m_pd, hat_xx, huu, hux);
    }
    Vec minv = knN.m_mu_diag.cwiseInverse();
    G.rN = -minv.cwiseProduct(knN.q_lambda);
    G.RN = minv.asDiagonal() * gxNA;
    Mat hat_xl = -gxNA.transpose();
    ValueExpansion v;
    v.Vx = hat_x + G.RN.transpose() * knN.q_lambda + hat_xl * G.rN +
           G.RN.transpose() * knN.m_mu_diag.asDiagonal() * G.rN;
    v.Vxx = hat_xx + hat_xl * G.RN + G.RN.transpose() * hat_xl.transpose() +
            G.RN.transpose() * knN.m_mu_diag.asDiagonal() * G.RN;
    v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();
    G.r_dual = inf_norm(knN.q_lambda);

    Vec Jx = hat_x;
    for (int k = N - 2; k >= 0; --k) {
      const Vec& x = t.X[static_cast<size_t>(k)];
      const Vec& u = t.U[static_cast<size_t>(k)];
      StageDerivs sd;
      p.stage_cost_derivs(x, u, sd.lx, sd.lu, sd.lxx, sd.luu, sd.lux);
      p.dynamics_jac(x, u, sd.fx, sd.fu);
      QExpansion q = assemble_q(sd, v);

      Vec g = p.ineq(x, u);
      Mat gx, gu;
      p.ineq_jac(x, u, gx, gu);
      PDALKnot kn = pdal_knot(g, d.lambda[static_cast<size_t>(k)],
                              d.lambda_e[static_cast<size_t>(k)], d.rho_ineq);
      Mat guA = kn.active.asDiagonal() * gu;
      Mat gxA = kn.active.asDiagonal() * gx;

      Mat whxx = Mat::Zero(n, n), whuu = Mat::Zero(m, m), whux = Mat::Zero(m, n);
      p.ineq_hess_weighted(x, u, kn.m_pd, whxx, whuu, whux);

      // inertia condition: H_s + guA' P guA must be PD (regularized by tau)
      Mat P = d.rho_ineq.asDiagonal();
      Mat Hschur = q.Quu + whuu + guA.transpose() * P * guA;
      Hschur.diagonal().array() += tau;
      if (Eigen::LLT<Mat>(Hschur).info() != Eigen::Success) return G;

      QExpansion qreg = q;
      qreg.Quu.diagonal().array() += tau;
      PDALSystem sys =
          pdal_knot_system(qreg, d.lambda[static_cast<size_t>(k)], kn, d.rho_ineq, gx, gu,
                           whuu, whux, /*transformed=*/true);
      Eigen::PartialPivLU<Mat> lu(sys.lhs);
      Vec sol_ff = lu.solve(sys.rhs_ff);
      Mat sol_fb = lu.solve(sys.rhs_fb);
      if (!sol_ff.allFinite() || !sol_fb.allFinite()) return G;

      Vec kappa = sol_ff.head(m);
      Mat K = sol_fb.topRows(m);
      Vec r = -sol_ff.tail(w);  // unknown was -dlambda
      Mat R = -sol_fb.bottomRows(w);
      G.kappa[static_cast<size_t>(k)] = kappa;
      G.K[static_cast<size_t>(k)] = K;
      G.r[static_cast<size_t>(k)] = r;
      G.R[static_cast<size_t>(k)] = R;

      // value recursion with the full (untransformed) blocks
      Vec Qhat_u = q.Qu + gu.transpose() * kn.m_pd;
      Vec Qhat_x = q.Qx + gx.transpose() * kn.m_pd;
      Mat Qhat_uu = q.Quu + whuu + 2.0 * guA.transpose() * P * guA;
      Mat Qhat_ux = q.Qux + whux + 2.0 * guA.transpose() * P * gxA;
      Mat Qhat_xx = q.Qxx + whxx + 2.0 * gxA.transpose() * P * gxA;
      Mat Qhat_ul = -guA.transpose();
      Mat Qhat_xl = -gxA.transpose();
      Mat Mmu = kn.m_mu_diag.asDiagonal();

      v.Vx = Qhat_x + K.transpose() * Qhat_u + R.transpose() * kn.q_lambda +
             K.transpose() * Qhat_uu * kappa + R.transpose() * (Mmu * r) +
             Qhat_ux.transpose() * kappa + Qhat_xl * r +
             K.transpose() * Qhat_ul * r + R.transpose() * Qhat_ul.transpose() * kappa;
      v.Vxx = Qhat_xx + K.transpose() * Qhat_uu * K + R.transpose() * Mmu * R +
              Qhat_ux.transpose() * K + K.transpose() * Qhat_ux + Qhat_xl * R +
              R.transpose() * Qhat_xl.transpose() + K.transpose() * Qhat_ul * R +
              R.transpose() * Qhat_ul.transpose() * K;
      v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();

      Vec Ju = (sd.lu + gu.transpose() * kn.m_pd) + sd.fu.transpose() * Jx;
      Jx = (sd.lx + gx.transpose() * kn.m_pd) + sd.fx.transpose() * Jx;
      G.grad_metric = std::max(G.grad_metric, inf_norm(Ju));
      G.r_dual = std::max(G.r_dual, inf_norm(kn.q_lambda));
    }
  }
  G.ok = true;
  return G;
}

/// PDAL objective over a trajectory/multiplier pair (fixed estimates).
inline double pdal_objective(const OCProblem& p, const Trajectory& t,
                             const std::vector<Vec>& lambda, const DualState& d) {
  double s = 0.0;
  for (int k = 0; k + 1 < p.N; ++k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& u = t.U[static_cast<size_t>(k)];
    s += p.stage_cost(x, u);
    if (p.ineq_rows() > 0)
      s += pdal_penalty_ineq(p.ineq(x, u), lambda[static_cast<size_t>(k)],
                             d.lambda_e[static_cast<size_t>(k)], d.rho_ineq);
  }
  s += p.terminal_cost(t.X.back());
  if (p.ineq_rows() > 0)
    s += pdal_penalty_ineq(p.ineq_terminal(t.X.back()), lambda.back(),
                           d.lambda_e.back(), d.rho_ineq);
  return s;
}

/// Multiplier update law of the forward pass: inactive rows exactly zero,
/// active rows projected to the nonnegative orthant.
inline Vec pdal_lambda_update(const Vec& lambda, const Vec& active, const Vec& r,
                              const Vec& Rdx, double alpha) {
  Vec ln = active.cwiseProduct(lambda + alpha * r + Rdx);
  return ln.cwiseMax(0.0);
}

}  // namespace detail

/// Single-shooting PDAL DDP (the joint (U, Lambda) inner loop plus AL-style
/// outer schedule on the estimates).
inline SolveReport solve_pdal_single(const OCProblem& p, const std::vector<Vec>& U0,
                                     const PDALOptions& opt = {}) {
  p.validate();
  const ALSchedule& sch = opt.schedule;
  SolveReport report;
  Trajectory traj = rollout(p, U0);
  const int w = p.ineq_rows();

  if (w == 0) {
    RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                    opt.ddp.tau_max};
    report.status = ddp_iterate(p, traj, reg, nullptr, opt.ddp, sch.inner_cap * sch.max_outer,
                                sch.eps_min, report);
    report.trajectory = std::move(traj);
    return report;
  }

  DualState duals = DualState::zeros(p);
  duals.rho_ineq = Vec::Constant(w, sch.rho0);
  duals.eta = Vec::Constant(w, sch.eta0);
  duals.eps_inner = sch.eps0;

  auto alphas = backtracking_alphas(opt.ddp.alpha_min);
  SolveStatus status = SolveStatus::MaxIterations;
  Vec prev_worst;
  bool done = false;

  for (int outer = 0; outer < sch.max_outer && !done; ++outer) {
    RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                    opt.ddp.tau_max};
    SolveStatus inner_status = SolveStatus::MaxIterations;
    double obj = detail::pdal_objective(p, traj, duals.lambda, duals);

    for (int it = 0; it < sch.inner_cap; ++it) {
      detail::PDALGains G = detail::pdal_backward(p, traj, duals, reg.tau);
      while (!G.ok) {
        reg.increase();
        if (reg.exceeded()) {
          report.status = SolveStatus::RegularizerExceeded;
          report.trajectory = std::move(traj);
          report.duals = std::move(duals);
          return report;
        }
        G = detail::pdal_backward(p, traj, duals, reg.tau);
      }

      auto record = [&](double alpha) {
        IterationRecord rec;
        rec.iter = static_cast<int>(report.iterations.size());
        rec.cost = total_cost(p, traj);
        rec.grad_metric = std::max(G.grad_metric, G.r_dual);
        auto v = violation_norms(p, traj);
        rec.ineq_violation = v.ineq;
        rec.complementarity = G.r_dual;
        rec.rho = duals.rho_ineq.maxCoeff();
        rec.alpha = alpha;
        rec.tau = reg.tau;
        report.iterations.push_back(rec);
      };

      if (std::max(G.grad_metric, G.r_dual) <= duals.eps_inner) {
        record(0.0);
        inner_status = SolveStatus::Converged;
        break;
      }

      // joint forward pass on the PDAL objective
      bool accepted = false;
      for (double a : alphas) {
        Trajectory trial;
        trial.X.resize(static_cast<size_t>(p.N));
        trial.U.resize(static_cast<size_t>(p.N - 1));
        trial.X[0] = p.x_init;
        std::vector<Vec> lam_trial(static_cast<size_t>(p.N));
        bool diverged = false;
        for (int k = 0; k + 1 < p.N; ++k) {
          Vec dx = trial.X[static_cast<size_t>(k)] - traj.X[static_cast<size_t>(k)];
          trial.U[static_cast<size_t>(k)] = traj.U[static_cast<size_t>(k)] +
                                            a * G.kappa[static_cast<size_t>(k)] +
                                            G.K[static_cast<size_t>(k)] * dx;
          Vec g = p.ineq(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)]);
          PDALKnot kn = pdal_knot(g, duals.lambda[static_cast<size_t>(k)],
                                  duals.lambda_e[static_cast<size_t>(k)], duals.rho_ineq);
          lam_trial[static_cast<size_t>(k)] = detail::pdal_lambda_update(
              duals.lambda[static_cast<size_t>(k)], kn.active, G.r[static_cast<size_t>(k)],
              G.R[static_cast<size_t>(k)] * dx, a);
          trial.X[static_cast<size_t>(k) + 1] =
              p.dynamics(trial.X[static_cast<size_t>(k)], trial.U[static_cast<size_t>(k)]);
          if (!all_finite(trial.X[static_cast<size_t>(k) + 1])) {
            diverged = true;
            break;
          }
        }
        if (diverged) continue;
        {
          Vec dxN = trial.X.back() - traj.X.back();
          Vec gN = p.ineq_terminal(traj.X.back());
          PDALKnot knN = pdal_knot(gN, duals.lambda.back(), duals.lambda_e.back(),
                                   duals.rho_ineq);
          lam_trial.back() = detail::pdal_lambda_update(duals.lambda.back(), knN.active,
                                                        G.rN, G.RN * dxN, a);
        }
        double trial_obj = detail::pdal_objective(p, trial, lam_trial, duals);
        if (trial_obj < obj) {
          traj = std::move(trial);
          duals.lambda = std::move(lam_trial);
          obj = trial_obj;
          reg.decrease();
          record(a);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        reg.increase();
        if (reg.exceeded()) {
          record(0.0);
          inner_status = SolveStatus::LineSearchFailed;
          break;
        }
      }
    }

    // outer updates: estimates then shared penalty/tolerance laws
    auto gs = detail::gather_ineq(p, traj);
    for (int k = 0; k < p.N; ++k) {
      PDALKnot kn = pdal_knot(gs[static_cast<size_t>(k)], duals.lambda[static_cast<size_t>(k)],
                              duals.lambda_e[static_cast<size_t>(k)], duals.rho_ineq);
      duals.lambda_e[static_cast<size_t>(k)] = kn.m_pd;
    }
    auto v = violation_norms(p, traj);
    if (v.ineq <= sch.tol_con && !report.iterations.empty() &&
        report.iterations.back().grad_metric <= sch.eps_min) {
      status = SolveStatus::Converged;
      done = true;
      break;
    }
    if (prev_worst.size() == 0) prev_worst = Vec::Zero(w);
    al_penalty_tolerance_update(duals, gs, {}, sch, &prev_worst,
                                inner_status == SolveStatus::Converged);
    status = inner_status;
  }

  report.status = status;
  report.trajectory = std::move(traj);
  report.duals = std::move(duals);
  return report;
}


namespace detail {

struct PDALMultiGains {
  std::vector<Vec> kappa, r_l, r_n;
  std::vector<Mat> K, R_l, R_n;
  Vec rN;
  Mat RN;
  double grad_metric = 0.0;
  double r_dual_ineq = 0.0;  ///< r_I
  double r_dual_eq = 0.0;    ///< r_E
  bool ok = false;
};

/// Backward sweep of multiple-shooting PDAL on the lifted problem: per-knot
/// joint system in (du~, dlambda, dnu), Appendix-C transformed.
inline PDALMultiGains pdal_multi_backward(const MultiShootProblem& ms,
                                          const Trajectory& t, const DualState& d,
                                          double tau, double state_reg) {
  const OCProblem& a = ms.aug;
  const int N = a.N;
  const int n = a.n, mt = a.m /* = m+n */, w = a.ineq_rows();
  PDALMultiGains G;
  G.kappa.resize(static_cast<size_t>(N - 1));
  G.K.resize(static_cast<size_t>(N - 1));
  G.r_l.resize(static_cast<size_t>(N - 1));
  G.R_l.resize(static_cast<size_t>(N - 1));
  G.r_n.resize(static_cast<size_t>(N - 1));
  G.R_n.resize(static_cast<size_t>(N - 1));

  // terminal: inequality block only (defects live on stage knots)
  const Vec& xN = t.X[static_cast<size_t>(N) - 1];
  Vec phix;
  Mat phixx;
  a.terminal_cost_derivs(xN, phix, phixx);
  Vec gN = a.ineq_terminal(xN);
  Mat gxN;
  a.ineq_jac_terminal(xN, gxN);
  PDALKnot knN = pdal_knot(gN, d.lambda.back(), d.lambda_e.back(), d.rho_ineq);
  Mat gxNA = knN.active.asDiagonal() * gxN;
  ValueExpansion v;
  {
    Vec hat_x = phix + gxN.transpose() * knN.m_pd;
    Mat hat_xx = phixx + 2.0 * gxNA.transpose() * d.rho_ineq.asDiagonal() * gxNA;
    Mat huu = Mat::Zero(mt, mt), hux = Mat::Zero(mt, n);
    a.ineq_hess_weighted(xN, Vec::Zero(mt), knN.m_pd, hat_xx, huu, hux);
    Vec minv = knN.m_mu_diag.cwiseInverse();
    G.rN = -minv.cwiseProduct(knN.q_lambda);
    G.RN = minv.asDiagonal() * gxNA;
    Mat hat_xl = -gxNA.transpose();
    v.Vx = hat_x + G.RN.transpose() * knN.q_lambda + hat_xl * G.rN +
           G.RN.transpose() * knN.m_mu_diag.asDiagonal() * G.rN;
    v.Vxx = hat_xx + hat_xl * G.RN + G.RN.transpose() * hat_xl.transpose() +
            G.RN.transpose() * knN.m_mu_diag.asDiagonal() * G.RN;
    v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();
    G.r_dual_ineq = inf_norm(knN.q_lambda);
  }

  Vec Jx;  // gradient recursion seed
  {
    Vec tmp_phix;
    Mat tmp;
    a.terminal_cost_derivs(xN, tmp_phix, tmp);
    Jx = tmp_phix + gxN.transpose() * knN.m_pd;
  }

  const Vec mu_e = d.rho_eq.cwiseInverse();
  for (int k = N - 2; k >= 0; --k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& ut = t.U[static_cast<size_t>(k)];
    StageDerivs sd;
    a.stage_cost_derivs(x, ut, sd.lx, sd.lu, sd.lxx, sd.luu, sd.lux);
    a.dynamics_jac(x, ut, sd.fx, sd.fu);
    QExpansion q = assemble_q(sd, v);
    if (state_reg > 0.0) q.Quu.diagonal().tail(n).array() += state_reg;

    Vec g = a.ineq(x, ut);
    Mat gx, gu;
    a.ineq_jac(x, ut, gx, gu);
    PDALKnot kn = pdal_knot(g, d.lambda[static_cast<size_t>(k)],
                            d.lambda_e[static_cast<size_t>(k)], d.rho_ineq);
    Mat guA = kn.active.asDiagonal() * gu;
    Mat gxA = kn.active.asDiagonal() * gx;

    Vec h = ms.defect(x, ut);
    Mat hx, hu;
    ms.defect_jac(x, ut, hx, hu);
    const Vec& nu = d.nu[static_cast<size_t>(k)];
    const Vec& nu_e = d.nu_e[static_cast<size_t>(k)];
    Vec pi_e = d.rho_eq.cwiseProduct(h) + nu_e;
    Vec m_e = 2.0 * pi_e - nu;
    Vec q_nu = -mu_e.cwiseProduct(pi_e - nu);

    Mat whxx = Mat::Zero(n, n), whuu = Mat::Zero(mt, mt), whux = Mat::Zero(mt, n);
    a.ineq_hess_weighted(x, ut, kn.m_pd, whxx, whuu, whux);

    // inertia condition on the (1,1) block of the congruence
    Mat P = d.rho_ineq.asDiagonal();
    Mat Pe = d.rho_eq.asDiagonal();
    Mat Hschur = q.Quu + whuu + guA.transpose() * P * guA + hu.transpose() * Pe * hu;
    Hschur.diagonal().array() += tau;
    if (Eigen::LLT<Mat>(Hschur).info() != Eigen::Success) return G;

    // transformed symmetric 3-block system, unknown [du~; -dl; -dn]
    const int dim = mt + w + n;
    Mat lhs = Mat::Zero(dim, dim);
    Vec rhs_ff = Vec::Zero(dim);
    Mat rhs_fb = Mat::Zero(dim, n);
    Mat Hm = q.Quu + whuu;
    Hm.diagonal().array() += tau;
    lhs.topLeftCorner(mt, mt) = Hm;
    lhs.block(0, mt, mt, w) = -guA.transpose();
    lhs.block(mt, 0, w, mt) = -guA;
    lhs.block(mt, mt, w, w) = -Mat(kn.m_mu_diag.asDiagonal());
    lhs.block(0, mt + w, mt, n) = -hu.transpose();
    lhs.block(mt + w, 0, n, mt) = -hu;
    lhs.block(mt + w, mt + w, n, n) = -Mat(mu_e.asDiagonal());
    rhs_ff.head(mt) = -(q.Qu + hu.transpose() * nu + guA.transpose() * d.lambda[static_cast<size_t>(k)]);
    rhs_ff.segment(mt, w) = -kn.q_lambda;
    rhs_ff.tail(n) = -q_nu;
    rhs_fb.topRows(mt) = -(q.Qux + whux);
    rhs_fb.middleRows(mt, w) = gxA;
    rhs_fb.bottomRows(n) = hx;

    Eigen::PartialPivLU<Mat> lu(lhs);
    Vec sol_ff = lu.solve(rhs_ff);
    Mat sol_fb = lu.solve(rhs_fb);
    if (!sol_ff.allFinite() || !sol_fb.allFinite()) return G;

    Vec kappa = sol_ff.head(mt);
    Mat K = sol_fb.topRows(mt);
    Vec r_l = -sol_ff.segment(mt, w);
    Mat R_l = -sol_fb.middleRows(mt, w);
    Vec r_n = -sol_ff.tail(n);
    Mat R_n = -sol_fb.bottomRows(n);
    G.kappa[static_cast<size_t>(k)] = kappa;
    G.K[static_cast<size_t>(k)] = K;
    G.r_l[static_cast<size_t>(k)] = r_l;
    G.R_l[static_cast<size_t>(k)] = R_l;
    G.r_n[static_cast<size_t>(k)] = r_n;
    G.R_n[static_cast<size_t>(k)] = R_n;

    // full untransformed blocks for the value recursion
    Vec Qhat_u = q.Qu + hu.transpose() * m_e + gu.transpose() * kn.m_pd;
    Vec Qhat_x = q.Qx + hx.transpose() * m_e + gx.transpose() * kn.m_pd;
    Mat Qhat_uu = q.Quu + whuu + 2.0 * guA.transpose() * P * guA +
                  2.0 * hu.transpose() * Pe * hu;
    Mat Qhat_ux = q.Qux + whux + 2.0 * guA.transpose() * P * gxA +
                  2.0 * hu.transpose() * Pe * hx;
    Mat Qhat_xx = q.Qxx + whxx + 2.0 * gxA.transpose() * P * gxA +
                  2.0 * hx.transpose() * Pe * hx;
    Mat Qhat_ul = -guA.transpose();
    Mat Qhat_xl = -gxA.transpose();
    Mat Qhat_un = -hu.transpose();
    Mat Qhat_xn = -hx.transpose();
    Mat Mmu = kn.m_mu_diag.asDiagonal();
    Mat Mnu = mu_e.asDiagonal();

    v.Vx = Qhat_x + K.transpose() * Qhat_u + R_l.transpose() * kn.q_lambda +
           R_n.transpose() * q_nu + K.transpose() * Qhat_uu * kappa +
           R_l.transpose() * (Mmu * r_l) + R_n.transpose() * (Mnu * r_n) +
           Qhat_ux.transpose() * kappa + Qhat_xl * r_l + Qhat_xn * r_n +
           K.transpose() * (Qhat_ul * r_l + Qhat_un * r_n) +
           R_l.transpose() * Qhat_ul.transpose() * kappa +
           R_n.transpose() * Qhat_un.transpose() * kappa;
    v.Vxx = Qhat_xx + K.transpose() * Qhat_uu * K + R_l.transpose() * Mmu * R_l +
            R_n.transpose() * Mnu * R_n + Qhat_ux.transpose() * K +
            K.transpose() * Qhat_ux + Qhat_xl * R_l + R_l.transpose() * Qhat_xl.transpose() +
            Qhat_xn * R_n + R_n.transpose() * Qhat_xn.transpose() +
            K.transpose() * Qhat_ul * R_l + R_l.transpose() * Qhat_ul.transpose() * K +
            K.transpose() * Qhat_un * R_n + R_n.transpose() * Qhat_un.transpose() * K;
    v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();

    Vec Ju = (sd.lu + hu.transpose() * m_e + gu.transpose() * kn.m_pd) +
             sd.fu.transpose() * Jx;
    Jx = (sd.lx + hx.transpose() * m_e + gx.transpose() * kn.m_pd) +
         sd.fx.transpose() * Jx;
    G.grad_metric = std::max(G.grad_metric, inf_norm(Ju));
    G.r_dual_ineq = std::max(G.r_dual_ineq, inf_norm(kn.q_lambda));
    G.r_dual_eq = std::max(G.r_dual_eq, inf_norm(q_nu));
  }
  G.ok = true;
  return G;
}

inline double pdal_multi_objective(const MultiShootProblem& ms, const Trajectory& t,
                                   const std::vector<Vec>& lambda,
                                   const std::vector<Vec>& nu, const DualState& d) {
  const OCProblem& a = ms.aug;
  double s = 0.0;
  for (int k = 0; k + 1 < a.N; ++k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& ut = t.U[static_cast<size_t>(k)];
    s += a.stage_cost(x, ut);
    if (a.ineq_rows() > 0)
      s += pdal_penalty_ineq(a.ineq(x, ut), lambda[static_cast<size_t>(k)],
                             d.lambda_e[static_cast<size_t>(k)], d.rho_ineq);
    s += pdal_penalty_eq(ms.defect(x, ut), nu[static_cast<size_t>(k)],
                         d.nu_e[static_cast<size_t>(k)], d.rho_eq);
  }
  s += a.terminal_cost(t.X.back());
  if (a.ineq_rows() > 0)
    s += pdal_penalty_ineq(a.ineq_terminal(t.X.back()), lambda.back(),
                           d.lambda_e.back(), d.rho_ineq);
  return s;
}

}  // namespace detail

/// Multiple-shooting PDAL DDP. X0 may be dynamically infeasible.
inline SolveReport solve_pdal_multi(const OCProblem& base, const std::vector<Vec>& X0,
                                    const std::vector<Vec>& U0,
                                    const PDALOptions& opt = {}) {
  MultiShootProblem ms = make_multishoot(base);
  const OCProblem& a = ms.aug;
  const ALSchedule& sch = opt.schedule;
  SolveReport report;
  Trajectory traj = ms.lift(X0, U0);
  const int w = a.ineq_rows();

  DualState duals = DualState::zeros(a, true);
  duals.rho_ineq = Vec::Constant(w, sch.rho0);
  duals.eta = Vec::Constant(w, sch.eta0);
  duals.rho_eq = Vec::Constant(base.n, sch.rho0);
  duals.eps_inner = sch.eps0;

  auto alphas = backtracking_alphas(opt.ddp.alpha_min);
  SolveStatus status = SolveStatus::MaxIterations;
  Vec prev_worst;
  bool done = false;

  for (int outer = 0; outer < sch.max_outer && !done; ++outer) {
    RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                    opt.ddp.tau_max};
    SolveStatus inner_status = SolveStatus::MaxIterations;
    double obj = detail::pdal_multi_objective(ms, traj, duals.lambda, duals.nu, duals);

    for (int it = 0; it < sch.inner_cap; ++it) {
      detail::PDALMultiGains G =
          detail::pdal_multi_backward(ms, traj, duals, reg.tau, opt.state_reg);
      while (!G.ok) {
        reg.increase();
        if (reg.exceeded()) {
          report.status = SolveStatus::RegularizerExceeded;
          report.trajectory = ms.base_view(traj);
          report.duals = std::move(duals);
          return report;
        }
        G = detail::pdal_multi_backward(ms, traj, duals, reg.tau, opt.state_reg);
      }

      auto record = [&](double alpha) {
        IterationRecord rec;
        rec.iter = static_cast<int>(report.iterations.size());
        rec.cost = total_cost(a, traj);
        rec.grad_metric = std::max({G.grad_metric, G.r_dual_ineq, G.r_dual_eq});
        auto v = violation_norms(a, traj);
        rec.ineq_violation = v.ineq;
        rec.eq_violation = ms.max_defect(traj);
        rec.complementarity = G.r_dual_ineq;
        rec.rho = std::max(duals.rho_ineq.size() ? duals.rho_ineq.maxCoeff() : 0.0,
                           duals.rho_eq.maxCoeff());
        rec.alpha = alpha;
        rec.tau = reg.tau;
        report.iterations.push_back(rec);
      };

      if (std::max({G.grad_metric, G.r_dual_ineq, G.r_dual_eq}) <= duals.eps_inner) {
        record(0.0);
        inner_status = SolveStatus::Converged;
        break;
      }

      bool accepted = false;
      for (double alpha : alphas) {
        Trajectory trial;
        trial.X.resize(static_cast<size_t>(a.N));
        trial.U.resize(static_cast<size_t>(a.N - 1));
        trial.X[0] = a.x_init;
        std::vector<Vec> lam_trial(static_cast<size_t>(a.N));
        std::vector<Vec> nu_trial(static_cast<size_t>(a.N - 1));
        bool diverged = false;
        for (int k = 0; k + 1 < a.N; ++k) {
          Vec dx = trial.X[static_cast<size_t>(k)] - traj.X[static_cast<size_t>(k)];
          trial.U[static_cast<size_t>(k)] = traj.U[static_cast<size_t>(k)] +
                                            alpha * G.kappa[static_cast<size_t>(k)] +
                                            G.K[static_cast<size_t>(k)] * dx;
          Vec g = a.ineq(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)]);
          PDALKnot kn = pdal_knot(g, duals.lambda[static_cast<size_t>(k)],
                                  duals.lambda_e[static_cast<size_t>(k)], duals.rho_ineq);
          lam_trial[static_cast<size_t>(k)] = detail::pdal_lambda_update(
              duals.lambda[static_cast<size_t>(k)], kn.active, G.r_l[static_cast<size_t>(k)],
              G.R_l[static_cast<size_t>(k)] * dx, alpha);
          nu_trial[static_cast<size_t>(k)] = duals.nu[static_cast<size_t>(k)] +
                                             alpha * G.r_n[static_cast<size_t>(k)] +
                                             G.R_n[static_cast<size_t>(k)] * dx;
          trial.X[static_cast<size_t>(k) + 1] =
              a.dynamics(trial.X[static_cast<size_t>(k)], trial.U[static_cast<size_t>(k)]);
          if (!all_finite(trial.X[static_cast<size_t>(k) + 1])) {
            diverged = true;
            break;
          }
        }
        if (diverged) continue;
        {
          Vec dxN = trial.X.back() - traj.X.back();
          Vec gN = a.ineq_terminal(traj.X.back());
          PDALKnot knN = pdal_knot(gN, duals.lambda.back(), duals.lambda_e.back(),
                                   duals.rho_ineq);
          lam_trial.back() = detail::pdal_lambda_update(duals.lambda.back(), knN.active,
                                                        G.rN, G.RN * dxN, alpha);
        }
        double trial_obj = detail::pdal_multi_objective(ms, trial, lam_trial, nu_trial, duals);
        if (trial_obj < obj) {
          traj = std::move(trial);
          duals.lambda = std::move(lam_trial);
          duals.nu = std::move(nu_trial);
          obj = trial_obj;
          reg.decrease();
          record(alpha);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        reg.increase();
        if (reg.exceeded()) {
          record(0.0);
          inner_status = SolveStatus::LineSearchFailed;
          break;
        }
      }
    }

    // outer estimate updates and penalty/tolerance laws
    auto gs = detail::gather_ineq(a, traj);
    for (int k = 0; k < a.N; ++k) {
      PDALKnot kn = pdal_knot(gs[static_cast<size_t>(k)], duals.lambda[static_cast<size_t>(k)],
                              duals.lambda_e[static_cast<size_t>(k)], duals.rho_ineq);
      duals.lambda_e[static_cast<size_t>(k)] = kn.m_pd;
    }
    std::vector<Vec> hs(static_cast<size_t>(a.N - 1));
    for (int k = 0; k + 1 < a.N; ++k) {
      hs[static_cast<size_t>(k)] = ms.defect(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)]);
      Vec pi_e = duals.rho_eq.cwiseProduct(hs[static_cast<size_t>(k)]) + duals.nu_e[static_cast<size_t>(k)];
      duals.nu_e[static_cast<size_t>(k)] = 2.0 * pi_e - duals.nu[static_cast<size_t>(k)];
    }
    auto v = violation_norms(a, traj);
    double defect = ms.max_defect(traj);
    if (v.ineq <= sch.tol_con && defect <= sch.tol_con && !report.iterations.empty() &&
        report.iterations.back().grad_metric <= sch.eps_min) {
      status = SolveStatus::Converged;
      done = true;
      break;
    }
    if (prev_worst.size() == 0) prev_worst = Vec::Zero(w);
    al_penalty_tolerance_update(duals, gs, hs, sch, &prev_worst,
                                inner_status == SolveStatus::Converged);
    status = inner_status;
  }

  report.status = status;
  report.trajectory = ms.base_view(traj);
  report.duals = std::move(duals);
  return report;
}

}  // namespace dynopt
