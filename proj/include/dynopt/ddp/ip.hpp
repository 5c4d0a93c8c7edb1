#pragma once

#include "dynopt/ddp/solver.hpp"

namespace dynopt {

enum class IPRecursion { Full, QDagger };

struct IPOptions {
  double mu0 = 0.1;
  double kappa_mu = 5.0;  ///< division factor per barrier level
  double mu_min = 1e-8;
  double tau_ftb = 0.995;  ///< fraction-to-the-boundary constant (<= 0.995)
  bool use_gauss_newton = true;
  IPRecursion recursion = IPRecursion::Full;
  int max_iter = 600;
  double tol = 1e-6;  ///< final residual target
  DdpOptions ddp;
  int filter_cap = 200;
};

namespace detail {

struct IPGains {
  std::vector<Vec> kappa, kappa_s, r;
  std::vector<Mat> K, K_s, R;
  // terminal slack/multiplier gains
  Vec kappa_sN, rN;
  Mat K_sN, RN;
  double grad_metric = 0.0;
  bool ok = false;
};

struct FilterPair {
  double violation;
  double barrier_cost;
};

inline bool filter_accepts(const std::vector<FilterPair>& filter, double v, double c) {
  for (const auto& f : filter)
    if (f.violation <= v && f.barrier_cost <= c) return false;
  return true;
}

inline void filter_insert(std::vector<FilterPair>& filter, double v, double c, int cap) {
  std::erase_if(filter, [&](const FilterPair& f) {
    return v <= f.violation && c <= f.barrier_cost;
  });
  filter.push_back({v, c});
  if (static_cast<int>(filter.size()) > cap) filter.erase(filter.begin());
}

}  // namespace detail

/// Per-knot reduced system of the primal-dual KKT conditions: eliminates the
/// slack row, factorizes Quu + gu' Sigma gu, and returns the six gains of
/// (du, ds, dlambda). Used by the backward pass and directly testable.
struct IPKnotResult {
  Vec kappa, kappa_s, r;
  Mat K, K_s, R;
  bool pd = false;
};

inline IPKnotResult ip_knot_solve(const QExpansion& q, const Vec& g, const Mat& gx,
                                  const Mat& gu, const Vec& s, const Vec& lam,
                                  double mu, double tau) {
  if (s.size() > 0 && (s.minCoeff() <= 0.0 || lam.minCoeff() <= 0.0))
    throw InfeasibleError("ip_knot_solve: slacks/multipliers must stay positive");
  IPKnotResult out;
  Vec sigma = lam.cwiseQuotient(s);                       // S^-1 Lambda
  Vec rc = (Vec::Constant(s.size(), mu) + lam.cwiseProduct(g)).cwiseQuotient(s);
  Mat Quu = q.Quu + gu.transpose() * sigma.asDiagonal() * gu;
  Mat Qux = q.Qux + gu.transpose() * sigma.asDiagonal() * gx;
  Vec Qu = q.Qu + gu.transpose() * rc;
  Quu.diagonal().array() += tau;
  Eigen::LLT<Mat> llt(Quu);
  if (llt.info() != Eigen::Success) return out;
  out.pd = true;
  out.kappa = -llt.solve(Qu);
  out.K = -llt.solve(Qux);
  out.r = rc + sigma.cwiseProduct(gu * out.kappa);
  out.R = sigma.asDiagonal() * (gx + gu * out.K);
  out.kappa_s = -(g + s) - gu * out.kappa;
  out.K_s = -gx - gu * out.K;
  return out;
}

/// Largest alpha on a grid for the scalar fraction-to-the-boundary condition
/// v + alpha*dv >= (1-tau) v without feedback (the coupled case goes through
/// a rollout; see solve_ip).
inline double ftb_scalar_max(double v, double dv, double tau_ftb,
                             const std::vector<double>& grid) {
  for (double a : grid)
    if (v + a * dv >= (1.0 - tau_ftb) * v) return a;
  return 0.0;
}

namespace detail {

/// Backward IP sweep over the whole horizon.
inline IPGains ip_backward(const OCProblem& p, const Trajectory& t,
                           const std::vector<Vec>& s, const std::vector<Vec>& lam,
                           double mu, double tau, const IPOptions& opt) {
  const int N = p.N;
  IPGains G;
  G.kappa.resize(static_cast<size_t>(N - 1));
  G.kappa_s.resize(static_cast<size_t>(N - 1));
  G.r.resize(static_cast<size_t>(N - 1));
  G.K.resize(static_cast<size_t>(N - 1));
  G.K_s.resize(static_cast<size_t>(N - 1));
  G.R.resize(static_cast<size_t>(N - 1));

  const Vec& xN = t.X[static_cast<size_t>(N) - 1];
  Vec phix;
  Mat phixx;
  p.terminal_cost_derivs(xN, phix, phixx);
  Vec gN = p.ineq_terminal(xN);
  Mat gxN;
  p.ineq_jac_terminal(xN, gxN);
  const Vec& sN = s[static_cast<size_t>(N) - 1];
  const Vec& lN = lam[static_cast<size_t>(N) - 1];

  G.kappa_sN = -(gN + sN);
  G.K_sN = -gxN;
  G.rN = (Vec::Constant(gN.size(), mu) + lN.cwiseProduct(gN)).cwiseQuotient(sN);
  G.RN = (lN.cwiseQuotient(sN)).asDiagonal() * gxN;

  ValueExpansion v;
  Vec Jx;
  if (opt.recursion == IPRecursion::Full) {
    Vec hat_phix = phix + gxN.transpose() * lN;
    Mat hat_phixx = phixx;
    if (!opt.use_gauss_newton) {
      Mat huu = Mat::Zero(p.m, p.m), hux = Mat::Zero(p.m, p.n);
      p.ineq_hess_weighted(xN, Vec::Zero(p.m), lN, hat_phixx, huu, hux);
    }
    v.Vx = hat_phix + G.RN.transpose() * gN + gxN.transpose() * G.rN;
    v.Vxx = hat_phixx + gxN.transpose() * G.RN + G.RN.transpose() * gxN;
    v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();
    Jx = hat_phix;
  } else {
    // original-work variant: terminal constraints dropped from the recursion
    v.Vx = phix;
    v.Vxx = phixx;
    Jx = phix + gxN.transpose() * lN;
  }
  G.grad_metric = 0.0;

  for (int k = N - 2; k >= 0; --k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& u = t.U[static_cast<size_t>(k)];
    StageDerivs d;
    p.stage_cost_derivs(x, u, d.lx, d.lu, d.lxx, d.luu, d.lux);
    p.dynamics_jac(x, u, d.fx, d.fu);
    QExpansion q = assemble_q(d, v);

    Vec g = p.ineq(x, u);
    Mat gx, gu;
    p.ineq_jac(x, u, gx, gu);
    const Vec& sk = s[static_cast<size_t>(k)];
    const Vec& lk = lam[static_cast<size_t>(k)];

    QExpansion qh = q;  // hatted blocks carrying lambda' g
    qh.Qu += gu.transpose() * lk;
    qh.Qx += gx.transpose() * lk;
    if (!opt.use_gauss_newton) {
      Mat hxx = Mat::Zero(p.n, p.n), huu = Mat::Zero(p.m, p.m), hux = Mat::Zero(p.m, p.n);
      p.ineq_hess_weighted(x, u, lk, hxx, huu, hux);
      qh.Qxx += hxx;
      qh.Quu += huu;
      qh.Qux += hux;
    }

    IPKnotResult kr = ip_knot_solve(qh, g, gx, gu, sk, lk, mu, tau);
    if (!kr.pd) return G;  // caller raises tau

    G.kappa[static_cast<size_t>(k)] = kr.kappa;
    G.K[static_cast<size_t>(k)] = kr.K;
    G.kappa_s[static_cast<size_t>(k)] = kr.kappa_s;
    G.K_s[static_cast<size_t>(k)] = kr.K_s;
    G.r[static_cast<size_t>(k)] = kr.r;
    G.R[static_cast<size_t>(k)] = kr.R;

    if (opt.recursion == IPRecursion::Full) {
      const Mat& K = kr.K;
      const Mat& R = kr.R;
      const Vec& kp = kr.kappa;
      const Vec& rr = kr.r;
      v.Vx = qh.Qx + K.transpose() * (qh.Qu + qh.Quu * kp + gu.transpose() * rr) +
             qh.Qux.transpose() * kp + R.transpose() * (g + gu * kp) +
             gx.transpose() * rr;
      v.Vxx = qh.Qxx + K.transpose() * qh.Quu * K + qh.Qux.transpose() * K +
              K.transpose() * qh.Qux + gx.transpose() * R + R.transpose() * gx +
              K.transpose() * gu.transpose() * R + R.transpose() * gu * K;
      v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();
    } else {
      Vec sigma = lk.cwiseQuotient(sk);
      Vec rc = (Vec::Constant(g.size(), mu) + lk.cwiseProduct(g)).cwiseQuotient(sk);
      QExpansion qd = qh;
      qd.Qu += gu.transpose() * rc;
      qd.Qx += gx.transpose() * rc;
      qd.Quu += gu.transpose() * sigma.asDiagonal() * gu;
      qd.Qxx += gx.transpose() * sigma.asDiagonal() * gx;
      qd.Qux += gu.transpose() * sigma.asDiagonal() * gx;
      v = value_recursion(qd, kr.kappa, kr.K);
    }

    // gradient of the Lagrangian J + sum lambda' g
    Vec Ju = d.lu + gu.transpose() * lk + d.fu.transpose() * Jx;
    Jx = d.lx + gx.transpose() * lk + d.fx.transpose() * Jx;
    G.grad_metric = std::max(G.grad_metric, inf_norm(Ju));
  }
  G.ok = true;
  return G;
}

struct IPTrial {
  Trajectory traj;
  std::vector<Vec> s;
  double viol_l1 = 0.0;
  double barrier_cost = 0.0;
  bool finite = false;
};

inline IPTrial ip_trial(const OCProblem& p, const Trajectory& t,
                        const std::vector<Vec>& s, const IPGains& G, double alpha,
                        double mu) {
  const int N = p.N;
  IPTrial tr;
  tr.traj.X.resize(static_cast<size_t>(N));
  tr.traj.U.resize(static_cast<size_t>(N - 1));
  tr.s.resize(static_cast<size_t>(N));
  tr.traj.X[0] = p.x_init;
  double J = 0.0, logsum = 0.0, viol = 0.0;
  for (int k = 0; k + 1 < N; ++k) {
    Vec dx = tr.traj.X[static_cast<size_t>(k)] - t.X[static_cast<size_t>(k)];
    tr.traj.U[static_cast<size_t>(k)] =
        t.U[static_cast<size_t>(k)] + alpha * G.kappa[static_cast<size_t>(k)] + G.K[static_cast<size_t>(k)] * dx;
    tr.s[static_cast<size_t>(k)] =
        s[static_cast<size_t>(k)] + alpha * G.kappa_s[static_cast<size_t>(k)] + G.K_s[static_cast<size_t>(k)] * dx;
    tr.traj.X[static_cast<size_t>(k) + 1] =
        p.dynamics(tr.traj.X[static_cast<size_t>(k)], tr.traj.U[static_cast<size_t>(k)]);
    if (!all_finite(tr.traj.X[static_cast<size_t>(k) + 1])) return tr;
    J += p.stage_cost(tr.traj.X[static_cast<size_t>(k)], tr.traj.U[static_cast<size_t>(k)]);
    Vec g = p.ineq(tr.traj.X[static_cast<size_t>(k)], tr.traj.U[static_cast<size_t>(k)]);
    viol += (tr.s[static_cast<size_t>(k)] + g).cwiseAbs().sum();
    for (int i = 0; i < tr.s[static_cast<size_t>(k)].size(); ++i) {
      if (tr.s[static_cast<size_t>(k)](i) <= 0.0) return tr;
      logsum += std::log(tr.s[static_cast<size_t>(k)](i));
    }
  }
  Vec dxN = tr.traj.X[static_cast<size_t>(N) - 1] - t.X[static_cast<size_t>(N) - 1];
  tr.s[static_cast<size_t>(N) - 1] = s[static_cast<size_t>(N) - 1] + alpha * G.kappa_sN + G.K_sN * dxN;
  J += p.terminal_cost(tr.traj.X[static_cast<size_t>(N) - 1]);
  Vec gN = p.ineq_terminal(tr.traj.X[static_cast<size_t>(N) - 1]);
  viol += (tr.s[static_cast<size_t>(N) - 1] + gN).cwiseAbs().sum();
  for (int i = 0; i < tr.s[static_cast<size_t>(N) - 1].size(); ++i) {
    if (tr.s[static_cast<size_t>(N) - 1](i) <= 0.0) return tr;
    logsum += std::log(tr.s[static_cast<size_t>(N) - 1](i));
  }
  tr.viol_l1 = viol;
  tr.barrier_cost = J - mu * logsum;
  tr.finite = true;
  return tr;
}

inline bool ftb_ok(const std::vector<Vec>& s_new, const std::vector<Vec>& s_old,
                   double tau_ftb) {
  for (size_t k = 0; k < s_old.size(); ++k) {
    Vec floors = (1.0 - tau_ftb) * s_old[k];
    for (int i = 0; i < s_old[k].size(); ++i)
      if (s_new[k](i) < floors(i)) return false;
  }
  return true;
}

}  // namespace detail

/// Interior-point DDP (infeasible formulation) with the modified two-step
/// line-search filter: alpha_s from a fraction-to-the-boundary backtracking
/// search, filter acceptance on (sum |s+g|_1, barrier cost), and a nested
/// alpha_lambda search on the accepted rollout.
inline SolveReport solve_ip(const OCProblem& p, const std::vector<Vec>& U0,
                            const IPOptions& opt = {}) {
  p.validate();
  SolveReport report;
  const int N = p.N;
  const int w = p.ineq_rows();
  Trajectory traj = rollout(p, U0);

  if (w == 0) {
    RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                    opt.ddp.tau_max};
    report.status =
        ddp_iterate(p, traj, reg, nullptr, opt.ddp, opt.max_iter, opt.tol, report);
    report.trajectory = std::move(traj);
    return report;
  }

  DualState duals = DualState::zeros(p);
  duals.mu = opt.mu0;
  duals.slack.assign(static_cast<size_t>(N), Vec::Zero(w));
  for (int k = 0; k < N; ++k) {
    Vec g = (k + 1 < N) ? p.ineq(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)])
                        : p.ineq_terminal(traj.X[static_cast<size_t>(k)]);
    duals.slack[static_cast<size_t>(k)] = (-g).cwiseMax(1e-2);
    duals.lambda[static_cast<size_t>(k)] =
        Vec::Constant(w, duals.mu).cwiseQuotient(duals.slack[static_cast<size_t>(k)]);
  }

  std::vector<detail::FilterPair> filter;
  RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                  opt.ddp.tau_max};
  SolveStatus status = SolveStatus::MaxIterations;
  auto alphas = backtracking_alphas(opt.ddp.alpha_min);

  auto residuals = [&](double mu) {
    double r_comp = 0.0, r_prim = 0.0;
    for (int k = 0; k < N; ++k) {
      Vec g = (k + 1 < N) ? p.ineq(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)])
                          : p.ineq_terminal(traj.X[static_cast<size_t>(k)]);
      const Vec& sk = duals.slack[static_cast<size_t>(k)];
      const Vec& lk = duals.lambda[static_cast<size_t>(k)];
      r_comp = std::max(r_comp, inf_norm(lk.cwiseProduct(sk) - Vec::Constant(w, mu)));
      r_prim = std::max(r_prim, inf_norm(g + sk));
    }
    return std::make_pair(r_comp, r_prim);
  };

  for (int it = 0; it < opt.max_iter; ++it) {
    detail::IPGains G =
        detail::ip_backward(p, traj, duals.slack, duals.lambda, duals.mu, reg.tau, opt);
    while (!G.ok) {
      reg.increase();
      if (reg.exceeded()) {
        report.status = SolveStatus::RegularizerExceeded;
        report.trajectory = std::move(traj);
        report.duals = std::move(duals);
        return report;
      }
      G = detail::ip_backward(p, traj, duals.slack, duals.lambda, duals.mu, reg.tau, opt);
    }

    auto [r_comp, r_prim] = residuals(duals.mu);
    double level_eps = std::max(duals.mu, opt.tol);

    auto record = [&](double alpha) {
      IterationRecord rec;
      rec.iter = static_cast<int>(report.iterations.size());
      rec.cost = total_cost(p, traj);
      rec.grad_metric = G.grad_metric;
      auto v = violation_norms(p, traj);
      rec.ineq_violation = v.ineq;
      rec.complementarity = r_comp;
      rec.mu = duals.mu;
      rec.rho = 1.0 / duals.mu;
      rec.alpha = alpha;
      rec.tau = reg.tau;
      report.iterations.push_back(rec);
    };

    if (std::max({G.grad_metric, r_comp, r_prim}) <= level_eps) {
      record(0.0);
      if (duals.mu <= opt.mu_min || level_eps <= opt.tol) {
        status = SolveStatus::Converged;
        break;
      }
      duals.mu /= opt.kappa_mu;
      filter.clear();
      continue;
    }

    // phase 1: largest alpha honoring the slack fraction-to-the-boundary rule
    double alpha_s_max = -1.0;
    detail::IPTrial cached;
    for (double a : alphas) {
      detail::IPTrial tr = detail::ip_trial(p, traj, duals.slack, G, a, duals.mu);
      if (!tr.finite) continue;
      if (detail::ftb_ok(tr.s, duals.slack, opt.tau_ftb)) {
        alpha_s_max = a;
        cached = std::move(tr);
        break;
      }
    }

    bool accepted = false;
    if (alpha_s_max > 0.0) {
      // phase 2: filter acceptance, backtracking below alpha_s_max
      for (double a : alphas) {
        if (a > alpha_s_max) continue;
        detail::IPTrial tr = (a == alpha_s_max)
                                 ? std::move(cached)
                                 : detail::ip_trial(p, traj, duals.slack, G, a, duals.mu);
        if (!tr.finite || !detail::ftb_ok(tr.s, duals.slack, opt.tau_ftb)) continue;
        if (!detail::filter_accepts(filter, tr.viol_l1, tr.barrier_cost)) continue;

        // nested multiplier step honoring its own fraction-to-the-boundary
        double alpha_l = 0.0;
        for (double al : alphas) {
          bool ok = true;
          for (int k = 0; k < N && ok; ++k) {
            Vec dx = tr.traj.X[static_cast<size_t>(k)] - traj.X[static_cast<size_t>(k)];
            const Vec& lk = duals.lambda[static_cast<size_t>(k)];
            Vec ln = (k + 1 < N)
                         ? Vec(lk + al * G.r[static_cast<size_t>(k)] + G.R[static_cast<size_t>(k)] * dx)
                         : Vec(lk + al * G.rN + G.RN * dx);
            if ((ln - (1.0 - opt.tau_ftb) * lk).minCoeff() < 0.0) ok = false;
          }
          if (ok) {
            alpha_l = al;
            break;
          }
        }
        for (int k = 0; k < N; ++k) {
          Vec dx = tr.traj.X[static_cast<size_t>(k)] - traj.X[static_cast<size_t>(k)];
          Vec& lk = duals.lambda[static_cast<size_t>(k)];
          Vec ln = (k + 1 < N)
                       ? Vec(lk + alpha_l * G.r[static_cast<size_t>(k)] + G.R[static_cast<size_t>(k)] * dx)
                       : Vec(lk + alpha_l * G.rN + G.RN * dx);
          lk = ln.cwiseMax((1.0 - opt.tau_ftb) * lk);  // positivity safety net
        }
        traj = std::move(tr.traj);
        duals.slack = std::move(tr.s);
        detail::filter_insert(filter, tr.viol_l1, tr.barrier_cost, opt.filter_cap);
        record(a);
        accepted = true;
        break;
      }
    }

    if (accepted) {
      reg.decrease();
    } else {
      reg.increase();
      if (reg.exceeded()) {
        status = SolveStatus::LineSearchFailed;  // filter stall
        record(0.0);
        break;
      }
    }
  }

  report.status = status;
  report.trajectory = std::move(traj);
  report.duals = std::move(duals);
  return report;
}

}  // namespace dynopt
