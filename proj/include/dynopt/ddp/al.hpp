#pragma once

#include "dynopt/ddp/multishoot.hpp"
#include "dynopt/ddp/solver.hpp"

namespace dynopt {

/// Outer-loop schedule of the augmented-Lagrangian family (shared by PDAL).
/// The paper gives the update laws; the numbers are artifact defaults.
struct ALSchedule {
  double rho0 = 1.0;
  double beta = 10.0;  ///< penalty growth (>1)
  double rho_max = 1e8;
  double eta0 = 1.0;
  double eta_min = 1e-8;
  double alpha_eta = 0.1;
  double beta_eta = 0.9;
  double eps0 = 1.0;  ///< initial inner gradient tolerance
  double eps_min = 1e-6;
  double eps_shrink_success = 0.2;
  double eps_shrink_failure = 0.8;  ///< "conservatively reduced"
  int max_outer = 30;
  int inner_cap = 50;  ///< inner DDP iterations per outer loop
  double tol_con = 1e-6;
};

struct ALOptions {
  ALSchedule schedule;
  bool use_gauss_newton = true;  ///< drop the penalty-weighted g_yy term
  DdpOptions ddp;
  double state_reg = 0.0;  ///< Tikhonov on the x_{k+1} block (multi only)
};

namespace detail {

/// Shared AL penalty pieces for a w-row inequality bundle at one knot.
/// v = [g + lambda/rho]_+ ; penalty = sum rho_i/2 v_i^2.
inline double al_penalty(const Vec& g, const Vec& lambda, const Vec& rho) {
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    double v = std::max(0.0, g(i) + lambda(i) / rho(i));
    s += 0.5 * rho(i) * v * v;
  }
  return s;
}

}  // namespace detail

/// Single-shooting AL hook: modifies Q by the derivative of
/// sum_i rho_i/2 [g_i + lambda_i/rho_i]_+^2.
class ALSingleHook : public QModHook {
 public:
  ALSingleHook(const OCProblem& p, const DualState& duals, bool gauss_newton)
      : p_(p), d_(duals), gn_(gauss_newton) {}

  double stage_penalty(int k, const Vec& x, const Vec& u) const override {
    return detail::al_penalty(p_.ineq(x, u), d_.lambda[static_cast<size_t>(k)], d_.rho_ineq);
  }
  double terminal_penalty(const Vec& xN) const override {
    return detail::al_penalty(p_.ineq_terminal(xN), d_.lambda.back(), d_.rho_ineq);
  }

  void stage_mod(int k, const Vec& x, const Vec& u, Vec& lx, Vec& lu, Mat& lxx,
                 Mat& luu, Mat& lux) const override {
    Vec g = p_.ineq(x, u);
    Mat gx, gu;
    p_.ineq_jac(x, u, gx, gu);
    add_terms(g, d_.lambda[static_cast<size_t>(k)], &gx, &gu, x, u, &lx, &lu, &lxx, &luu, &lux);
  }

  void terminal_mod(const Vec& xN, Vec& phix, Mat& phixx) const override {
    Vec g = p_.ineq_terminal(xN);
    Mat gx;
    p_.ineq_jac_terminal(xN, gx);
    Vec dum_u = Vec::Zero(p_.m);
    Mat huu = Mat::Zero(p_.m, p_.m), hux = Mat::Zero(p_.m, p_.n);
    Vec dlu = Vec::Zero(p_.m);
    add_terms(g, d_.lambda.back(), &gx, nullptr, xN, dum_u, &phix, &dlu, &phixx, &huu, &hux);
  }

 private:
  void add_terms(const Vec& g, const Vec& lambda, const Mat* gx, const Mat* gu,
                 const Vec& x, const Vec& u, Vec* lx, Vec* lu, Mat* lxx, Mat* luu,
                 Mat* lux) const {
    Vec wts = Vec::Zero(g.size());
    for (int i = 0; i < g.size(); ++i) {
      const double rho = d_.rho_ineq(i);
      const double v = g(i) + lambda(i) / rho;
      if (v <= 0.0) continue;  // inactive row
      const double coef = rho * v;
      wts(i) = coef;
      if (gx) *lx += coef * gx->row(i).transpose();
      if (gu) *lu += coef * gu->row(i).transpose();
      if (gx) *lxx += rho * gx->row(i).transpose() * gx->row(i);
      if (gu) {
        *luu += rho * gu->row(i).transpose() * gu->row(i);
        if (gx) *lux += rho * gu->row(i).transpose() * gx->row(i);
      }
    }
    if (!gn_ && (wts.array() != 0.0).any()) p_.ineq_hess_weighted(x, u, wts, *lxx, *luu, *lux);
  }

  const OCProblem& p_;
  const DualState& d_;
  bool gn_;
};

/// Outer multiplier/penalty/tolerance update (Powell-Hestenes-Rockafellar
/// laws). `gs[k]` holds g at knot k (terminal included), `hs` the equality
/// residuals for multiple shooting (may be empty). `prev_worst`, when given,
/// enables the progress guard: a row whose positive violation did not shrink
/// by `progress_factor` since the last outer loop also gets its penalty
/// increased (the eta laws alone cannot tighten while rho == 1).
inline void al_multiplier_update(DualState& d, const std::vector<Vec>& gs,
                                 const std::vector<Vec>& hs) {
  for (size_t k = 0; k < gs.size(); ++k)
    d.lambda[k] = (d.lambda[k] + d.rho_ineq.cwiseProduct(gs[k])).cwiseMax(0.0);
  for (size_t k = 0; k < hs.size(); ++k)
    d.nu[k] += d.rho_eq.cwiseProduct(hs[k]);
}

/// Penalty/tolerance laws alone (shared by the PDAL outer loop, which has its
/// own multiplier-estimate update).
inline void al_penalty_tolerance_update(DualState& d, const std::vector<Vec>& gs,
                                        const std::vector<Vec>& hs,
                                        const ALSchedule& sch,
                                        Vec* prev_worst = nullptr,
                                        bool inner_converged = true,
                                        double progress_factor = 0.9) {
  const int w = static_cast<int>(d.rho_ineq.size());

  // per-row worst violation across the horizon
  Vec worst = Vec::Constant(w, -kInf);
  for (const auto& g : gs) worst = worst.cwiseMax(g);

  for (int i = 0; i < w; ++i) {
    bool stalled = inner_converged && prev_worst && prev_worst->size() == w &&
                   worst(i) > sch.tol_con &&
                   worst(i) > progress_factor * std::max((*prev_worst)(i), 0.0);
    if ((worst(i) >= d.eta(i) && worst(i) > sch.tol_con) || stalled) {
      d.rho_ineq(i) = std::min(sch.rho_max, sch.beta * d.rho_ineq(i));
      d.eta(i) = std::max(sch.eta0 / std::pow(d.rho_ineq(i), sch.alpha_eta), sch.eta_min);
    } else {
      d.eta(i) = std::max(d.eta(i) / std::pow(d.rho_ineq(i), sch.beta_eta), sch.eta_min);
    }
  }
  if (!hs.empty()) {
    double worst_h = 0.0;
    for (const auto& h : hs) worst_h = std::max(worst_h, inf_norm(h));
    if (worst_h >= sch.tol_con)
      d.rho_eq = (sch.beta * d.rho_eq).cwiseMin(sch.rho_max);
  }

  // every row against its own eta (stricter than the argmax coupling)
  bool success = true;
  for (int i = 0; i < w; ++i)
    if (worst(i) >= d.eta(i)) success = false;
  d.eps_inner = std::max(
      d.eps_inner * (success ? sch.eps_shrink_success : sch.eps_shrink_failure),
      sch.eps_min);
  if (prev_worst) *prev_worst = worst;
}

inline void al_outer_update(DualState& d, const std::vector<Vec>& gs,
                            const std::vector<Vec>& hs, const ALSchedule& sch,
                            Vec* prev_worst = nullptr, bool inner_converged = true,
                            double progress_factor = 0.9) {
  al_multiplier_update(d, gs, hs);
  al_penalty_tolerance_update(d, gs, hs, sch, prev_worst, inner_converged,
                              progress_factor);
}

namespace detail {

inline std::vector<Vec> gather_ineq(const OCProblem& p, const Trajectory& t) {
  std::vector<Vec> gs(static_cast<size_t>(p.N));
  for (int k = 0; k + 1 < p.N; ++k)
    gs[static_cast<size_t>(k)] = p.ineq(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
  gs[static_cast<size_t>(p.N - 1)] = p.ineq_terminal(t.X.back());
  return gs;
}

}  // namespace detail

/// Single-shooting AL DDP: inner hook-DDP on the AL objective, PHR outer
/// updates, until the violation and inner-gradient targets are met.
inline SolveReport solve_al_single(const OCProblem& p, const std::vector<Vec>& U0,
                                   const ALOptions& opt = {}) {
  p.validate();
  const ALSchedule& sch = opt.schedule;
  SolveReport report;
  Trajectory traj = rollout(p, U0);
  DualState duals = DualState::zeros(p);
  duals.rho_ineq = Vec::Constant(p.ineq_rows(), sch.rho0);
  duals.eta = Vec::Constant(p.ineq_rows(), sch.eta0);
  duals.eps_inner = sch.eps0;

  SolveStatus inner_status = SolveStatus::MaxIterations;
  Vec prev_worst;
  for (int outer = 0; outer < sch.max_outer; ++outer) {
    ALSingleHook hook(p, duals, opt.use_gauss_newton);
    RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                    opt.ddp.tau_max};
    double rho_snap = duals.rho_ineq.size() ? duals.rho_ineq.maxCoeff() : 0.0;
    inner_status = ddp_iterate(p, traj, reg, &hook, opt.ddp, sch.inner_cap,
                               duals.eps_inner, report,
                               [&](IterationRecord& r) { r.rho = rho_snap; });
    if (inner_status == SolveStatus::RegularizerExceeded) break;

    auto gs = detail::gather_ineq(p, traj);
    auto v = violation_norms(p, traj);
    if (v.ineq <= sch.tol_con &&
        report.iterations.back().grad_metric <= sch.eps_min) {
      inner_status = SolveStatus::Converged;
      break;
    }
    if (prev_worst.size() == 0) prev_worst = Vec::Zero(p.ineq_rows());
    al_outer_update(duals, gs, {}, sch, &prev_worst,
                    inner_status == SolveStatus::Converged);
  }
  report.status = inner_status;
  report.trajectory = std::move(traj);
  report.duals = std::move(duals);
  return report;
}

/// Multiple-shooting AL hook: inequality terms as in the single-shooting
/// case (on the lifted variable) plus equality penalties on the defects
/// h = x_{k+1} - f(x_k, u_k). Defect curvature uses the Gauss-Newton form
/// (first-order dynamics expansion throughout).
class ALMultiHook : public QModHook {
 public:
  ALMultiHook(const MultiShootProblem& ms, const DualState& duals, bool gauss_newton)
      : ms_(ms), aug_(ms.aug), d_(duals), ineq_hook_(ms.aug, duals, gauss_newton) {}

  double stage_penalty(int k, const Vec& x, const Vec& ut) const override {
    double s = ineq_hook_.stage_penalty(k, x, ut);
    Vec h = ms_.defect(x, ut);
    const Vec& nu = d_.nu[static_cast<size_t>(k)];
    for (int j = 0; j < h.size(); ++j) {
      double t = h(j) + nu(j) / d_.rho_eq(j);
      s += 0.5 * d_.rho_eq(j) * t * t;
    }
    return s;
  }
  double terminal_penalty(const Vec& xN) const override {
    return ineq_hook_.terminal_penalty(xN);
  }

  void stage_mod(int k, const Vec& x, const Vec& ut, Vec& lx, Vec& lu, Mat& lxx,
                 Mat& luu, Mat& lux) const override {
    ineq_hook_.stage_mod(k, x, ut, lx, lu, lxx, luu, lux);
    Vec h = ms_.defect(x, ut);
    Mat hx, hu;
    ms_.defect_jac(x, ut, hx, hu);
    const Vec& nu = d_.nu[static_cast<size_t>(k)];
    Vec coef(h.size());
    for (int j = 0; j < h.size(); ++j)
      coef(j) = d_.rho_eq(j) * (h(j) + nu(j) / d_.rho_eq(j));
    lx += hx.transpose() * coef;
    lu += hu.transpose() * coef;
    Mat Pe = d_.rho_eq.asDiagonal();
    lxx += hx.transpose() * Pe * hx;
    luu += hu.transpose() * Pe * hu;
    lux += hu.transpose() * Pe * hx;
  }

  void terminal_mod(const Vec& xN, Vec& phix, Mat& phixx) const override {
    ineq_hook_.terminal_mod(xN, phix, phixx);
  }

 private:
  const MultiShootProblem& ms_;
  const OCProblem& aug_;
  const DualState& d_;
  ALSingleHook ineq_hook_;
};

/// Multiple-shooting AL DDP. X0 is an arbitrary (possibly dynamically
/// infeasible) state-trajectory guess.
inline SolveReport solve_al_multi(const OCProblem& base, const std::vector<Vec>& X0,
                                  const std::vector<Vec>& U0, const ALOptions& opt = {}) {
  MultiShootProblem ms = make_multishoot(base);
  const ALSchedule& sch = opt.schedule;
  SolveReport report;
  Trajectory traj = ms.lift(X0, U0);
  DualState duals = DualState::zeros(ms.aug, true);
  duals.rho_ineq = Vec::Constant(ms.aug.ineq_rows(), sch.rho0);
  duals.eta = Vec::Constant(ms.aug.ineq_rows(), sch.eta0);
  duals.rho_eq = Vec::Constant(base.n, sch.rho0);
  duals.eps_inner = sch.eps0;

  DdpOptions ddp = opt.ddp;
  ddp.state_reg = opt.state_reg;
  ddp.reg_tail = base.n;

  SolveStatus inner_status = SolveStatus::MaxIterations;
  Vec prev_worst;
  for (int outer = 0; outer < sch.max_outer; ++outer) {
    ALMultiHook hook(ms, duals, opt.use_gauss_newton);
    RegSchedule reg{ddp.tau0, ddp.tau_min, ddp.tau_up, ddp.tau_down, ddp.tau_max};
    double rho_snap =
        std::max(duals.rho_ineq.size() ? duals.rho_ineq.maxCoeff() : 0.0,
                 duals.rho_eq.maxCoeff());
    inner_status = ddp_iterate(ms.aug, traj, reg, &hook, ddp, sch.inner_cap,
                               duals.eps_inner, report, [&](IterationRecord& r) {
                                 r.rho = rho_snap;
                                 r.eq_violation = ms.max_defect(traj);
                               });
    if (inner_status == SolveStatus::RegularizerExceeded) break;

    auto gs = detail::gather_ineq(ms.aug, traj);
    std::vector<Vec> hs(static_cast<size_t>(base.N - 1));
    for (int k = 0; k + 1 < base.N; ++k)
      hs[static_cast<size_t>(k)] = ms.defect(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)]);
    auto v = violation_norms(ms.aug, traj);
    double defect = ms.max_defect(traj);
    if (v.ineq <= sch.tol_con && defect <= sch.tol_con &&
        report.iterations.back().grad_metric <= sch.eps_min) {
      inner_status = SolveStatus::Converged;
      break;
    }
    if (prev_worst.size() == 0) prev_worst = Vec::Zero(ms.aug.ineq_rows());
    al_outer_update(duals, gs, hs, sch, &prev_worst,
                    inner_status == SolveStatus::Converged);
  }
  report.status = inner_status;
  report.trajectory = ms.base_view(traj);
  report.duals = std::move(duals);
  return report;
}

}  // namespace dynopt
