#pragma once

#include "dynopt/ddp/solver.hpp"

namespace dynopt {

struct BarrierOptions {
  double mu = 1e-2;              ///< fixed barrier parameter
  bool use_gauss_newton = true;  ///< drop the -mu sum g_yy / g term
  int max_iter = 300;
  double tol_grad = 1e-6;
  DdpOptions ddp;
  /// optional geometric continuation between restarts (1 = off)
  double mu_divisor = 1.0;
  int continuation_rounds = 1;
};

/// Exact (non-relaxed) log-barrier modification: the penalty is
/// -mu sum log(-g) and +inf on the boundary, so the line search rejects any
/// step whose rollout touches a constraint.
class BarrierHook : public QModHook {
 public:
  BarrierHook(const OCProblem& p, double mu, bool gauss_newton)
      : p_(p), mu_(mu), gn_(gauss_newton) {}

  double stage_penalty(int, const Vec& x, const Vec& u) const override {
    return barrier_value(p_.ineq(x, u));
  }
  double terminal_penalty(const Vec& xN) const override {
    return barrier_value(p_.ineq_terminal(xN));
  }

  void stage_mod(int, const Vec& x, const Vec& u, Vec& lx, Vec& lu, Mat& lxx,
                 Mat& luu, Mat& lux) const override {
    Vec g = p_.ineq(x, u);
    require_interior(g);
    Mat gx, gu;
    p_.ineq_jac(x, u, gx, gu);
    const int w = static_cast<int>(g.size());
    for (int i = 0; i < w; ++i) {
      const double c1 = -mu_ / g(i);        // gradient weight
      const double c2 = mu_ / (g(i) * g(i));  // Gauss-Newton curvature
      lx += c1 * gx.row(i).transpose();
      lu += c1 * gu.row(i).transpose();
      lxx += c2 * gx.row(i).transpose() * gx.row(i);
      luu += c2 * gu.row(i).transpose() * gu.row(i);
      lux += c2 * gu.row(i).transpose() * gx.row(i);
    }
    if (!gn_) {
      Vec wts = (-mu_) * g.cwiseInverse();
      p_.ineq_hess_weighted(x, u, wts, lxx, luu, lux);
    }
  }

  void terminal_mod(const Vec& xN, Vec& phix, Mat& phixx) const override {
    Vec g = p_.ineq_terminal(xN);
    require_interior(g);
    Mat gx;
    p_.ineq_jac_terminal(xN, gx);
    for (int i = 0; i < g.size(); ++i) {
      phix += (-mu_ / g(i)) * gx.row(i).transpose();
      phixx += (mu_ / (g(i) * g(i))) * gx.row(i).transpose() * gx.row(i);
    }
    if (!gn_) {
      Vec wts = (-mu_) * g.cwiseInverse();
      Mat hux = Mat::Zero(p_.m, p_.n), huu = Mat::Zero(p_.m, p_.m);
      p_.ineq_hess_weighted(xN, Vec::Zero(p_.m), wts, phixx, huu, hux);
    }
  }

 private:
  double barrier_value(const Vec& g) const {
    double s = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      if (g(i) >= 0.0) return kInf;
      s -= mu_ * std::log(-g(i));
    }
    return s;
  }
  static void require_interior(const Vec& g) {
    if (g.size() > 0 && g.maxCoeff() >= 0.0)
      throw InfeasibleError("barrier: expansion point is not strictly feasible");
  }

  const OCProblem& p_;
  double mu_;
  bool gn_;
};

/// Log-barrier DDP; requires a strictly feasible initial rollout and keeps
/// every accepted iterate strictly feasible.
inline SolveReport solve_barrier(const OCProblem& p, const std::vector<Vec>& U0,
                                 const BarrierOptions& opt = {}) {
  p.validate();
  SolveReport report;
  Trajectory traj = rollout(p, U0);
  {
    auto v = violation_norms(p, traj);
    bool interior = v.ineq == 0.0;
    if (interior) {
      for (int k = 0; k + 1 < p.N && interior; ++k)
        if (p.ineq(traj.X[static_cast<size_t>(k)], traj.U[static_cast<size_t>(k)]).maxCoeff() >= 0.0)
          interior = false;
      if (p.ineq_terminal(traj.X.back()).maxCoeff() >= 0.0) interior = false;
    }
    if (!interior)
      throw InfeasibleError("solve_barrier: initial rollout is not strictly feasible");
  }

  double mu = opt.mu;
  RegSchedule reg{opt.ddp.tau0, opt.ddp.tau_min, opt.ddp.tau_up, opt.ddp.tau_down,
                  opt.ddp.tau_max};
  SolveStatus status = SolveStatus::MaxIterations;
  for (int round = 0; round < std::max(1, opt.continuation_rounds); ++round) {
    BarrierHook hook(p, mu, opt.use_gauss_newton);
    status = ddp_iterate(p, traj, reg, &hook, opt.ddp, opt.max_iter, opt.tol_grad,
                         report, [&](IterationRecord& r) { r.mu = mu; });
    if (opt.mu_divisor <= 1.0) break;
    mu /= opt.mu_divisor;
    reg.tau = 0.0;
  }
  report.status = status;
  report.trajectory = std::move(traj);
  return report;
}

}  // namespace dynopt
