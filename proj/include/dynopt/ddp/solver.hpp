#pragma once

#include "dynopt/ddp/core.hpp"

namespace dynopt {

/// Modification hook through which the constrained single/multiple-shooting
/// variants (barrier, AL, ADMM) inject their penalty terms into the stage
/// objective and its derivatives. The unconstrained engine runs with a null
/// hook.
class QModHook {
 public:
  virtual ~QModHook() = default;

  /// Scalar penalty added to l(x_k, u_k); +inf rejects the point.
  virtual double stage_penalty(int k, const Vec& x, const Vec& u) const = 0;
  virtual double terminal_penalty(const Vec& xN) const = 0;

  /// Adds penalty derivatives to the stage expansion.
  virtual void stage_mod(int k, const Vec& x, const Vec& u, Vec& lx, Vec& lu,
                         Mat& lxx, Mat& luu, Mat& lux) const = 0;
  virtual void terminal_mod(const Vec& xN, Vec& phix, Mat& phixx) const = 0;
};

/// Objective the hook-DDP engine minimizes: J plus hook penalties.
inline double modified_cost(const OCProblem& p, const Trajectory& t,
                            const QModHook* hook) {
  double J = 0.0;
  for (int k = 0; k + 1 < p.N; ++k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& u = t.U[static_cast<size_t>(k)];
    J += p.stage_cost(x, u);
    if (hook) {
      double pen = hook->stage_penalty(k, x, u);
      if (!std::isfinite(pen)) return kInf;
      J += pen;
    }
  }
  const Vec& xN = t.X[static_cast<size_t>(p.N) - 1];
  J += p.terminal_cost(xN);
  if (hook) {
    double pen = hook->terminal_penalty(xN);
    if (!std::isfinite(pen)) return kInf;
    J += pen;
  }
  return J;
}

struct DdpOptions {
  int max_iter = 200;
  double tol_grad = 1e-8;
  double tau0 = 0.0;
  double tau_up = 10.0;
  double tau_down = 10.0;
  double tau_min = 1e-6;
  double tau_max = 1e10;
  double alpha_min = 1.0 / 1024.0;
  /// Tikhonov shift applied to the trailing `reg_tail` diagonal entries of
  /// Quu (the state block of the augmented control in multiple shooting).
  double state_reg = 0.0;
  int reg_tail = 0;
};

struct BackwardPass {
  std::vector<Vec> kappa;
  std::vector<Mat> K;
  double grad_metric = 0.0;  ///< max_k ||J_u,k||_inf of the modified objective
  double dV1 = 0.0, dV2 = 0.0;
  bool pd_without_reg = true;
  bool ok = false;  ///< false: Cholesky failed at this tau
};

enum class ForwardOutcome { Accepted, Unchanged, Failed };

struct ForwardPass {
  ForwardOutcome outcome = ForwardOutcome::Failed;
  Trajectory traj;
  double cost = kInf;
  double alpha = 0.0;
};

/// Backward sweep with pluggable Q modification. Returns ok=false when the
/// regularized Quu fails its Cholesky factorization (caller raises tau).
inline BackwardPass backward_pass(const OCProblem& p, const Trajectory& t,
                                  double tau, const QModHook* hook,
                                  const DdpOptions& opt = {}) {
  const int N = p.N;
  BackwardPass bp;
  bp.kappa.resize(static_cast<size_t>(N - 1));
  bp.K.resize(static_cast<size_t>(N - 1));

  const Vec& xN = t.X[static_cast<size_t>(N) - 1];
  ValueExpansion v;
  Vec phix;
  Mat phixx;
  p.terminal_cost_derivs(xN, phix, phixx);
  if (hook) hook->terminal_mod(xN, phix, phixx);
  v.Vx = phix;
  v.Vxx = phixx;

  Vec Jx = phix;  // gradient recursion of the modified objective
  bp.grad_metric = 0.0;

  for (int k = N - 2; k >= 0; --k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& u = t.U[static_cast<size_t>(k)];
    StageDerivs d;
    p.stage_cost_derivs(x, u, d.lx, d.lu, d.lxx, d.luu, d.lux);
    p.dynamics_jac(x, u, d.fx, d.fu);
    if (hook) hook->stage_mod(k, x, u, d.lx, d.lu, d.lxx, d.luu, d.lux);

    QExpansion q = assemble_q(d, v);

    Mat Quu_reg = q.Quu;
    if (opt.state_reg > 0.0 && opt.reg_tail > 0)
      Quu_reg.diagonal().tail(opt.reg_tail).array() += opt.state_reg;
    Mat Quu_unshifted = Quu_reg;
    Quu_reg.diagonal().array() += tau;

    Eigen::LLT<Mat> llt(Quu_reg);
    if (llt.info() != Eigen::Success) {
      bp.ok = false;
      return bp;
    }
    {
      Eigen::LLT<Mat> plain(Quu_unshifted);
      if (plain.info() != Eigen::Success) bp.pd_without_reg = false;
    }

    Vec kappa = -llt.solve(q.Qu);
    Mat K = -llt.solve(q.Qux);
    bp.kappa[static_cast<size_t>(k)] = kappa;
    bp.K[static_cast<size_t>(k)] = K;
    bp.dV1 += kappa.dot(q.Qu);
    bp.dV2 += 0.5 * kappa.dot(q.Quu * kappa);

    v = value_recursion(q, kappa, K);

    Vec Ju = d.lu + d.fu.transpose() * Jx;
    Jx = d.lx + d.fx.transpose() * Jx;
    bp.grad_metric = std::max(bp.grad_metric, inf_norm(Ju));
  }
  bp.ok = true;
  return bp;
}

/// Closed-loop rollout with backtracking on the modified cost; accepts the
/// first alpha with strict decrease.
inline ForwardPass forward_pass(const OCProblem& p, const Trajectory& t,
                                const BackwardPass& bp, double current_cost,
                                const QModHook* hook, const DdpOptions& opt = {}) {
  ForwardPass fp;
  double gain_norm = 0.0;
  for (const auto& k : bp.kappa) gain_norm = std::max(gain_norm, inf_norm(k));
  if (gain_norm == 0.0) {
    fp.outcome = ForwardOutcome::Unchanged;
    fp.traj = t;
    fp.cost = current_cost;
    fp.alpha = 1.0;
    return fp;
  }
  const int N = p.N;
  for (double alpha : backtracking_alphas(opt.alpha_min)) {
    Trajectory trial;
    trial.shooting_defects = t.shooting_defects;
    trial.X.resize(static_cast<size_t>(N));
    trial.U.resize(static_cast<size_t>(N - 1));
    trial.X[0] = p.x_init;
    bool diverged = false;
    for (int k = 0; k + 1 < N; ++k) {
      Vec dx = trial.X[static_cast<size_t>(k)] - t.X[static_cast<size_t>(k)];
      trial.U[static_cast<size_t>(k)] = t.U[static_cast<size_t>(k)] +
                                        alpha * bp.kappa[static_cast<size_t>(k)] +
                                        bp.K[static_cast<size_t>(k)] * dx;
      trial.X[static_cast<size_t>(k) + 1] =
          p.dynamics(trial.X[static_cast<size_t>(k)], trial.U[static_cast<size_t>(k)]);
      if (!all_finite(trial.X[static_cast<size_t>(k) + 1])) {
        diverged = true;
        break;
      }
    }
    if (diverged) continue;
    double c = modified_cost(p, trial, hook);
    if (c < current_cost) {
      fp.outcome = ForwardOutcome::Accepted;
      fp.traj = std::move(trial);
      fp.cost = c;
      fp.alpha = alpha;
      return fp;
    }
  }
  return fp;
}

/// Extra per-iteration metrics stamped by the owning constrained solver.
using RecordStamp = std::function<void(IterationRecord&)>;

/// Iterates backward/forward passes on the hooked objective until the
/// gradient metric drops below tol or a limit is hit. Appends one record per
/// iteration to `report`. The trajectory and regularizer evolve in place so
/// outer-loop methods can resume.
inline SolveStatus ddp_iterate(const OCProblem& p, Trajectory& traj,
                               RegSchedule& reg, const QModHook* hook,
                               const DdpOptions& opt, int max_iter, double tol,
                               SolveReport& report, const RecordStamp& stamp = {}) {
  double cost = modified_cost(p, traj, hook);
  if (!std::isfinite(cost))
    throw InfeasibleError("ddp_iterate: initial trajectory has infinite modified cost");

  auto record = [&](const BackwardPass& bp, double alpha) {
    IterationRecord r;
    r.iter = static_cast<int>(report.iterations.size());
    r.cost = total_cost(p, traj);
    r.grad_metric = bp.grad_metric;
    auto v = violation_norms(p, traj);
    r.ineq_violation = v.ineq;
    r.eq_violation = v.eq;
    r.alpha = alpha;
    r.tau = reg.tau;
    if (stamp) stamp(r);
    report.iterations.push_back(r);
  };

  for (int it = 0; it < max_iter; ++it) {
    BackwardPass bp;
    while (true) {
      bp = backward_pass(p, traj, reg.tau, hook, opt);
      if (bp.ok) break;
      reg.increase();
      if (reg.exceeded()) return SolveStatus::RegularizerExceeded;
    }

    if (bp.grad_metric <= tol) {
      record(bp, 0.0);
      return SolveStatus::Converged;
    }

    ForwardPass fp = forward_pass(p, traj, bp, cost, hook, opt);
    if (fp.outcome == ForwardOutcome::Accepted) {
      traj = std::move(fp.traj);
      cost = fp.cost;
      reg.decrease();
      record(bp, fp.alpha);
    } else if (fp.outcome == ForwardOutcome::Unchanged) {
      record(bp, 0.0);
      return SolveStatus::Converged;
    } else {
      reg.increase();
      if (reg.exceeded()) {
        record(bp, 0.0);
        return SolveStatus::LineSearchFailed;
      }
    }
  }
  return SolveStatus::MaxIterations;
}

/// Unconstrained DDP (section-3 machinery).
inline SolveReport solve_unconstrained(const OCProblem& p, const std::vector<Vec>& U0,
                                       const DdpOptions& opt = {}) {
  p.validate();
  SolveReport report;
  Trajectory traj = rollout(p, U0);
  RegSchedule reg{opt.tau0, opt.tau_min, opt.tau_up, opt.tau_down, opt.tau_max};
  report.status = ddp_iterate(p, traj, reg, nullptr, opt, opt.max_iter,
                              opt.tol_grad, report);
  report.trajectory = std::move(traj);
  return report;
}

}  // namespace dynopt
