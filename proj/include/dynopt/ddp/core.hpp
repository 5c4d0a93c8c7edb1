#pragma once

#include "dynopt/problem.hpp"

namespace dynopt {

struct ValueExpansion {
  Vec Vx;
  Mat Vxx;
};

/// Per-knot Q expansion in the concatenated variable y = [u; x].
struct QExpansion {
  Vec Qx, Qu;
  Mat Qxx, Quu, Qux;
};

/// Stage derivative bundle after hook modification.
struct StageDerivs {
  Vec lx, lu;
  Mat lxx, luu, lux;
  Mat fx, fu;
};

inline QExpansion assemble_q(const StageDerivs& d, const ValueExpansion& next) {
  QExpansion q;
  q.Qx = d.lx + d.fx.transpose() * next.Vx;
  q.Qu = d.lu + d.fu.transpose() * next.Vx;
  q.Qxx = d.lxx + d.fx.transpose() * next.Vxx * d.fx;
  q.Quu = d.luu + d.fu.transpose() * next.Vxx * d.fu;
  q.Qux = d.lux + d.fu.transpose() * next.Vxx * d.fx;
  q.Qxx = 0.5 * (q.Qxx + q.Qxx.transpose()).eval();
  q.Quu = 0.5 * (q.Quu + q.Quu.transpose()).eval();
  return q;
}

/// Value recursion of unconstrained DDP; the (possibly regularized) Quu is
/// captured through the gains, the recursion itself uses the unregularized
/// blocks.
inline ValueExpansion value_recursion(const QExpansion& q, const Vec& kappa,
                                      const Mat& K) {
  ValueExpansion v;
  v.Vx = q.Qx + K.transpose() * (q.Quu * kappa + q.Qu) + q.Qux.transpose() * kappa;
  v.Vxx = q.Qxx + K.transpose() * q.Quu * K + K.transpose() * q.Qux +
          q.Qux.transpose() * K;
  v.Vxx = 0.5 * (v.Vxx + v.Vxx.transpose()).eval();
  return v;
}

/// Regularizer schedule: up on failure (entering at tau_min), down on
/// success, snapped to 0 below tau_min.
struct RegSchedule {
  double tau = 0.0;
  double tau_min = 1e-6;
  double tau_up = 10.0;
  double tau_down = 10.0;
  double tau_max = 1e10;

  void increase() { tau = std::max(tau_min, tau * tau_up); }
  void decrease() {
    tau /= tau_down;
    if (tau < tau_min) tau = 0.0;
  }
  bool exceeded() const { return tau > tau_max; }
};

inline std::vector<double> backtracking_alphas(double alpha_min = 1.0 / 1024.0) {
  std::vector<double> a;
  for (double v = 1.0; v >= alpha_min * (1.0 - 1e-12); v *= 0.5) a.push_back(v);
  return a;
}

}  // namespace dynopt
