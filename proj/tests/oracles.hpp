// Test-side oracles, independent of the solver implementation paths they
// check.
#pragma once

#include <random>

#include "dynopt/problem.hpp"
#include "dynopt/quadratic_cost.hpp"

namespace oracles {

using dynopt::Mat;
using dynopt::OCProblem;
using dynopt::Vec;

/// Linear-quadratic instance x' = A x + B u with the standard cost pair.
struct LQProblem {
  Mat A, B, R1, R2, Qf;
  Vec xg, x0;
  int N = 0;

  OCProblem to_ocp() const {
    OCProblem p;
    p.N = N;
    p.n = static_cast<int>(A.rows());
    p.m = static_cast<int>(B.cols());
    p.x_init = x0;
    Mat Ac = A, Bc = B;
    p.dynamics = [Ac, Bc](const Vec& x, const Vec& u) { return Ac * x + Bc * u; };
    p.dynamics_jac = [Ac, Bc](const Vec&, const Vec&, Mat& fx, Mat& fu) {
      fx = Ac;
      fu = Bc;
    };
    dynopt::set_quadratic_cost(p, R1, R2, Qf, xg);
    return p;
  }
};

inline LQProblem random_lq(unsigned seed, int n, int m, int N) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  LQProblem lq;
  lq.N = N;
  lq.A = Mat::NullaryExpr(n, n, [&]() { return 0.6 * d(rng) / std::sqrt(double(n)); });
  lq.A += Mat::Identity(n, n) * 0.9;
  lq.B = Mat::NullaryExpr(n, m, [&]() { return d(rng); });
  Mat M1 = Mat::NullaryExpr(m, m, [&]() { return d(rng); });
  lq.R1 = M1 * M1.transpose() + 0.5 * Mat::Identity(m, m);
  Mat M2 = Mat::NullaryExpr(n, n, [&]() { return d(rng); });
  lq.R2 = 0.1 * (M2 * M2.transpose());
  Mat M3 = Mat::NullaryExpr(n, n, [&]() { return d(rng); });
  lq.Qf = M3 * M3.transpose() + Mat::Identity(n, n);
  lq.xg = Vec::NullaryExpr(n, [&]() { return d(rng); });
  lq.x0 = Vec::NullaryExpr(n, [&]() { return 2.0 * d(rng); });
  return lq;
}

/// Finite-horizon Riccati recursion for the affine-quadratic value function
/// V_k(x) = x'P x/2 + p'x + c. Returns per-step feedback (u = -K x - k).
struct RiccatiSolution {
  std::vector<Mat> K;
  std::vector<Vec> k;
  double optimal_cost = 0.0;
};

inline RiccatiSolution riccati(const LQProblem& lq) {
  const int N = lq.N;
  RiccatiSolution sol;
  sol.K.resize(static_cast<size_t>(N - 1));
  sol.k.resize(static_cast<size_t>(N - 1));
  Mat P = lq.Qf;
  Vec p = -lq.Qf * lq.xg;
  double c = 0.5 * lq.xg.dot(lq.Qf * lq.xg);
  for (int kk = N - 2; kk >= 0; --kk) {
    Mat M = lq.R1 + lq.B.transpose() * P * lq.B;
    Mat Minv = M.inverse();
    Mat K = Minv * (lq.B.transpose() * P * lq.A);
    Vec kvec = Minv * (lq.B.transpose() * p);
    Mat Ac = lq.A - lq.B * K;
    Vec b = -lq.B * kvec;
    Mat Pn = lq.R2 + K.transpose() * lq.R1 * K + Ac.transpose() * P * Ac;
    Vec pn = -lq.R2 * lq.xg + K.transpose() * lq.R1 * kvec + Ac.transpose() * (P * b + p);
    double cn = c + 0.5 * lq.xg.dot(lq.R2 * lq.xg) + 0.5 * kvec.dot(lq.R1 * kvec) +
                0.5 * b.dot(P * b) + p.dot(b);
    P = 0.5 * (Pn + Pn.transpose());
    p = pn;
    c = cn;
    sol.K[static_cast<size_t>(kk)] = K;
    sol.k[static_cast<size_t>(kk)] = kvec;
  }
  sol.optimal_cost = 0.5 * lq.x0.dot(P * lq.x0) + p.dot(lq.x0) + c;
  return sol;
}

/// Finite-difference gradient of total cost with respect to the stacked
/// control sequence (independent check on the backward-pass J_u recursion).
template <typename Objective>
double fd_control_grad_inf_norm(const OCProblem& p, const std::vector<Vec>& U,
                                Objective&& obj, double h = 1e-6) {
  double worst = 0.0;
  std::vector<Vec> Up = U;
  for (int k = 0; k + 1 < p.N; ++k) {
    for (int j = 0; j < p.m; ++j) {
      double back = Up[static_cast<size_t>(k)](j);
      Up[static_cast<size_t>(k)](j) = back + h;
      double fp = obj(Up);
      Up[static_cast<size_t>(k)](j) = back - h;
      double fm = obj(Up);
      Up[static_cast<size_t>(k)](j) = back;
      worst = std::max(worst, std::abs((fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace oracles
