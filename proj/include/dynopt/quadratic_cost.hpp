#pragma once

#include "dynopt/problem.hpp"

namespace dynopt {

/// Installs the quadratic cost pair
///   l(x,u)  = 0.5 [u'R1 u + (x-xg)'R2 (x-xg)]
///   Phi(x)  = 0.5 (x-xg)'Q (x-xg)
/// on the problem. R1 must be PD, R2 and Q PSD (checked).
inline void set_quadratic_cost(OCProblem& p, const Mat& R1, const Mat& R2,
                               const Mat& Q, const Vec& x_goal) {
  auto check_sym = [](const Mat& A, const char* name) {
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw NotPDError(std::string(name) + ": not symmetric");
  };
  check_sym(R1, "R1");
  check_sym(R2, "R2");
  check_sym(Q, "Q");
  Eigen::LLT<Mat> llt(R1);
  if (llt.info() != Eigen::Success) throw NotPDError("R1: not positive definite");
  auto check_psd = [](const Mat& A, const char* name) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw NotPDError(std::string(name) + ": not positive semidefinite");
  };
  check_psd(R2, "R2");
  check_psd(Q, "Q");

  p.stage_cost = [R1, R2, x_goal](const Vec& x, const Vec& u) {
    Vec dx = x - x_goal;
    return 0.5 * (u.dot(R1 * u) + dx.dot(R2 * dx));
  };
  p.stage_cost_derivs = [R1, R2, x_goal](const Vec& x, const Vec& u, Vec& lx,
                                         Vec& lu, Mat& lxx, Mat& luu, Mat& lux) {
    Vec dx = x - x_goal;
    lx = R2 * dx;
    lu = R1 * u;
    lxx = R2;
    luu = R1;
    lux = Mat::Zero(u.size(), x.size());
  };
  p.terminal_cost = [Q, x_goal](const Vec& x) {
    Vec dx = x - x_goal;
    return 0.5 * dx.dot(Q * dx);
  };
  p.terminal_cost_derivs = [Q, x_goal](const Vec& x, Vec& phix, Mat& phixx) {
    phix = Q * (x - x_goal);
    phixx = Q;
  };
}

}  // namespace dynopt
