#pragma once

#include "dynopt/dual.hpp"
#include "dynopt/problem.hpp"

namespace dynopt {

/// Planar quadrotor with a suspended pendulum. State
///   x = [p_x, p_y, theta, phi, dp_x, dp_y, dtheta, dphi],
/// control = the two rotor thrusts. Lagrangian dynamics M(q) q'' = rhs,
/// Euler-integrated.
///
/// The source prints the masses as "m_p = 0.468, m_q = 0.2 m_q", which is
/// self-referential; this implementation takes the quadrotor mass to be
/// 0.468 and the pendulum tip mass 0.2 * 0.468 = 0.0936, consistent with the
/// hover-thrust formula 0.5 (m_q + m_p) g0 per rotor.
struct QuadpendParams {
  double m_q = 0.468;          ///< quadrotor mass
  double m_p = 0.2 * 0.468;    ///< pendulum tip mass
  double arm = 0.25;           ///< rotor arm l
  double L = 0.5;              ///< pendulum length (2 l)
  double J_q = 3.83e-3;        ///< quadrotor inertia
  double K_nu = 0.01;          ///< pendulum joint friction
  double gravity = 9.81;
  double dt = 0.02;
  int N = 100;

  Vec hover_control() const {
    return Vec::Constant(2, 0.5 * (m_q + m_p) * gravity);
  }
  double thrust_lo() const { return 0.1 * m_q * gravity; }
  double thrust_hi() const { return 3.0 * m_q * gravity; }
};

namespace detail {

template <typename Scalar>
Eigen::Matrix<Scalar, 8, 1> quadpend_step_impl(const QuadpendParams& qp,
                                               const Eigen::Matrix<Scalar, 8, 1>& x,
                                               const Eigen::Matrix<Scalar, 2, 1>& u) {
  const Scalar theta = x(2), phi = x(3);
  const Scalar dpx = x(4), dpy = x(5), dtheta = x(6), dphi = x(7);
  const double mt = qp.m_q + qp.m_p;
  const Scalar cph = cos(phi), sph = sin(phi);

  Eigen::Matrix<Scalar, 4, 4> M;
  M.setZero();
  M(0, 0) = mt;
  M(1, 1) = mt;
  M(2, 2) = qp.J_q;
  M(3, 3) = qp.m_p * qp.L * qp.L;
  M(0, 3) = M(3, 0) = qp.m_p * qp.L * cph;
  M(1, 3) = M(3, 1) = qp.m_p * qp.L * sph;

  const Scalar thrust = u(0) + u(1);
  const Scalar tau_f = -qp.K_nu * (dphi - dtheta);
  Eigen::Matrix<Scalar, 4, 1> rhs;
  rhs(0) = -thrust * sin(theta) + qp.m_p * qp.L * dphi * dphi * sph;
  rhs(1) = thrust * cos(theta) - mt * qp.gravity - qp.m_p * qp.L * dphi * dphi * cph;
  rhs(2) = (u(0) - u(1)) * qp.arm - tau_f;
  rhs(3) = tau_f - qp.m_p * qp.L * qp.gravity * sph;

  Eigen::Matrix<Scalar, 4, 1> qdd = solve_spd<Scalar, 4>(M, rhs);

  Eigen::Matrix<Scalar, 8, 1> xn;
  xn.template head<4>() = x.template head<4>() + qp.dt * x.template tail<4>();
  xn.template tail<4>() = x.template tail<4>() + qp.dt * qdd;
  return xn;
}

}  // namespace detail

inline Vec quadpend_step(const QuadpendParams& qp, const Vec& x, const Vec& u) {
  // M is SPD for physical parameters; a failed pivot means misconfiguration.
  const double mt = qp.m_q + qp.m_p;
  const double cph = std::cos(x(3));
  const double schur = qp.m_p * qp.L * qp.L -
                       (qp.m_p * qp.L * cph) * (qp.m_p * qp.L * cph) / mt -
                       (qp.m_p * qp.L * std::sin(x(3))) *
                           (qp.m_p * qp.L * std::sin(x(3))) / mt;
  if (mt <= 0.0 || qp.J_q <= 0.0 || schur <= 0.0)
    throw SingularMassError("quadpend: mass matrix not positive definite");
  Eigen::Matrix<double, 8, 1> xs = x;
  Eigen::Matrix<double, 2, 1> us = u;
  return detail::quadpend_step_impl<double>(qp, xs, us);
}

inline void quadpend_jac(const QuadpendParams& qp, const Vec& x, const Vec& u,
                         Mat& fx, Mat& fu) {
  using D = Dual<10>;
  Eigen::Matrix<D, 8, 1> xs;
  Eigen::Matrix<D, 2, 1> us;
  for (int i = 0; i < 8; ++i) xs(i) = D(x(i), i);
  for (int i = 0; i < 2; ++i) us(i) = D(u(i), 8 + i);
  auto xn = detail::quadpend_step_impl<D>(qp, xs, us);
  fx.resize(8, 8);
  fu.resize(8, 2);
  for (int i = 0; i < 8; ++i) {
    fx.row(i) = xn(i).d.head(8).transpose();
    fu.row(i) = xn(i).d.tail(2).transpose();
  }
}

inline OCProblem make_quadpend_problem(const QuadpendParams& qp = {}) {
  OCProblem p;
  p.N = qp.N;
  p.n = 8;
  p.m = 2;
  p.x_init = Vec::Zero(8);
  p.dynamics = [qp](const Vec& x, const Vec& u) { return quadpend_step(qp, x, u); };
  p.dynamics_jac = [qp](const Vec& x, const Vec& u, Mat& fx, Mat& fu) {
    quadpend_jac(qp, x, u, fx, fu);
  };
  return p;
}

}  // namespace dynopt
