#pragma once

#include "dynopt/problem.hpp"

namespace dynopt {

/// Torque-limited inverted pendulum, Euler-discretized
///   theta''= u/(m l^2) - (g0/l) sin(theta).
/// theta = 0 is the hanging equilibrium, theta = pi upright.
struct PendulumParams {
  double length = 0.5;
  double mass = 0.2;
  double gravity = 9.81;
  double dt = 0.02;
  int N = 100;
};

inline Vec pendulum_step(const PendulumParams& pp, const Vec& x, const Vec& u) {
  Vec xn(2);
  xn(0) = x(0) + pp.dt * x(1);
  xn(1) = x(1) + pp.dt * (u(0) / (pp.mass * pp.length * pp.length) -
                          (pp.gravity / pp.length) * std::sin(x(0)));
  return xn;
}

inline void pendulum_jac(const PendulumParams& pp, const Vec& x, Mat& fx, Mat& fu) {
  fx = Mat::Identity(2, 2);
  fx(0, 1) = pp.dt;
  fx(1, 0) = -pp.dt * (pp.gravity / pp.length) * std::cos(x(0));
  fu = Mat::Zero(2, 1);
  fu(1, 0) = pp.dt / (pp.mass * pp.length * pp.length);
}

/// Bare dynamics-only problem; costs and constraints are attached by the
/// caller (see presets).
inline OCProblem make_pendulum_problem(const PendulumParams& pp = {}) {
  OCProblem p;
  p.N = pp.N;
  p.n = 2;
  p.m = 1;
  p.x_init = Vec::Zero(2);
  p.dynamics = [pp](const Vec& x, const Vec& u) { return pendulum_step(pp, x, u); };
  p.dynamics_jac = [pp](const Vec& x, const Vec&, Mat& fx, Mat& fu) {
    pendulum_jac(pp, x, fx, fu);
  };
  return p;
}

}  // namespace dynopt
