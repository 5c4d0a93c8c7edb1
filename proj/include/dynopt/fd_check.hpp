#pragma once

#include "dynopt/problem.hpp"

namespace dynopt {

namespace detail {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(b));
}

inline double max_rel_err(const Mat& a, const Mat& b) {
  double e = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) e = std::max(e, rel_err(a(i, j), b(i, j)));
  return e;
}

/// Central-difference Jacobian of a vector map wrt one argument.
template <typename F>
Mat fd_jacobian(F&& f, const Vec& at, double h) {
  Vec f0 = f(at);
  Mat J(f0.size(), at.size());
  Vec x = at;
  for (int j = 0; j < at.size(); ++j) {
    double back = x(j);
    x(j) = back + h;
    Vec fp = f(x);
    x(j) = back - h;
    Vec fm = f(x);
    x(j) = back;
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

template <typename F>
Vec fd_gradient(F&& f, const Vec& at, double h) {
  Vec g(at.size());
  Vec x = at;
  for (int j = 0; j < at.size(); ++j) {
    double back = x(j);
    x(j) = back + h;
    double fp = f(x);
    x(j) = back - h;
    double fm = f(x);
    x(j) = back;
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace detail

/// Fills in dynamics_jac / cost derivative callbacks by central differences
/// (h = 1e-6) for problems defined only through values.
inline void attach_fd_derivatives(OCProblem& p, double h = 1e-6) {
  if (!p.dynamics_jac) {
    auto f = p.dynamics;
    p.dynamics_jac = [f, h](const Vec& x, const Vec& u, Mat& fx, Mat& fu) {
      fx = detail::fd_jacobian([&](const Vec& xx) { return f(xx, u); }, x, h);
      fu = detail::fd_jacobian([&](const Vec& uu) { return f(x, uu); }, u, h);
    };
  }
  if (!p.stage_cost_derivs) {
    auto l = p.stage_cost;
    p.stage_cost_derivs = [l, h](const Vec& x, const Vec& u, Vec& lx, Vec& lu,
                                 Mat& lxx, Mat& luu, Mat& lux) {
      lx = detail::fd_gradient([&](const Vec& xx) { return l(xx, u); }, x, h);
      lu = detail::fd_gradient([&](const Vec& uu) { return l(x, uu); }, u, h);
      lxx = detail::fd_jacobian(
          [&](const Vec& xx) {
            return detail::fd_gradient([&](const Vec& xxx) { return l(xxx, u); }, xx, h);
          },
          x, h);
      luu = detail::fd_jacobian(
          [&](const Vec& uu) {
            return detail::fd_gradient([&](const Vec& uuu) { return l(x, uuu); }, uu, h);
          },
          u, h);
      lux = detail::fd_jacobian(
          [&](const Vec& xx) {
            return detail::fd_gradient([&](const Vec& uu) { return l(xx, uu); }, u, h);
          },
          x, h);
      lxx = 0.5 * (lxx + lxx.transpose()).eval();
      luu = 0.5 * (luu + luu.transpose()).eval();
    };
  }
  if (!p.terminal_cost_derivs) {
    auto phi = p.terminal_cost;
    p.terminal_cost_derivs = [phi, h](const Vec& x, Vec& phix, Mat& phixx) {
      phix = detail::fd_gradient(phi, x, h);
      phixx = detail::fd_jacobian(
          [&](const Vec& xx) { return detail::fd_gradient(phi, xx, h); }, x, h);
      phixx = 0.5 * (phixx + phixx.transpose()).eval();
    };
  }
}

/// Compares analytic first derivatives of f, l, Phi, g against central
/// differences at every knot of the trajectory; returns the worst relative
/// error. The caller decides what to do with it.
inline double check_derivatives(const OCProblem& p, const Trajectory& t, double h = 1e-6) {
  using detail::fd_gradient;
  using detail::fd_jacobian;
  using detail::max_rel_err;
  double worst = 0.0;
  const int w = p.ineq_rows();
  for (int k = 0; k + 1 < p.N; ++k) {
    const Vec& x = t.X[static_cast<size_t>(k)];
    const Vec& u = t.U[static_cast<size_t>(k)];
    Mat fx, fu;
    p.dynamics_jac(x, u, fx, fu);
    Mat fx_fd = fd_jacobian([&](const Vec& xx) { return p.dynamics(xx, u); }, x, h);
    Mat fu_fd = fd_jacobian([&](const Vec& uu) { return p.dynamics(x, uu); }, u, h);
    worst = std::max(worst, max_rel_err(fx, fx_fd));
    worst = std::max(worst, max_rel_err(fu, fu_fd));

    Vec lx, lu;
    Mat lxx, luu, lux;
    p.stage_cost_derivs(x, u, lx, lu, lxx, luu, lux);
    Vec lx_fd = fd_gradient([&](const Vec& xx) { return p.stage_cost(xx, u); }, x, h);
    Vec lu_fd = fd_gradient([&](const Vec& uu) { return p.stage_cost(x, uu); }, u, h);
    worst = std::max(worst, max_rel_err(lx, lx_fd));
    worst = std::max(worst, max_rel_err(lu, lu_fd));

    if (w > 0) {
      Mat gx, gu;
      p.ineq_jac(x, u, gx, gu);
      Mat gx_fd = fd_jacobian([&](const Vec& xx) { return p.ineq(xx, u); }, x, h);
      Mat gu_fd = fd_jacobian([&](const Vec& uu) { return p.ineq(x, uu); }, u, h);
      worst = std::max(worst, max_rel_err(gx, gx_fd));
      worst = std::max(worst, max_rel_err(gu, gu_fd));
    }
  }
  const Vec& xN = t.X[static_cast<size_t>(p.N) - 1];
  Vec phix;
  Mat phixx;
  p.terminal_cost_derivs(xN, phix, phixx);
  Vec phix_fd = fd_gradient(p.terminal_cost, xN, h);
  worst = std::max(worst, max_rel_err(phix, phix_fd));
  if (w > 0) {
    Mat gx;
    p.ineq_jac_terminal(xN, gx);
    Mat gx_fd = fd_jacobian([&](const Vec& xx) { return p.ineq_terminal(xx); }, xN, h);
    worst = std::max(worst, max_rel_err(gx, gx_fd));
  }
  return worst;
}

}  // namespace dynopt
