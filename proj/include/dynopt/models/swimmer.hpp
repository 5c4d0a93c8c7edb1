#pragma once

#include <array>

#include "dynopt/dual.hpp"
#include "dynopt/problem.hpp"

namespace dynopt {

/// Tadpole-like chain swimmer in a viscous fluid: `links` unit segments
/// joined tail-to-nose, torques at the joints, anisotropic per-link drag.
///
/// State (dimension 2*links + 4):
///   [nose_x, nose_y, theta_1..theta_L, d/dt of the same]
/// with theta_i the absolute link angles (tail = 1, nose link = L).
///
/// Link centers are recovered from the angles through the constant assembly
/// system Q_s r = (1/2) A_s L_s t together with sum(m_i r_i) = 0, so the
/// internal equations of motion live in center-of-mass/angle coordinates
/// where the mass matrix is block diagonal; the nose coordinates stored in
/// the state are an exact change of variables on top of that.
///
/// The drag coefficients are not part of the benchmark definition and are
/// configurable; defaults (25, 0.1) give the usual swimming gait.
struct SwimmerParams {
  int links = 5;
  double link_length = 1.0;
  double link_mass = 1.0;
  double k_normal = 25.0;
  double k_tangent = 0.1;
  double dt = 0.02;
  int N = 80;

  int joints() const { return links - 1; }
  int state_dim() const { return 2 * links + 4; }
};

namespace detail {

/// Constant geometry: d_i = sum_j C(i,j) t_j gives link-center offsets from
/// the center of mass; W(j,k) = sum_i m_i C(i,j) C(i,k).
struct SwimmerGeometry {
  Mat C;   // links x links
  Mat W;   // links x links
  Vec Cp;  // nose-offset coefficients: psi(theta) = sum_j Cp(j) t_j
  double m_total = 0.0;
  Vec inertia;  // per-link rotational inertia m l^2 / 12

  explicit SwimmerGeometry(const SwimmerParams& sp) {
    const int L = sp.links;
    Mat A = Mat::Zero(L, L);
    Mat B = Mat::Zero(L, L);
    for (int i = 0; i + 1 < L; ++i) {
      A(i, i) = -1.0;
      A(i, i + 1) = 1.0;
      B(i, i) = 0.5 * sp.link_length;
      B(i, i + 1) = 0.5 * sp.link_length;
    }
    for (int j = 0; j < L; ++j) A(L - 1, j) = sp.link_mass;
    C = A.partialPivLu().solve(B);
    W = Mat::Zero(L, L);
    for (int j = 0; j < L; ++j)
      for (int k = 0; k < L; ++k)
        for (int i = 0; i < L; ++i) W(j, k) += sp.link_mass * C(i, j) * C(i, k);
    Cp = C.row(L - 1).transpose();
    Cp(L - 1) += 0.5 * sp.link_length;
    m_total = sp.link_mass * L;
    inertia = Vec::Constant(L, sp.link_mass * sp.link_length * sp.link_length / 12.0);
  }
};

inline const SwimmerGeometry& swimmer_geometry(const SwimmerParams& sp) {
  static thread_local std::unique_ptr<SwimmerGeometry> cache;
  static thread_local int cached_links = -1;
  static thread_local double cached_l = 0, cached_m = 0;
  if (!cache || cached_links != sp.links || cached_l != sp.link_length ||
      cached_m != sp.link_mass) {
    cache = std::make_unique<SwimmerGeometry>(sp);
    cached_links = sp.links;
    cached_l = sp.link_length;
    cached_m = sp.link_mass;
  }
  return *cache;
}

template <typename Scalar, int L>
Eigen::Matrix<Scalar, 2 * L + 4, 1> swimmer_step_impl(
    const SwimmerParams& sp, const SwimmerGeometry& geo,
    const Eigen::Matrix<Scalar, 2 * L + 4, 1>& x,
    const Eigen::Matrix<Scalar, L - 1, 1>& u) {
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
  const Scalar nx = x(0), ny = x(1);
  Eigen::Matrix<Scalar, L, 1> th, dth;
  for (int j = 0; j < L; ++j) {
    th(j) = x(2 + j);
    dth(j) = x(2 + L + 2 + j);
  }
  const Vec2 dn(x(2 + L), x(2 + L + 1));

  Eigen::Matrix<Scalar, L, 1> c_th, s_th;
  for (int j = 0; j < L; ++j) {
    c_th(j) = cos(th(j));
    s_th(j) = sin(th(j));
  }
  auto tvec = [&](int j) { return Vec2(c_th(j), s_th(j)); };
  auto nvec = [&](int j) { return Vec2(-s_th(j), c_th(j)); };

  // center-of-mass velocity from the stored nose velocity
  Vec2 dc = dn;
  for (int j = 0; j < L; ++j) dc -= geo.Cp(j) * dth(j) * nvec(j);

  // drag forces on link centers and their generalized projections
  Vec2 Fc(Scalar(0), Scalar(0));
  Eigen::Matrix<Scalar, L, 1> Qth;
  Qth.setZero();
  std::array<Vec2, static_cast<size_t>(L)> Flink;
  for (int i = 0; i < L; ++i) {
    Vec2 vi = dc;
    for (int j = 0; j < L; ++j) vi += geo.C(i, j) * dth(j) * nvec(j);
    const Vec2 ni = nvec(i), ti = tvec(i);
    const Scalar vn = vi(0) * ni(0) + vi(1) * ni(1);
    const Scalar vt = vi(0) * ti(0) + vi(1) * ti(1);
    Flink[static_cast<size_t>(i)] =
        -sp.link_length * (sp.k_normal * vn * ni + sp.k_tangent * vt * ti);
    Fc += Flink[static_cast<size_t>(i)];
  }
  for (int j = 0; j < L; ++j) {
    const Vec2 nj = nvec(j);
    for (int i = 0; i < L; ++i) {
      const Vec2& Fi = Flink[static_cast<size_t>(i)];
      Qth(j) += geo.C(i, j) * (Fi(0) * nj(0) + Fi(1) * nj(1));
    }
    // distributed normal drag also resists spin about the link center
    Qth(j) += -sp.k_normal * std::pow(sp.link_length, 3) / 12.0 * dth(j);
  }
  // joint torques: u_j acts between link j and link j+1
  for (int j = 0; j + 1 < L; ++j) {
    Qth(j) -= u(j);
    Qth(j + 1) += u(j);
  }

  // M_theta(th) th'' = Qth - h(th, dth)
  Eigen::Matrix<Scalar, L, L> Mth;
  Eigen::Matrix<Scalar, L, 1> hvec;
  for (int j = 0; j < L; ++j) {
    hvec(j) = Scalar(0);
    for (int k = 0; k < L; ++k) {
      const Scalar cd = c_th(j) * c_th(k) + s_th(j) * s_th(k);   // cos(tj-tk)
      const Scalar sd = s_th(j) * c_th(k) - c_th(j) * s_th(k);   // sin(tj-tk)
      Mth(j, k) = geo.W(j, k) * cd;
      hvec(j) += geo.W(j, k) * sd * dth(k) * dth(k);
    }
    Mth(j, j) += geo.inertia(j);
  }
  Eigen::Matrix<Scalar, L, 1> ddth = solve_spd<Scalar, L>(Mth, (Qth - hvec).eval());
  Vec2 ddc = Fc / geo.m_total;

  // back to nose coordinates: n'' = c'' + Psi th'' - sum_j Cp_j t_j dth_j^2
  Vec2 ddn = ddc;
  for (int j = 0; j < L; ++j)
    ddn += geo.Cp(j) * (ddth(j) * nvec(j) - dth(j) * dth(j) * tvec(j));

  Eigen::Matrix<Scalar, 2 * L + 4, 1> xn;
  xn(0) = nx + sp.dt * dn(0);
  xn(1) = ny + sp.dt * dn(1);
  for (int j = 0; j < L; ++j) xn(2 + j) = th(j) + sp.dt * dth(j);
  xn(2 + L) = dn(0) + sp.dt * ddn(0);
  xn(2 + L + 1) = dn(1) + sp.dt * ddn(1);
  for (int j = 0; j < L; ++j) xn(2 + L + 2 + j) = dth(j) + sp.dt * ddth(j);
  return xn;
}

}  // namespace detail

inline Vec swimmer_step(const SwimmerParams& sp, const Vec& x, const Vec& u) {
  if (sp.links != 5)
    throw DimensionError("swimmer_step: fast path is compiled for 5 links");
  const auto& geo = detail::swimmer_geometry(sp);
  Eigen::Matrix<double, 14, 1> xs = x;
  Eigen::Matrix<double, 4, 1> us = u;
  return detail::swimmer_step_impl<double, 5>(sp, geo, xs, us);
}

inline void swimmer_jac(const SwimmerParams& sp, const Vec& x, const Vec& u,
                        Mat& fx, Mat& fu) {
  if (sp.links != 5)
    throw DimensionError("swimmer_jac: fast path is compiled for 5 links");
  const auto& geo = detail::swimmer_geometry(sp);
  using D = Dual<18>;
  Eigen::Matrix<D, 14, 1> xs;
  Eigen::Matrix<D, 4, 1> us;
  for (int i = 0; i < 14; ++i) xs(i) = D(x(i), i);
  for (int i = 0; i < 4; ++i) us(i) = D(u(i), 14 + i);
  auto xn = detail::swimmer_step_impl<D, 5>(sp, geo, xs, us);
  fx.resize(14, 14);
  fu.resize(14, 4);
  for (int i = 0; i < 14; ++i) {
    fx.row(i) = xn(i).d.head(14).transpose();
    fu.row(i) = xn(i).d.tail(4).transpose();
  }
}

/// Link-center and tip positions recovered from a swimmer state.
struct SwimmerShape {
  std::vector<Eigen::Vector2d> centers;  // tail..nose
  std::vector<Eigen::Vector2d> tips;     // links+1 points, tail end .. nose tip
  Eigen::Vector2d center_of_mass;
  Eigen::Vector2d nose;
};

inline SwimmerShape swimmer_link_positions(const SwimmerParams& sp, const Vec& x) {
  const auto& geo = detail::swimmer_geometry(sp);
  const int L = sp.links;
  SwimmerShape s;
  Eigen::Vector2d nose(x(0), x(1));
  Vec th = x.segment(2, L);
  // psi = nose - cm
  Eigen::Vector2d psi(0, 0);
  for (int j = 0; j < L; ++j)
    psi += geo.Cp(j) * Eigen::Vector2d(std::cos(th(j)), std::sin(th(j)));
  s.nose = nose;
  s.center_of_mass = nose - psi;
  s.centers.resize(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i) {
    Eigen::Vector2d d(0, 0);
    for (int j = 0; j < L; ++j)
      d += geo.C(i, j) * Eigen::Vector2d(std::cos(th(j)), std::sin(th(j)));
    s.centers[static_cast<size_t>(i)] = s.center_of_mass + d;
  }
  s.tips.resize(static_cast<size_t>(L) + 1);
  for (int i = 0; i < L; ++i) {
    Eigen::Vector2d half =
        0.5 * sp.link_length * Eigen::Vector2d(std::cos(th(i)), std::sin(th(i)));
    s.tips[static_cast<size_t>(i)] = s.centers[static_cast<size_t>(i)] - half;
    if (i == L - 1) s.tips[static_cast<size_t>(L)] = s.centers[static_cast<size_t>(i)] + half;
  }
  return s;
}

/// Straight pose at rest with the nose at the origin and the tail along -x.
inline Vec swimmer_initial_state(const SwimmerParams& sp) {
  return Vec::Zero(sp.state_dim());
}

inline OCProblem make_swimmer_problem(const SwimmerParams& sp = {}) {
  OCProblem p;
  p.N = sp.N;
  p.n = sp.state_dim();
  p.m = sp.joints();
  p.x_init = swimmer_initial_state(sp);
  p.dynamics = [sp](const Vec& x, const Vec& u) { return swimmer_step(sp, x, u); };
  p.dynamics_jac = [sp](const Vec& x, const Vec& u, Mat& fx, Mat& fu) {
    swimmer_jac(sp, x, u, fx, fu);
  };
  return p;
}

}  // namespace dynopt
