#pragma once

#include <cmath>

#include "dynopt/types.hpp"

namespace dynopt {

/// Forward-mode scalar carrying NV partial derivatives. Used to obtain exact
/// Jacobians of the heavier plant models by evaluating the dynamics once on
/// seeded inputs.
template <int NV>
struct Dual {
  using Grad = Eigen::Matrix<double, NV, 1>;
  double v = 0.0;
  Grad d = Grad::Zero();

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design
  Dual(double value, int seed) : v(value) { d(seed) = 1.0; }

  Dual operator-() const {
    Dual r;
    r.v = -v;
    r.d = -d;
    return r;
  }
  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + o.d * v;
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    d = (d * o.v - o.d * v) / (o.v * o.v);
    v /= o.v;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }

  friend Dual sin(const Dual& a) {
    Dual r;
    r.v = std::sin(a.v);
    r.d = std::cos(a.v) * a.d;
    return r;
  }
  friend Dual cos(const Dual& a) {
    Dual r;
    r.v = std::cos(a.v);
    r.d = -std::sin(a.v) * a.d;
    return r;
  }
  friend Dual sqrt(const Dual& a) {
    Dual r;
    r.v = std::sqrt(a.v);
    r.d = a.d / (2.0 * r.v);
    return r;
  }
};

template <int NV>
inline const Dual<NV>& conj(const Dual<NV>& a) { return a; }
template <int NV>
inline const Dual<NV>& real(const Dual<NV>& a) { return a; }
template <int NV>
inline Dual<NV> imag(const Dual<NV>&) { return Dual<NV>(0.0); }
template <int NV>
inline Dual<NV> abs2(const Dual<NV>& a) { return a * a; }

/// Cholesky solve of a small SPD system A z = b, templated so it works on
/// Dual scalars (no pivoting, which is fine for mass matrices).
template <typename Scalar, int NDim>
Eigen::Matrix<Scalar, NDim, 1> solve_spd(Eigen::Matrix<Scalar, NDim, NDim> A,
                                         Eigen::Matrix<Scalar, NDim, 1> b) {
  const int nn = static_cast<int>(A.rows());
  // in-place LL^T
  for (int j = 0; j < nn; ++j) {
    Scalar s = A(j, j);
    for (int k = 0; k < j; ++k) s -= A(j, k) * A(j, k);
    A(j, j) = sqrt(s);
    for (int i = j + 1; i < nn; ++i) {
      Scalar t = A(i, j);
      for (int k = 0; k < j; ++k) t -= A(i, k) * A(j, k);
      A(i, j) = t / A(j, j);
    }
  }
  // forward substitution L y = b
  for (int i = 0; i < nn; ++i) {
    for (int k = 0; k < i; ++k) b(i) -= A(i, k) * b(k);
    b(i) /= A(i, i);
  }
  // back substitution L^T z = y
  for (int i = nn - 1; i >= 0; --i) {
    for (int k = i + 1; k < nn; ++k) b(i) -= A(k, i) * b(k);
    b(i) /= A(i, i);
  }
  return b;
}

}  // namespace dynopt

namespace Eigen {
template <int NV>
struct NumTraits<dynopt::Dual<NV>> : NumTraits<double> {
  using Real = dynopt::Dual<NV>;
  using NonInteger = dynopt::Dual<NV>;
  using Literal = double;
  using Nested = dynopt::Dual<NV>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = NV + 1,
    MulCost = NV + 1,
  };
};
template <int NV, typename BinaryOp>
struct ScalarBinaryOpTraits<dynopt::Dual<NV>, double, BinaryOp> {
  using ReturnType = dynopt::Dual<NV>;
};
template <int NV, typename BinaryOp>
struct ScalarBinaryOpTraits<double, dynopt::Dual<NV>, BinaryOp> {
  using ReturnType = dynopt::Dual<NV>;
};
}  // namespace Eigen
