#pragma once

#include <fstream>

#include "dynopt/types.hpp"

namespace dynopt {

/// Dense convex QP
///   min 1/2 z'Hz + c'z   s.t.  A_eq z = b_eq,  A_in z <= b_in.
struct QPProblem {
  Mat H;
  Vec c;
  Mat A_eq;  // may be 0 x n
  Vec b_eq;
  Mat A_in;  // may be 0 x n
  Vec b_in;

  int dim() const { return static_cast<int>(c.size()); }
  void validate() const {
    const int n = dim();
    if (H.rows() != n || H.cols() != n) throw DimensionError("QP: H shape");
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw DimensionError("QP: H not symmetric");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
      throw DimensionError("QP: equality shape");
    if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
      throw DimensionError("QP: inequality shape");
  }
};

enum class QPStatus { Optimal, MaxIter, Infeasible };

struct QPResult {
  Vec z;
  Vec lambda;  ///< inequality multipliers, >= 0
  Vec nu;      ///< equality multipliers
  QPStatus status = QPStatus::MaxIter;
  int iterations = 0;
};

namespace detail {

/// Interior-point solve of the inequality-only problem
///   min 1/2 v'Hv + c'v  s.t.  A v <= b
/// (Mehrotra predictor-corrector, infeasible start).
inline QPResult solve_qp_ineq(const Mat& H, const Vec& c, const Mat& A, const Vec& b,
                              double tol, int max_iter) {
  const int n = static_cast<int>(c.size());
  const int mi = static_cast<int>(b.size());
  QPResult res;

  if (mi == 0) {
    Mat Hr = H;
    double delta = 0.0;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::LLT<Mat> llt(Hr);
      if (llt.info() == Eigen::Success) {
        res.z = -llt.solve(c);
        res.lambda = Vec::Zero(0);
        res.status = QPStatus::Optimal;
        return res;
      }
      delta = (delta == 0.0) ? 1e-9 : delta * 10.0;
      Hr = H + delta * Mat::Identity(n, n);
    }
    res.status = QPStatus::Infeasible;
    return res;
  }

  Vec z = Vec::Zero(n);
  Vec t = (b - A * z).cwiseMax(1.0);
  Vec lam = Vec::Ones(mi);

  const double scale_d = 1.0 + c.cwiseAbs().maxCoeff();
  const double scale_p = 1.0 + (b.size() ? b.cwiseAbs().maxCoeff() : 0.0);

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;
    Vec r_d = H * z + c + A.transpose() * lam;
    Vec r_p = A * z + t - b;
    double mu = t.dot(lam) / mi;

    if (inf_norm(r_d) <= tol * scale_d && inf_norm(r_p) <= tol * scale_p &&
        mu <= tol) {
      res.z = z;
      res.lambda = lam;
      res.status = QPStatus::Optimal;
      return res;
    }

    // divergence guard: an empty feasible set drives lambda to infinity
    if (inf_norm(lam) > 1e12 || t.minCoeff() < 1e-14) break;

    Vec W = lam.cwiseQuotient(t);
    Mat M = H + A.transpose() * W.asDiagonal() * A;
    if (!M.allFinite()) break;
    Eigen::LLT<Mat> llt(M);
    double delta = 1e-12;
    while (llt.info() != Eigen::Success && delta < 1e2) {
      llt.compute(M + delta * Mat::Identity(n, n));
      delta *= 10.0;
    }
    if (llt.info() != Eigen::Success) break;

    auto solve_direction = [&](const Vec& rhs_c) {
      // rhs_c is the target residual of T Lam e (= t.*lam - sigma*mu + corr)
      Vec rhs = -r_d + A.transpose() * (rhs_c.cwiseQuotient(t) - W.cwiseProduct(r_p));
      Vec dz = llt.solve(rhs);
      Vec dt = -r_p - A * dz;
      Vec dl = -(rhs_c + lam.cwiseProduct(dt)).cwiseQuotient(t);
      return std::make_tuple(dz, dt, dl);
    };

    auto max_step = [](const Vec& v, const Vec& dv) {
      double a = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
      return a;
    };

    // predictor
    auto [dz_a, dt_a, dl_a] = solve_direction(t.cwiseProduct(lam));
    double ap = max_step(t, dt_a), ad = max_step(lam, dl_a);
    double mu_aff = (t + ap * dt_a).dot(lam + ad * dl_a) / mi;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::min(std::max(sigma, 0.0), 1.0);

    // corrector
    Vec rhs_c = t.cwiseProduct(lam) + dt_a.cwiseProduct(dl_a) -
                Vec::Constant(mi, sigma * mu);
    auto [dz, dt, dl] = solve_direction(rhs_c);
    if (!dz.allFinite() || !dt.allFinite() || !dl.allFinite()) break;
    double alpha_p = 0.99 * max_step(t, dt);
    double alpha_d = 0.99 * max_step(lam, dl);

    z += alpha_p * dz;
    t += alpha_p * dt;
    lam += alpha_d * dl;
  }

  res.z = z;
  res.lambda = lam;
  res.status = (inf_norm((A * z - b).cwiseMax(0.0)) > 1e-5 * scale_p ||
                inf_norm(lam) > 1e10)
                   ? QPStatus::Infeasible
                   : QPStatus::MaxIter;
  return res;
}

}  // namespace detail

/// KKT-residual contract: stationarity, primal feasibility and
/// complementarity all within tol at the returned point; lambda >= 0.
/// Equalities are eliminated through a dense QR nullspace basis, the
/// remaining inequality QP is solved by a primal-dual interior point method.
inline QPResult solve_qp(const QPProblem& qp, double tol = 1e-9, int max_iter = 100) {
  qp.validate();
  const int n = qp.dim();
  const int me = static_cast<int>(qp.b_eq.size());

  if (me == 0) return detail::solve_qp_ineq(qp.H, qp.c, qp.A_in, qp.b_in, tol, max_iter);

  // nullspace reduction
  Eigen::HouseholderQR<Mat> qr(qp.A_eq.transpose());
  Mat Qfull = qr.householderQ();
  Mat R = qr.matrixQR().topRows(std::min(n, me)).triangularView<Eigen::Upper>();
  int rank = 0;
  double rmax = R.diagonal().cwiseAbs().maxCoeff();
  for (int i = 0; i < R.rows(); ++i)
    if (std::abs(R(i, i)) > 1e-12 * std::max(1.0, rmax)) ++rank;

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(qp.A_eq);
  Vec z_p = cod.solve(qp.b_eq);
  if (inf_norm(qp.A_eq * z_p - qp.b_eq) > 1e-7 * (1.0 + inf_norm(qp.b_eq))) {
    QPResult res;
    res.status = QPStatus::Infeasible;
    return res;
  }

  QPResult res;
  const int nz = n - rank;
  if (nz == 0) {
    res.z = z_p;
    res.lambda = Vec::Zero(qp.b_in.size());
    if (qp.b_in.size() > 0 &&
        inf_norm((qp.A_in * z_p - qp.b_in).cwiseMax(0.0)) > 1e-7) {
      res.status = QPStatus::Infeasible;
      return res;
    }
    res.status = QPStatus::Optimal;
  } else {
    Mat Z = Qfull.rightCols(nz);
    Mat Hv = Z.transpose() * qp.H * Z;
    Hv = 0.5 * (Hv + Hv.transpose()).eval();
    Vec cv = Z.transpose() * (qp.H * z_p + qp.c);
    Mat Av;
    Vec bv;
    if (qp.b_in.size() > 0) {
      Av = qp.A_in * Z;
      bv = qp.b_in - qp.A_in * z_p;
    } else {
      Av = Mat::Zero(0, nz);
      bv = Vec::Zero(0);
    }
    QPResult inner = detail::solve_qp_ineq(Hv, cv, Av, bv, tol, max_iter);
    res.status = inner.status;
    res.iterations = inner.iterations;
    res.lambda = inner.lambda;
    if (inner.status == QPStatus::Infeasible) return res;
    res.z = z_p + Z * inner.z;
  }

  // recover equality multipliers from stationarity (least squares)
  Vec grad = qp.H * res.z + qp.c;
  if (qp.b_in.size() > 0) grad += qp.A_in.transpose() * res.lambda;
  Eigen::CompleteOrthogonalDecomposition<Mat> codT(Mat(qp.A_eq.transpose()));
  res.nu = codT.solve(-grad);
  return res;
}

/// Debug dump in a plain-text, matrix-market-like layout.
inline void dump_qp(const QPProblem& qp, const std::string& path) {
  std::ofstream os(path);
  auto block = [&](const char* name, const Mat& M) {
    os << "%% " << name << " " << M.rows() << " " << M.cols() << "\n";
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j)
        if (M(i, j) != 0.0) os << i + 1 << " " << j + 1 << " " << M(i, j) << "\n";
  };
  block("H", qp.H);
  block("c", qp.c);
  block("A_eq", qp.A_eq);
  block("b_eq", qp.b_eq);
  block("A_in", qp.A_in);
  block("b_in", qp.b_in);
}

}  // namespace dynopt
