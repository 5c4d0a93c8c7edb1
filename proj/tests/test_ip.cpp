#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dynopt/ddp/ip.hpp"
#include "dynopt/models/pendulum.hpp"
#include "dynopt/quadratic_cost.hpp"
#include "oracles.hpp"

using namespace dynopt;

namespace {

OCProblem constrained_pendulum() {
  OCProblem p = make_pendulum_problem();
  Vec xg(2);
  xg << M_PI, 0.0;
  set_quadratic_cost(p, Mat::Constant(1, 1, 0.001), 0.005 * Mat::Identity(2, 2),
                     100.0 * Mat::Identity(2, 2), xg);
  p.constraints.push_back(ControlBox{Vec::Constant(1, -0.8), Vec::Constant(1, 0.8)});
  p.constraints.push_back(StateBox{1, -1.5, 1.5});
  return p;
}

}  // namespace

TEST_CASE("ip knot solve: inactive constraint recovers the unconstrained gain",
          "[ip]") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const int n = 3, m = 2;
  QExpansion q;
  Mat Mq = Mat::NullaryExpr(m, m, [&]() { return d(rng); });
  q.Quu = Mq * Mq.transpose() + Mat::Identity(m, m);
  q.Qux = Mat::NullaryExpr(m, n, [&]() { return d(rng); });
  q.Qu = Vec::NullaryExpr(m, [&]() { return d(rng); });
  q.Qx = Vec::NullaryExpr(n, [&]() { return d(rng); });
  q.Qxx = Mat::Identity(n, n);

  // one far-away constraint: g = u_0 - 100 <= 0 at u ~ 0
  Vec g = Vec::Constant(1, -100.0);
  Mat gx = Mat::Zero(1, n);
  Mat gu = Mat::Zero(1, m);
  gu(0, 0) = 1.0;
  double mu = 1e-6;
  Vec s = -g;
  Vec lam = Vec::Constant(1, mu / s(0));

  auto res = ip_knot_solve(q, g, gx, gu, s, lam, mu, 0.0);
  REQUIRE(res.pd);
  Vec kappa_unc = -q.Quu.llt().solve(q.Qu);
  Mat K_unc = -q.Quu.llt().solve(q.Qux);
  REQUIRE((res.kappa - kappa_unc).cwiseAbs().maxCoeff() <= 1e-6);
  REQUIRE((res.K - K_unc).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("ip knot solve: scalar case matches a dense 3x3 KKT solve", "[ip]") {
  // m = 1, w = 1 toy; solve the full (du, ds, dl) Newton system directly.
  QExpansion q;
  q.Quu = Mat::Constant(1, 1, 2.0);
  q.Qu = Vec::Constant(1, -0.7);
  q.Qux = Mat::Constant(1, 1, 0.3);
  q.Qx = Vec::Constant(1, 0.1);
  q.Qxx = Mat::Constant(1, 1, 1.0);
  Vec g = Vec::Constant(1, -0.4);
  Mat gx = Mat::Constant(1, 1, 0.2);
  Mat gu = Mat::Constant(1, 1, 1.0);
  Vec s = Vec::Constant(1, 0.3);
  Vec lam = Vec::Constant(1, 0.5);
  double mu = 0.05;

  auto res = ip_knot_solve(q, g, gx, gu, s, lam, mu, 0.0);
  REQUIRE(res.pd);

  // dense system in (du, ds, dl):
  //   Quu du + gu' dl = -Qu
  //   Lam ds + S dl   = -(lam*s - mu)
  //   gu du + ds      = -(g + s)
  Mat K = Mat::Zero(3, 3);
  K(0, 0) = q.Quu(0, 0);
  K(0, 2) = gu(0, 0);
  K(1, 1) = lam(0);
  K(1, 2) = s(0);
  K(2, 0) = gu(0, 0);
  K(2, 1) = 1.0;
  Vec rhs(3);
  rhs << -q.Qu(0), -(lam(0) * s(0) - mu), -(g(0) + s(0));
  Vec sol = K.fullPivLu().solve(rhs);
  REQUIRE(res.kappa(0) == Catch::Approx(sol(0)).margin(1e-12));
  REQUIRE(res.kappa_s(0) == Catch::Approx(sol(1)).margin(1e-12));
  REQUIRE(res.r(0) == Catch::Approx(sol(2)).margin(1e-12));

  SECTION("positivity precondition is enforced") {
    Vec bad_s = Vec::Constant(1, 0.0);
    REQUIRE_THROWS_AS(ip_knot_solve(q, g, gx, gu, bad_s, lam, 0.0, 0.0),
                      InfeasibleError);
  }
}

TEST_CASE("ip fraction-to-the-boundary grid search", "[ip]") {
  auto grid = backtracking_alphas();
  SECTION("nothing moves") {
    REQUIRE(ftb_scalar_max(1.0, 0.0, 0.995, grid) == 1.0);
  }
  SECTION("s = 1, ds = -2, tau = 0.995") {
    // need 1 - 2a >= 0.005  =>  a <= 0.4975: first grid value below is 0.25
    double a = ftb_scalar_max(1.0, -2.0, 0.995, grid);
    REQUIRE(a == 0.25);
    REQUIRE(1.0 - 2.0 * a >= (1.0 - 0.995) * 1.0);
  }
}

TEST_CASE("solve_ip: pendulum stays interior and satisfies the exit tests", "[ip]") {
  OCProblem p = constrained_pendulum();
  IPOptions opt;
  opt.max_iter = 800;
  auto report = solve_ip(p, zero_controls(p), opt);

  // slacks and multipliers strictly positive throughout
  double min_s = kInf, min_l = kInf;
  for (const auto& s : report.duals.slack) min_s = std::min(min_s, s.minCoeff());
  for (const auto& l : report.duals.lambda) min_l = std::min(min_l, l.minCoeff());
  REQUIRE(min_s > 0.0);
  REQUIRE(min_l > 0.0);

  // mu decreases monotonically across the run
  double prev_mu = kInf;
  for (const auto& r : report.iterations) {
    REQUIRE(r.mu <= prev_mu + 1e-15);
    prev_mu = std::min(prev_mu, r.mu);
  }

  // returned trajectory violation at the IP tolerance
  auto v = violation_norms(p, report.trajectory);
  REQUIRE(v.ineq <= 1e-6);

  // same constrained optimum as the other solvers
  REQUIRE(report.trajectory.X.back()(0) == Catch::Approx(1.498).margin(0.05));
}

TEST_CASE("solve_ip: full vs qdagger recursion agree when constraints are far",
          "[ip]") {
  OCProblem p = constrained_pendulum();
  // loose box: the swing stays well inside, duals vanish
  p.constraints.clear();
  p.constraints.push_back(ControlBox{Vec::Constant(1, -50.0), Vec::Constant(1, 50.0)});
  IPOptions a, b;
  a.recursion = IPRecursion::Full;
  b.recursion = IPRecursion::QDagger;
  a.max_iter = b.max_iter = 400;
  auto ra = solve_ip(p, zero_controls(p), a);
  auto rb = solve_ip(p, zero_controls(p), b);
  double du = 0.0;
  for (int k = 0; k + 1 < p.N; ++k)
    du = std::max(du, inf_norm(ra.trajectory.U[static_cast<size_t>(k)] - rb.trajectory.U[static_cast<size_t>(k)]));
  REQUIRE(du <= 1e-4);
}

TEST_CASE("solve_ip: unconstrained problem degenerates to plain DDP", "[ip]") {
  auto lq = oracles::random_lq(909, 3, 2, 25);
  OCProblem p = lq.to_ocp();
  auto ric = oracles::riccati(lq);
  IPOptions opt;
  opt.tol = 1e-9;
  auto report = solve_ip(p, zero_controls(p), opt);
  REQUIRE(report.status == SolveStatus::Converged);
  REQUIRE(total_cost(p, report.trajectory) ==
          Catch::Approx(ric.optimal_cost).margin(1e-8));
}
