#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dynopt/ddp/admm.hpp"
#include "dynopt/models/pendulum.hpp"
#include "dynopt/quadratic_cost.hpp"

using namespace dynopt;

namespace {

OCProblem pendulum_with_bounds(double ulim) {
  OCProblem p = make_pendulum_problem();
  Vec xg(2);
  xg << M_PI, 0.0;
  set_quadratic_cost(p, Mat::Constant(1, 1, 0.001), 0.005 * Mat::Identity(2, 2),
                     100.0 * Mat::Identity(2, 2), xg);
  p.constraints.push_back(ControlBox{Vec::Constant(1, -ulim), Vec::Constant(1, ulim)});
  p.constraints.push_back(StateBox{1, -1.5, 1.5});
  return p;
}

}  // namespace

TEST_CASE("admm qmod: hand arithmetic", "[admm]") {
  OCProblem p = make_pendulum_problem();
  set_quadratic_cost(p, Mat::Identity(1, 1), Mat::Zero(2, 2), Mat::Zero(2, 2),
                     Vec::Zero(2));
  ADMMState st;
  st.rho_u = Vec::Constant(1, 10.0);
  st.rho_x = Vec::Constant(2, 10.0);
  st.lam_u.assign(static_cast<size_t>(p.N - 1), Vec::Constant(1, 0.5));
  st.lam_x.assign(static_cast<size_t>(p.N), Vec::Zero(2));
  st.U_c.assign(static_cast<size_t>(p.N - 1), Vec::Constant(1, 1.0));
  st.X_c.assign(static_cast<size_t>(p.N), Vec::Zero(2));
  ADMMHook hook(p, st);

  // scalar y = 2, y_c = 1, lambda = 0.5, rho = 10: grad += 10*(1 + 0.05)
  Vec lx = Vec::Zero(2), lu = Vec::Zero(1);
  Mat lxx = Mat::Zero(2, 2), luu = Mat::Zero(1, 1), lux = Mat::Zero(1, 2);
  hook.stage_mod(0, Vec::Zero(2), Vec::Constant(1, 2.0), lx, lu, lxx, luu, lux);
  REQUIRE(lu(0) == Catch::Approx(10.5).epsilon(1e-14));
  REQUIRE(luu(0, 0) == Catch::Approx(10.0).epsilon(1e-14));
  REQUIRE(lxx(0, 0) == Catch::Approx(10.0).epsilon(1e-14));

  SECTION("zero residual still regularizes the Hessian") {
    Vec lu0 = Vec::Zero(1), lx0 = Vec::Zero(2);
    Mat a = Mat::Zero(2, 2), b = Mat::Zero(1, 1), c = Mat::Zero(1, 2);
    st.lam_u[0].setZero();
    hook.stage_mod(0, Vec::Zero(2), Vec::Constant(1, 1.0), lx0, lu0, a, b, c);
    REQUIRE(lu0(0) == 0.0);
    REQUIRE(b(0, 0) == Catch::Approx(10.0));
  }
}

TEST_CASE("admm copy update: clamping and interior identity", "[admm]") {
  OCProblem p = pendulum_with_bounds(0.8);
  SECTION("outside the box clamps") {
    REQUIRE(detail::admm_project_control(p, Vec::Constant(1, 1.1))(0) ==
            Catch::Approx(0.8));
    REQUIRE(detail::admm_project_control(p, Vec::Constant(1, -2.0))(0) ==
            Catch::Approx(-0.8));
  }
  SECTION("interior point is untouched") {
    REQUIRE(detail::admm_project_control(p, Vec::Constant(1, 0.3))(0) ==
            Catch::Approx(0.3));
  }
  SECTION("state box clamps the rate component") {
    Vec t(2);
    t << 9.0, 2.2;
    Vec xp = detail::admm_project_state(p, t);
    REQUIRE(xp(0) == 9.0);
    REQUIRE(xp(1) == Catch::Approx(1.5));
  }
}

TEST_CASE("admm disk projection matches a grid-search oracle", "[admm]") {
  OCProblem p = make_pendulum_problem();
  p.constraints.push_back(StateDisk{0, 1, 0.0, 0.0, 1.0});  // keep-out r=1 at origin

  Vec t(2);
  t << 0.3, 0.4;  // distance 0.5 from the center: must be pushed to radius 1
  Vec xp = detail::admm_project_state(p, t);
  REQUIRE(std::hypot(xp(0), xp(1)) == Catch::Approx(1.0).margin(1e-12));

  // dense grid argmin over the feasible annulus boundary region
  double best = kInf;
  Vec best_pt(2);
  for (int i = 0; i < 2000; ++i) {
    double ang = 2.0 * M_PI * i / 2000.0;
    Vec cand(2);
    cand << std::cos(ang), std::sin(ang);
    double dd = (cand - t).squaredNorm();
    if (dd < best) {
      best = dd;
      best_pt = cand;
    }
  }
  REQUIRE((xp - best_pt).norm() <= 1e-3);
}

TEST_CASE("admm dual update identity and residuals", "[admm]") {
  OCProblem p = pendulum_with_bounds(0.8);
  Trajectory t = rollout(p, constant_controls(p, Vec::Constant(1, 0.3)));
  ADMMState st;
  st.rho_u = Vec::Constant(1, 10.0);
  st.rho_x = Vec::Constant(2, 10.0);
  st.lam_u.assign(static_cast<size_t>(p.N - 1), Vec::Zero(1));
  st.lam_x.assign(static_cast<size_t>(p.N), Vec::Zero(2));
  st.U_c.assign(static_cast<size_t>(p.N - 1), Vec::Zero(1));
  st.X_c = t.X;
  for (int k = 0; k + 1 < p.N; ++k) st.U_c[static_cast<size_t>(k)] = t.U[static_cast<size_t>(k)];

  SECTION("consensus: residuals zero, multipliers unchanged") {
    auto Xp = st.X_c;
    auto Up = st.U_c;
    admm_dual_update(p, t, st, Xp, Up);
    REQUIRE(st.primal_residual == 0.0);
    REQUIRE(st.dual_residual == 0.0);
    REQUIRE(st.lam_u[0](0) == 0.0);
  }

  SECTION("scalar residual 0.1 at rho 10 gives lambda 1") {
    st.U_c[5](0) = t.U[5](0) - 0.1;
    auto Xp = st.X_c;
    auto Up = st.U_c;
    admm_dual_update(p, t, st, Xp, Up);
    REQUIRE(st.lam_u[5](0) == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(st.primal_residual == Catch::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("admm: copies stay feasible and rho stays fixed", "[admm]") {
  OCProblem p = pendulum_with_bounds(0.8);
  ADMMOptions opt;
  opt.max_cycles = 40;
  // instrument through a short manual run
  Trajectory traj = rollout(p, zero_controls(p));
  ADMMState st;
  st.rho_u = Vec::Constant(1, opt.rho);
  st.rho_x = Vec::Constant(2, opt.rho);
  st.lam_u.assign(static_cast<size_t>(p.N - 1), Vec::Zero(1));
  st.lam_x.assign(static_cast<size_t>(p.N), Vec::Zero(2));
  st.U_c.assign(static_cast<size_t>(p.N - 1), Vec::Zero(1));
  st.X_c.assign(static_cast<size_t>(p.N), Vec::Zero(2));
  RegSchedule reg;
  for (int cycle = 0; cycle < 12; ++cycle) {
    ADMMHook hook(p, st);
    SolveReport sub;
    ddp_iterate(p, traj, reg, &hook, opt.ddp, opt.inner_ddp_iters, 1e-9, sub);
    auto Xp = st.X_c;
    auto Up = st.U_c;
    admm_copy_update(p, traj, st);
    admm_dual_update(p, traj, st, Xp, Up);
    Trajectory copies;
    copies.X = st.X_c;
    copies.U = st.U_c;
    REQUIRE(violation_norms(p, copies).ineq == 0.0);
  }
  REQUIRE(st.rho_u(0) == opt.rho);
}

TEST_CASE("admm dichotomy: fails at tight bounds, succeeds when loosened", "[admm]") {
  ADMMOptions opt;
  opt.max_cycles = 250;

  OCProblem tight = pendulum_with_bounds(0.8);
  auto rep_tight = solve_admm(tight, zero_controls(tight), opt);
  double theta_tight = rep_tight.trajectory.X.back()(0);

  OCProblem loose = pendulum_with_bounds(0.9);
  auto rep_loose = solve_admm(loose, zero_controls(loose), opt);
  double theta_loose = rep_loose.trajectory.X.back()(0);

  // crossing the gravity-dominated band separates the two regimes
  REQUIRE(theta_loose > 1.95);
  REQUIRE(theta_tight < theta_loose - 0.3);
}

TEST_CASE("admm mixed state-control rows are rejected", "[admm]") {
  OCProblem p = pendulum_with_bounds(0.8);
  GenericConstraint mixed;
  mixed.rows = 1;
  mixed.uses_state = true;
  mixed.uses_control = true;
  mixed.value = [](const Vec& x, const Vec& u) {
    return Vec::Constant(1, x(0) + u(0) - 10.0);
  };
  mixed.jac = [](const Vec& x, const Vec& u, Mat& gx, Mat& gu) {
    gx = Mat::Ones(1, x.size());
    gu = Mat::Ones(1, u.size());
  };
  p.constraints.push_back(mixed);
  REQUIRE_THROWS_AS(solve_admm(p, zero_controls(p), ADMMOptions{}), ProjectionError);
}
