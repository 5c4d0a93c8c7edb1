#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dynopt/fd_check.hpp"
#include "dynopt/models/pendulum.hpp"
#include "dynopt/problem.hpp"
#include "dynopt/quadratic_cost.hpp"

using namespace dynopt;

namespace {

OCProblem pendulum_with_cost() {
  OCProblem p = make_pendulum_problem();
  Mat R1 = Mat::Constant(1, 1, 0.001);
  Mat R2 = 0.005 * Mat::Identity(2, 2);
  Mat Q = 100.0 * Mat::Identity(2, 2);
  Vec xg(2);
  xg << M_PI, 0.0;
  set_quadratic_cost(p, R1, R2, Q, xg);
  return p;
}

}  // namespace

TEST_CASE("rollout: pendulum equilibria and hand-evaluated step", "[problem_core]") {
  OCProblem p = pendulum_with_cost();

  SECTION("upright torque-free fixed point") {
    p.x_init << M_PI, 0.0;
    Trajectory t = rollout(p, zero_controls(p));
    for (const auto& x : t.X) {
      REQUIRE(x(0) == Catch::Approx(M_PI).margin(1e-13));
      REQUIRE(x(1) == Catch::Approx(0.0).margin(1e-13));
    }
  }

  SECTION("one Euler step with u = 0.8") {
    p.x_init << 0.0, 0.0;
    auto U = zero_controls(p);
    U[0](0) = 0.8;
    Trajectory t = rollout(p, U);
    REQUIRE(t.X[1](0) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(t.X[1](1) == Catch::Approx(0.32).epsilon(1e-12));
  }

  SECTION("length precondition") {
    std::vector<Vec> U(static_cast<size_t>(p.N - 2), Vec::Zero(1));
    REQUIRE_THROWS_AS(rollout(p, U), DimensionError);
  }

  SECTION("non-finite rollout is flagged") {
    p.dynamics = [](const Vec& x, const Vec&) {
      Vec y = x;
      y(0) = std::numeric_limits<double>::quiet_NaN();
      return y;
    };
    REQUIRE_THROWS_AS(rollout(p, zero_controls(p)), NonFiniteError);
  }
}

TEST_CASE("rollout is idempotent on its own controls", "[problem_core]") {
  OCProblem p = pendulum_with_cost();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  auto U = zero_controls(p);
  for (auto& u : U) u(0) = d(rng);
  Trajectory t1 = rollout(p, U);
  Trajectory t2 = rollout(p, t1.U);
  for (int k = 0; k < p.N; ++k)
    REQUIRE((t1.X[static_cast<size_t>(k)] - t2.X[static_cast<size_t>(k)]).norm() == 0.0);
}

TEST_CASE("total_cost: zero at goal, hand sum on a one-step problem", "[problem_core]") {
  SECTION("quadratic form at origin") {
    OCProblem p = pendulum_with_cost();
    Mat R1 = Mat::Constant(1, 1, 0.001);
    set_quadratic_cost(p, R1, 0.005 * Mat::Identity(2, 2), 100.0 * Mat::Identity(2, 2),
                       Vec::Zero(2));
    p.x_init = Vec::Zero(2);
    Trajectory t = rollout(p, zero_controls(p));
    REQUIRE(total_cost(p, t) == 0.0);
  }

  SECTION("single step, l = u'u/2, Phi = x'x/2") {
    OCProblem p = make_pendulum_problem();
    p.N = 2;
    p.stage_cost = [](const Vec&, const Vec& u) { return 0.5 * u.squaredNorm(); };
    p.terminal_cost = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
    p.x_init = Vec::Zero(2);
    std::vector<Vec> U{Vec::Constant(1, 1.0)};
    Trajectory t = rollout(p, U);
    REQUIRE(total_cost(p, t) ==
            Catch::Approx(0.5 + 0.5 * t.X[1].squaredNorm()).epsilon(1e-14));
  }

  SECTION("additive across a horizon split") {
    OCProblem p = pendulum_with_cost();
    p.x_init << 0.2, -0.1;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    auto U = zero_controls(p);
    for (auto& u : U) u(0) = d(rng);
    Trajectory t = rollout(p, U);
    double J = total_cost(p, t);
    const int split = 41;
    double head = 0.0;
    for (int k = 0; k < split; ++k) head += p.stage_cost(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
    double tail = 0.0;
    for (int k = split; k + 1 < p.N; ++k)
      tail += p.stage_cost(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]);
    tail += p.terminal_cost(t.X.back());
    REQUIRE(J == Catch::Approx(head + tail).epsilon(1e-13));
  }
}

TEST_CASE("violation_norms: infinity norm over knots incl. terminal", "[problem_core]") {
  OCProblem p = pendulum_with_cost();
  p.constraints.push_back(ControlBox{Vec::Constant(1, -0.8), Vec::Constant(1, 0.8)});
  p.constraints.push_back(StateBox{1, -1.5, 1.5});
  p.x_init = Vec::Zero(2);

  SECTION("strictly feasible trajectory") {
    Trajectory t = rollout(p, zero_controls(p));
    REQUIRE(violation_norms(p, t).ineq == 0.0);
  }

  SECTION("single active violation of 0.1") {
    auto U = zero_controls(p);
    U[40](0) = 0.9;
    Trajectory t = rollout(p, U);
    REQUIRE(violation_norms(p, t).ineq == Catch::Approx(0.1).epsilon(1e-12));
  }

  SECTION("feasible iff g <= 0 everywhere") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> d(-1.2, 1.2);
    for (int trial = 0; trial < 20; ++trial) {
      auto U = zero_controls(p);
      for (auto& u : U) u(0) = d(rng);
      Trajectory t = rollout(p, U);
      bool all_nonpos = true;
      for (int k = 0; k + 1 < p.N; ++k)
        if (p.ineq(t.X[static_cast<size_t>(k)], t.U[static_cast<size_t>(k)]).maxCoeff() > 0) all_nonpos = false;
      if (p.ineq_terminal(t.X.back()).maxCoeff() > 0) all_nonpos = false;
      REQUIRE((violation_norms(p, t).ineq == 0.0) == all_nonpos);
    }
  }

  SECTION("exact rollout has zero defect") {
    Trajectory t = rollout(p, zero_controls(p));
    t.shooting_defects = true;
    REQUIRE(violation_norms(p, t).eq == 0.0);
  }
}

TEST_CASE("check_derivatives: quadratic exact, fault injected", "[problem_core]") {
  OCProblem p = pendulum_with_cost();
  p.constraints.push_back(ControlBox{Vec::Constant(1, -0.8), Vec::Constant(1, 0.8)});
  p.x_init << 0.3, 0.2;
  auto U = constant_controls(p, Vec::Constant(1, 0.1));
  Trajectory t = rollout(p, U);

  SECTION("analytic pendulum callbacks pass") {
    REQUIRE(check_derivatives(p, t, 1e-6) <= 1e-4);
  }

  SECTION("quadratic cost derivatives are near-exact") {
    OCProblem lin = p;
    set_quadratic_cost(lin, Mat::Constant(1, 1, 0.001), 0.005 * Mat::Identity(2, 2),
                       10.0 * Mat::Identity(2, 2), Vec::Zero(2));
    lin.dynamics = [](const Vec& x, const Vec& u) {
      Vec y(2);
      y(0) = 0.9 * x(0) + 0.1 * x(1);
      y(1) = 0.2 * x(1) + 0.05 * u(0);
      return y;
    };
    lin.dynamics_jac = [](const Vec&, const Vec&, Mat& fx, Mat& fu) {
      fx = Mat(2, 2);
      fx << 0.9, 0.1, 0.0, 0.2;
      fu = Mat(2, 1);
      fu << 0.0, 0.05;
    };
    Trajectory tl = rollout(lin, U);
    REQUIRE(check_derivatives(lin, tl, 1e-5) <= 1e-9);
  }

  SECTION("corrupted f_x entry is detected") {
    OCProblem bad = p;
    auto good = p.dynamics_jac;
    bad.dynamics_jac = [good](const Vec& x, const Vec& u, Mat& fx, Mat& fu) {
      good(x, u, fx, fu);
      fx(0, 0) += 0.1;
    };
    REQUIRE(check_derivatives(bad, t, 1e-6) >= 0.05);
  }
}

TEST_CASE("finite-difference fallback provider", "[problem_core]") {
  OCProblem p = make_pendulum_problem();
  Mat R1 = Mat::Constant(1, 1, 0.001);
  set_quadratic_cost(p, R1, 0.005 * Mat::Identity(2, 2), 100.0 * Mat::Identity(2, 2),
                     Vec::Zero(2));
  p.dynamics_jac = nullptr;
  p.stage_cost_derivs = nullptr;
  p.terminal_cost_derivs = nullptr;
  attach_fd_derivatives(p);
  p.x_init << 0.4, -0.2;
  Trajectory t = rollout(p, constant_controls(p, Vec::Constant(1, 0.2)));
  REQUIRE(check_derivatives(p, t, 1e-5) <= 1e-4);
}
