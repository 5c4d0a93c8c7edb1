#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dynopt/fd_check.hpp"
#include "dynopt/models/pendulum.hpp"
#include "dynopt/models/quadpend.hpp"
#include "dynopt/models/swimmer.hpp"
#include "dynopt/quadratic_cost.hpp"

using namespace dynopt;

TEST_CASE("pendulum: equilibrium, step, analytic f_u", "[models]") {
  PendulumParams pp;
  Vec x = Vec::Zero(2), u = Vec::Zero(1);

  REQUIRE(pendulum_step(pp, x, u).norm() == 0.0);

  u(0) = 0.8;
  Vec x1 = pendulum_step(pp, x, u);
  REQUIRE(x1(0) == 0.0);
  REQUIRE(x1(1) == Catch::Approx(0.32).epsilon(1e-12));

  Mat fx, fu;
  pendulum_jac(pp, x, fx, fu);
  REQUIRE(fu(0, 0) == 0.0);
  REQUIRE(fu(1, 0) == Catch::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("quadpend: hover, free fall, Jacobians", "[models]") {
  QuadpendParams qp;

  SECTION("hover control is a fixed point") {
    Vec x = Vec::Zero(8);
    Vec u = qp.hover_control();
    Vec x1 = quadpend_step(qp, x, u);
    REQUIRE((x1 - x).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SECTION("free fall at any hover pose") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> d(-M_PI, M_PI);
    for (int i = 0; i < 20; ++i) {
      Vec x = Vec::Zero(8);
      x(2) = d(rng) * 0.2;
      x(3) = d(rng);
      Vec x1 = quadpend_step(qp, x, Vec::Zero(2));
      double ay = (x1(5) - x(5)) / qp.dt;
      REQUIRE(ay == Catch::Approx(-qp.gravity).margin(1e-12));
    }
  }

  SECTION("mass matrix stays positive definite over the phi range") {
    for (int i = 0; i < 1000; ++i) {
      Vec x = Vec::Zero(8);
      x(3) = -M_PI + 2.0 * M_PI * i / 999.0;
      REQUIRE_NOTHROW(quadpend_step(qp, x, qp.hover_control()));
    }
  }

  SECTION("analytic Jacobians match finite differences") {
    OCProblem p = make_quadpend_problem(qp);
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Vec x(8), u(2);
      for (int i = 0; i < 8; ++i) x(i) = d(rng);
      u << 2.0 + d(rng), 2.0 + d(rng);
      Mat fx, fu;
      p.dynamics_jac(x, u, fx, fu);
      Mat fx_fd = detail::fd_jacobian([&](const Vec& xx) { return p.dynamics(xx, u); }, x, 1e-6);
      Mat fu_fd = detail::fd_jacobian([&](const Vec& uu) { return p.dynamics(x, uu); }, u, 1e-6);
      worst = std::max(worst, detail::max_rel_err(fx, fx_fd));
      worst = std::max(worst, detail::max_rel_err(fu, fu_fd));
    }
    REQUIRE(worst <= 1e-4);
  }
}

TEST_CASE("swimmer: rest equilibrium and initial nose position", "[models]") {
  SwimmerParams sp;
  Vec x0 = swimmer_initial_state(sp);
  Vec u = Vec::Zero(4);

  Vec x1 = swimmer_step(sp, x0, u);
  REQUIRE((x1 - x0).cwiseAbs().maxCoeff() == 0.0);

  auto shape = swimmer_link_positions(sp, x0);
  REQUIRE(shape.nose.norm() <= 1e-14);
  REQUIRE(shape.tips.back().norm() <= 1e-12);
}

TEST_CASE("swimmer: link geometry invariants", "[models]") {
  SwimmerParams sp;
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> d(-M_PI, M_PI);

  SECTION("straight configuration is collinear with unit tip spacing") {
    Vec x = Vec::Zero(14);
    for (int j = 0; j < 5; ++j) x(2 + j) = 0.7;
    auto s = swimmer_link_positions(sp, x);
    for (size_t i = 0; i + 1 < s.tips.size(); ++i) {
      REQUIRE((s.tips[i + 1] - s.tips[i]).norm() == Catch::Approx(1.0).margin(1e-12));
      Eigen::Vector2d dir = (s.tips[i + 1] - s.tips[i]).normalized();
      REQUIRE(dir.x() == Catch::Approx(std::cos(0.7)).margin(1e-12));
    }
  }

  SECTION("generic angles keep unit link lengths and the CM identity") {
    for (int trial = 0; trial < 25; ++trial) {
      Vec x = Vec::Zero(14);
      x(0) = d(rng);
      x(1) = d(rng);
      for (int j = 0; j < 5; ++j) x(2 + j) = d(rng);
      auto s = swimmer_link_positions(sp, x);
      for (size_t i = 0; i + 1 < s.centers.size(); ++i) {
        double gap = (s.centers[i + 1] - s.centers[i]).norm();
        REQUIRE(gap <= 1.0 + 1e-12);  // adjacent centers at most one length apart
      }
      for (size_t i = 0; i + 1 < s.tips.size(); ++i)
        REQUIRE((s.tips[i + 1] - s.tips[i]).norm() == Catch::Approx(1.0).margin(1e-12));
      Eigen::Vector2d cm(0, 0);
      for (const auto& c : s.centers) cm += c;
      cm /= 5.0;
      REQUIRE((cm - s.center_of_mass).norm() <= 1e-12);
      REQUIRE((s.nose - s.tips.back()).norm() <= 1e-12);
    }
  }
}

TEST_CASE("swimmer: center of mass fixed under zero torque from rest", "[models]") {
  SwimmerParams sp;
  Vec x = Vec::Zero(14);
  for (int j = 0; j < 5; ++j) x(2 + j) = 0.3 * j;  // bent pose, at rest
  Eigen::Vector2d cm0 = swimmer_link_positions(sp, x).center_of_mass;
  for (int step = 0; step < 10; ++step) {
    x = swimmer_step(sp, x, Vec::Zero(4));
    Eigen::Vector2d cm = swimmer_link_positions(sp, x).center_of_mass;
    REQUIRE((cm - cm0).norm() <= 1e-10);
  }
}

TEST_CASE("swimmer: link lengths constant along a forced rollout", "[models]") {
  SwimmerParams sp;
  OCProblem p = make_swimmer_problem(sp);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  Vec x = swimmer_initial_state(sp);
  for (int step = 0; step < 80; ++step) {
    Vec u(4);
    for (int i = 0; i < 4; ++i) u(i) = d(rng);
    x = p.dynamics(x, u);
    auto s = swimmer_link_positions(sp, x);
    for (size_t i = 0; i + 1 < s.tips.size(); ++i)
      REQUIRE((s.tips[i + 1] - s.tips[i]).norm() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("swimmer: Jacobians match finite differences", "[models]") {
  SwimmerParams sp;
  OCProblem p = make_swimmer_problem(sp);
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(14), u(4);
    for (int i = 0; i < 14; ++i) x(i) = d(rng);
    for (int i = 0; i < 4; ++i) u(i) = 5.0 * d(rng);
    Mat fx, fu;
    p.dynamics_jac(x, u, fx, fu);
    Mat fx_fd = detail::fd_jacobian([&](const Vec& xx) { return p.dynamics(xx, u); }, x, 1e-6);
    Mat fu_fd = detail::fd_jacobian([&](const Vec& uu) { return p.dynamics(x, uu); }, u, 1e-6);
    worst = std::max(worst, detail::max_rel_err(fx, fx_fd));
    worst = std::max(worst, detail::max_rel_err(fu, fu_fd));
  }
  REQUIRE(worst <= 1e-4);
}

TEST_CASE("quadratic cost builder: values and PD checks", "[models]") {
  OCProblem p = make_pendulum_problem();
  Mat R1 = Mat::Constant(1, 1, 0.001);
  Mat R2 = 0.005 * Mat::Identity(2, 2);
  Mat Q(2, 2);
  Q << 100, 0, 0, 100;
  Vec xg(2);
  xg << M_PI, 0;
  set_quadratic_cost(p, R1, R2, Q, xg);

  REQUIRE(p.stage_cost(xg, Vec::Zero(1)) == 0.0);
  REQUIRE(p.terminal_cost(xg) == 0.0);

  Vec x(2), u(1);
  x << 0.3, -0.7;
  u << 0.4;
  Vec lx, lu;
  Mat lxx, luu, lux;
  p.stage_cost_derivs(x, u, lx, lu, lxx, luu, lux);
  Vec lx_fd = detail::fd_gradient([&](const Vec& xx) { return p.stage_cost(xx, u); }, x, 1e-5);
  Vec lu_fd = detail::fd_gradient([&](const Vec& uu) { return p.stage_cost(x, uu); }, u, 1e-5);
  REQUIRE((lx - lx_fd).cwiseAbs().maxCoeff() <= 1e-9);
  REQUIRE((lu - lu_fd).cwiseAbs().maxCoeff() <= 1e-9);

  Mat R1_bad = -R1;
  REQUIRE_THROWS_AS(set_quadratic_cost(p, R1_bad, R2, Q, xg), NotPDError);
}
