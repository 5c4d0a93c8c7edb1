#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dynopt/ddp/solver.hpp"
#include "dynopt/models/pendulum.hpp"
#include "dynopt/quadratic_cost.hpp"
#include "oracles.hpp"

using namespace dynopt;

TEST_CASE("backward pass reproduces Riccati gains on LQ problems", "[ddp]") {
  auto lq = oracles::random_lq(101, 4, 2, 30);
  OCProblem p = lq.to_ocp();
  auto ric = oracles::riccati(lq);

  Trajectory t = rollout(p, zero_controls(p));
  BackwardPass bp = backward_pass(p, t, 0.0, nullptr);
  REQUIRE(bp.ok);

  for (int k = 0; k + 1 < p.N; ++k) {
    // DDP uses u = u_bar + kappa + K dx; Riccati u* = -K x - k. At the zero
    // nominal the feedback signs line up as K_ddp = -K_ric and the
    // feedforward matches the affine law evaluated on the rolled-out state.
    const Mat& Kd = bp.K[static_cast<size_t>(k)];
    const Mat& Kr = ric.K[static_cast<size_t>(k)];
    REQUIRE((Kd + Kr).cwiseAbs().maxCoeff() <= 1e-10);
    Vec expect_ff = -Kr * t.X[static_cast<size_t>(k)] - ric.k[static_cast<size_t>(k)];
    REQUIRE((bp.kappa[static_cast<size_t>(k)] - expect_ff).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("huge regularizer washes out the gains", "[ddp]") {
  auto lq = oracles::random_lq(7, 3, 2, 12);
  OCProblem p = lq.to_ocp();
  Trajectory t = rollout(p, zero_controls(p));
  BackwardPass bp = backward_pass(p, t, 1e8, nullptr);
  REQUIRE(bp.ok);
  for (const auto& K : bp.K) REQUIRE(K.cwiseAbs().maxCoeff() <= 1e-4);
  for (const auto& k : bp.kappa) REQUIRE(k.cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("gradient metric vanishes at the optimum", "[ddp]") {
  auto lq = oracles::random_lq(23, 3, 1, 20);
  OCProblem p = lq.to_ocp();
  auto report = solve_unconstrained(p, zero_controls(p));
  REQUIRE(report.status == SolveStatus::Converged);
  BackwardPass bp = backward_pass(p, report.trajectory, 0.0, nullptr);
  REQUIRE(bp.grad_metric <= 1e-10);
}

TEST_CASE("forward pass: zero gains report Unchanged", "[ddp]") {
  auto lq = oracles::random_lq(31, 2, 1, 10);
  OCProblem p = lq.to_ocp();
  Trajectory t = rollout(p, zero_controls(p));
  BackwardPass bp = backward_pass(p, t, 0.0, nullptr);
  for (auto& k : bp.kappa) k.setZero();
  for (auto& K : bp.K) K.setZero();
  ForwardPass fp = forward_pass(p, t, bp, total_cost(p, t), nullptr);
  REQUIRE(fp.outcome == ForwardOutcome::Unchanged);
}

TEST_CASE("one LQ iteration reaches the Riccati cost", "[ddp]") {
  auto lq = oracles::random_lq(47, 5, 2, 40);
  OCProblem p = lq.to_ocp();
  auto ric = oracles::riccati(lq);

  Trajectory t = rollout(p, zero_controls(p));
  BackwardPass bp = backward_pass(p, t, 0.0, nullptr);
  ForwardPass fp = forward_pass(p, t, bp, total_cost(p, t), nullptr);
  REQUIRE(fp.outcome == ForwardOutcome::Accepted);
  REQUIRE(fp.alpha == 1.0);
  REQUIRE(fp.cost == Catch::Approx(ric.optimal_cost).margin(1e-8));
}

TEST_CASE("solve_unconstrained: LQ convergence in <= 2 iterations", "[ddp]") {
  for (unsigned seed : {11u, 12u, 13u}) {
    auto lq = oracles::random_lq(seed, 4, 2, 50);
    OCProblem p = lq.to_ocp();
    auto ric = oracles::riccati(lq);
    DdpOptions opt;
    opt.tol_grad = 1e-8;
    auto report = solve_unconstrained(p, zero_controls(p), opt);
    REQUIRE(report.status == SolveStatus::Converged);
    int accepted = 0;
    for (const auto& r : report.iterations)
      if (r.alpha > 0) ++accepted;
    REQUIRE(accepted <= 2);
    REQUIRE(total_cost(p, report.trajectory) ==
            Catch::Approx(ric.optimal_cost).margin(1e-8));
  }
}

TEST_CASE("warm start at the optimum converges immediately", "[ddp]") {
  auto lq = oracles::random_lq(53, 3, 2, 25);
  OCProblem p = lq.to_ocp();
  auto first = solve_unconstrained(p, zero_controls(p));
  auto second = solve_unconstrained(p, first.trajectory.U);
  REQUIRE(second.status == SolveStatus::Converged);
  int accepted = 0;
  for (const auto& r : second.iterations)
    if (r.alpha > 0) ++accepted;
  REQUIRE(accepted <= 1);
}

namespace {

OCProblem pendulum_swingup() {
  OCProblem p = make_pendulum_problem();
  Vec xg(2);
  xg << M_PI, 0.0;
  set_quadratic_cost(p, Mat::Constant(1, 1, 0.001), 0.005 * Mat::Identity(2, 2),
                     100.0 * Mat::Identity(2, 2), xg);
  return p;
}

}  // namespace

TEST_CASE("pendulum swing-up without constraints", "[ddp]") {
  OCProblem p = pendulum_swingup();
  DdpOptions opt;
  opt.tol_grad = 1e-6;
  opt.max_iter = 400;
  auto report = solve_unconstrained(p, zero_controls(p), opt);

  // first accepted iteration strictly reduced the cost
  REQUIRE(report.iterations.size() >= 2);
  REQUIRE(report.iterations[1].cost < report.iterations[0].cost);

  double theta_N = report.trajectory.X.back()(0);
  REQUIRE(std::abs(theta_N - M_PI) < 0.05);

  // accepted cost sequence is non-increasing
  double prev = kInf;
  for (const auto& r : report.iterations) {
    REQUIRE(r.cost <= prev + 1e-12);
    prev = r.cost;
  }
}

TEST_CASE("gains invariant to a constant added to the stage cost", "[ddp]") {
  OCProblem p = pendulum_swingup();
  p.x_init << 0.4, 0.0;
  Trajectory t = rollout(p, constant_controls(p, Vec::Constant(1, 0.1)));
  BackwardPass bp1 = backward_pass(p, t, 0.0, nullptr);

  OCProblem shifted = p;
  auto base = p.stage_cost;
  shifted.stage_cost = [base](const Vec& x, const Vec& u) { return base(x, u) + 17.25; };
  BackwardPass bp2 = backward_pass(shifted, t, 0.0, nullptr);

  for (int k = 0; k + 1 < p.N; ++k) {
    REQUIRE((bp1.kappa[static_cast<size_t>(k)] - bp2.kappa[static_cast<size_t>(k)]).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE((bp1.K[static_cast<size_t>(k)] - bp2.K[static_cast<size_t>(k)]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("J_u metric agrees with a finite-difference control gradient", "[ddp]") {
  OCProblem p = pendulum_swingup();
  p.N = 12;
  auto U = constant_controls(p, Vec::Constant(1, 0.3));
  Trajectory t = rollout(p, U);
  BackwardPass bp = backward_pass(p, t, 0.0, nullptr);
  double fd = oracles::fd_control_grad_inf_norm(
      p, U, [&](const std::vector<Vec>& Us) { return total_cost(p, rollout(p, Us)); });
  REQUIRE(bp.grad_metric == Catch::Approx(fd).epsilon(1e-3));
}

TEST_CASE("tau schedule leaves Quu PD after successful zero-tau iterations", "[ddp]") {
  auto lq = oracles::random_lq(71, 3, 2, 15);
  OCProblem p = lq.to_ocp();
  Trajectory t = rollout(p, zero_controls(p));
  BackwardPass bp = backward_pass(p, t, 0.0, nullptr);
  REQUIRE(bp.ok);
  REQUIRE(bp.pd_without_reg);
}
