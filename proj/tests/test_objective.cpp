#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace platoon;
using namespace platoon::testing;

namespace {

// Direct transcription of the quadrature: each step evaluates the full running
// cost at both ends with that step's control.
double naive_objective(const StateTrajectory& s, const ControlSchedule& c, const Problem& prob) {
  const double h = s.step;
  double total = 0.0;
  for (int j = 0; j < s.steps(); ++j) {
    const int k = c.interval_at(j * h + 0.5 * h);
    const Eigen::VectorXd u = c.omega.row(k).transpose();
    total += 0.5 * h * (running_cost(j * h, s.state(j), u, prob) + running_cost((j + 1) * h, s.state(j + 1), u, prob));
  }
  return total;
}

}  // namespace

TEST(Penalty, MinHeadway) {
  auto p = headway_penalty(3.0, 5.0, PenaltyDirection::min);
  EXPECT_DOUBLE_EQ(p.value, 4.0);
  EXPECT_DOUBLE_EQ(p.slope, -4.0);
  p = headway_penalty(7.0, 5.0, PenaltyDirection::min);
  EXPECT_EQ(p.value, 0.0);
  EXPECT_EQ(p.slope, 0.0);
}

TEST(Penalty, MaxHeadway) {
  auto p = headway_penalty(130.0, 120.0, PenaltyDirection::max);
  EXPECT_DOUBLE_EQ(p.value, 100.0);
  EXPECT_DOUBLE_EQ(p.slope, 20.0);
  EXPECT_EQ(headway_penalty(100.0, 120.0, PenaltyDirection::max).value, 0.0);
}

TEST(Penalty, Velocity) {
  const auto p = velocity_penalty(-2.0);
  EXPECT_DOUBLE_EQ(p.value, 4.0);
  EXPECT_DOUBLE_EQ(p.slope, -4.0);
  EXPECT_EQ(velocity_penalty(3.0).value, 0.0);
}

TEST(Penalty, VanishesInsideFeasibleWindowAndIsNonNegative) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> inside(5.0, 120.0), any(-50.0, 300.0);
  for (int k = 0; k < 1000; ++k) {
    const double g = inside(rng);
    EXPECT_EQ(headway_penalty(g, 5.0, PenaltyDirection::min).value, 0.0);
    EXPECT_EQ(headway_penalty(g, 120.0, PenaltyDirection::max).value, 0.0);
    const double h = any(rng);
    EXPECT_GE(headway_penalty(h, 5.0, PenaltyDirection::min).value, 0.0);
    EXPECT_GE(headway_penalty(h, 120.0, PenaltyDirection::max).value, 0.0);
    EXPECT_GE(velocity_penalty(h).value, 0.0);
  }
}

TEST(Penalty, SlopeMatchesFiniteDifference) {
  for (double g : {-3.0, 2.0, 4.9, 121.0, 140.0}) {
    for (auto dir : {PenaltyDirection::min, PenaltyDirection::max}) {
      const double thr = dir == PenaltyDirection::min ? 5.0 : 120.0;
      const double fd = (headway_penalty(g + 1e-6, thr, dir).value - headway_penalty(g - 1e-6, thr, dir).value) / 2e-6;
      EXPECT_NEAR(headway_penalty(g, thr, dir).slope, fd, 1e-6);
    }
  }
}

TEST(RunningCost, HumanTermsOnlyInFullMode) {
  Problem prob;
  prob.system = make_system(2, {0}, grid(10.0), 12.0, 15.0, constant_leader(20.0, 10.0, 0.1));
  const auto& sys = prob.system;
  Eigen::VectorXd y(4);
  y << sys.init.x0[0], sys.init.x0[1], 15.0, 15.0;
  Eigen::VectorXd u(1);
  u << 0.7;
  const double hv_acc = bando_ftl_acc(y[1], y[0], 15.0, 15.0, sys.model);
  prob.objective.mode = ObjectiveMode::full;
  EXPECT_NEAR(running_cost(0.0, y, u, prob), 0.49 + hv_acc * hv_acc, 1e-12);
  prob.objective.mode = ObjectiveMode::greedy;
  EXPECT_NEAR(running_cost(0.0, y, u, prob), 0.49, 1e-15);
}

TEST(RunningCost, PenaltiesApplyToAvsOnly) {
  Problem prob;
  // HV at slot 1 sits 3 m behind the AV: no penalty for it
  prob.system = make_system(2, {0}, grid(10.0), 3.0, 10.0, constant_leader(10.0, 10.0, 0.1));
  prob.system.init.x0[0] -= 10.0;  // AV 13 m behind the leader
  prob.objective.mode = ObjectiveMode::greedy;
  prob.objective.mu = 7.0;
  prob.objective.d_max = 12.0;
  const auto& sys = prob.system;
  Eigen::VectorXd y(4);
  y << sys.init.x0[0], sys.init.x0[1], -1.0, 10.0;
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  // max-headway excess 1 m and velocity -1 m/s
  EXPECT_NEAR(running_cost(0.0, y, u, prob), 7.0 * (1.0 + 1.0), 1e-12);
  prob.objective.velocity_penalty = false;
  EXPECT_NEAR(running_cost(0.0, y, u, prob), 7.0, 1e-12);
}

TEST(RunningCost, PartialsMatchFiniteDifferences) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    auto [prob, c] = random_problem(rng);
    const StateTrajectory s = simulate_forward(prob.system, c);
    for (int j : {0, s.steps() / 3, s.steps()}) {
      const double t = s.time(j);
      const Eigen::VectorXd y = s.state(j);
      const Eigen::VectorXd u = c.omega.row(c.interval_at(t)).transpose();
      const CostPartials d = running_cost_partials(t, y, u, prob);
      Eigen::VectorXd fd_y(y.size()), fd_u(u.size());
      for (int m = 0; m < y.size(); ++m) {
        Eigen::VectorXd a = y, b = y;
        a[m] += 1e-6;
        b[m] -= 1e-6;
        fd_y[m] = (running_cost(t, a, u, prob) - running_cost(t, b, u, prob)) / 2e-6;
      }
      for (int m = 0; m < u.size(); ++m) {
        Eigen::VectorXd a = u, b = u;
        a[m] += 1e-2;
        b[m] -= 1e-2;
        fd_u[m] = (running_cost(t, y, a, prob) - running_cost(t, y, b, prob)) / 2e-2;  // exact for a quadratic
      }
      const double scale = std::max(1.0, fd_y.cwiseAbs().maxCoeff());
      EXPECT_LT((d.L_y - fd_y).cwiseAbs().maxCoeff() / scale, 1e-6) << "trial " << trial << " j " << j;
      EXPECT_LT((d.L_u - fd_u).cwiseAbs().maxCoeff(), 1e-6);
      EXPECT_LT((d.L_u - 2.0 * u).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(TotalObjective, MatchesStepwiseQuadrature) {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    auto [prob, c] = random_problem(rng);
    const StateTrajectory s = simulate_forward(prob.system, c);
    const double naive = naive_objective(s, c, prob);
    EXPECT_NEAR(total_objective(s, c, prob), naive, 1e-11 * std::abs(naive)) << "trial " << trial;
  }
}

TEST(TotalObjective, QuadraticInControlWhenOnlyAvsCount) {
  Problem prob;
  prob.system = make_system(2, {0, 1}, grid(20.0), 20.0, 20.0, constant_leader(20.0, 20.0, 0.1));
  prob.objective.mode = ObjectiveMode::greedy;
  prob.objective.mu = 0.0;
  ControlSchedule c = ControlSchedule::zeros(prob.system.grid, 2);
  c.omega << 0.1, -0.2, 0.3, 0.05, -0.1, 0.0, 0.2, 0.15;
  EXPECT_NEAR(objective_of(prob, c), 5.0 * c.omega.squaredNorm(), 1e-12);
}

TEST(TotalObjective, ZeroAtEquilibrium) {
  Problem prob;
  const ModelParams p = bando_params(15.0);
  const double gap = 16.0;
  const double v = optimal_velocity(gap, p);
  prob.system = make_system(4, {2}, grid(30.0), gap, v, constant_leader(v, 30.0, 0.1), p);
  const double J = objective_of(prob, ControlSchedule::zeros(prob.system.grid, 1));
  EXPECT_GE(J, 0.0);
  EXPECT_LT(J, 1e-20);
}

TEST(TotalObjective, GreedyNeverExceedsFull) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto [prob, c] = random_problem(rng);
    const StateTrajectory s = simulate_forward(prob.system, c);
    prob.objective.mode = ObjectiveMode::full;
    const double full = total_objective(s, c, prob);
    prob.objective.mode = ObjectiveMode::greedy;
    const double greedy = total_objective(s, c, prob);
    EXPECT_GE(greedy, 0.0);
    EXPECT_LE(greedy, full);
  }
}

TEST(TotalObjective, RejectsMismatchedInputs) {
  Problem prob;
  prob.system = make_system(3, {1}, grid(20.0), 20.0, 20.0, constant_leader(20.0, 20.0, 0.1));
  const StateTrajectory s = simulate_forward(prob.system, ControlSchedule::zeros(prob.system.grid, 1));
  EXPECT_THROW(total_objective(s, ControlSchedule::zeros(prob.system.grid, 2), prob), ValidationError);
  StateTrajectory short_s = s;
  short_s.x.conservativeResize(10, Eigen::NoChange);
  short_s.v.conservativeResize(10, Eigen::NoChange);
  EXPECT_THROW(total_objective(short_s, ControlSchedule::zeros(prob.system.grid, 1), prob), GridError);
}

TEST(ObjectiveConfig, Validation) {
  ObjectiveConfig o;
  EXPECT_NO_THROW(o.validate());
  o.mu = -1.0;
  EXPECT_THROW(o.validate(), ValidationError);
  o = ObjectiveConfig{};
  o.d_max = o.d_safe;
  EXPECT_THROW(o.validate(), ValidationError);
}

TEST(Energy, ZeroCoefficientsGiveZero) {
  std::mt19937 rng(3);
  auto [prob, c] = random_problem(rng);
  const StateTrajectory s = simulate_forward(prob.system, c);
  const Metrics m = compute_metrics(s, prob.system, c, EnergyParams::zero());
  EXPECT_EQ(m.fuel.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.total_fuel, 0.0);
}

TEST(Energy, ConstantAccelerationMatchesClosedForm) {
  const double v0 = 10.0, u = 0.5, T = 20.0;
  Problem prob;
  prob.system = make_system(1, {0}, grid(T), 50.0, v0, constant_leader(25.0, T, 0.1, 200.0));
  const ControlSchedule c = ControlSchedule::constant(prob.system.grid, 1, u);
  const StateTrajectory s = simulate_forward(prob.system, c);
  EnergyParams e;
  e.C2 = 0.001;
  e.p2 = 0.002;
  const double vT = v0 + u * T;
  const double dist = v0 * T + 0.5 * u * T * T;
  const double iv2 = (std::pow(vT, 3) - std::pow(v0, 3)) / (3 * u);
  const double iv3 = (std::pow(vT, 4) - std::pow(v0, 4)) / (4 * u);
  const double exact = e.C0 * T + e.C1 * dist + e.C2 * iv2 + e.C3 * iv3 + e.p0 * u * T + e.p1 * u * dist +
                       e.p2 * u * iv2 + e.q0 * u * u * T + e.q1 * u * u * dist;
  const Metrics m = compute_metrics(s, prob.system, c, e);
  EXPECT_NEAR(m.fuel[0], exact, 1e-6 * exact);
  EXPECT_NEAR(m.sq_acceleration[0], u * u * T, 1e-12);
  EXPECT_DOUBLE_EQ(m.av_sq_acceleration, m.sq_acceleration[0]);
}

TEST(Energy, BrakingSkipsTheTractionTerms) {
  const double v0 = 20.0, T = 10.0;
  Problem prob;
  prob.system = make_system(1, {0}, grid(T), 50.0, v0, constant_leader(25.0, T, 0.1, 200.0));
  const StateTrajectory s = simulate_forward(prob.system, ControlSchedule::constant(prob.system.grid, 1, -1.0));
  EnergyParams only_q = EnergyParams::zero();
  only_q.q0 = 1.0;
  only_q.q1 = 1.0;
  EXPECT_EQ(compute_metrics(s, prob.system, ControlSchedule::constant(prob.system.grid, 1, -1.0), only_q).fuel[0], 0.0);
}

TEST(Metrics, TotalsAreSums) {
  std::mt19937 rng(12);
  auto [prob, c] = random_problem(rng);
  const StateTrajectory s = simulate_forward(prob.system, c);
  const Metrics m = compute_metrics(s, prob.system, c, EnergyParams{});
  EXPECT_NEAR(m.total_sq_acceleration, m.sq_acceleration.sum(), 1e-12 * m.total_sq_acceleration);
  EXPECT_NEAR(m.total_fuel, m.fuel.sum(), 1e-12 * std::abs(m.total_fuel));
  double av = 0.0;
  for (int slot : prob.system.layout.av_slots()) av += m.sq_acceleration[slot];
  EXPECT_DOUBLE_EQ(m.av_sq_acceleration, av);
  EXPECT_GE(m.sq_acceleration.minCoeff(), 0.0);
}

TEST(Metrics, FullObjectiveWithoutPenaltiesEqualsTotalSquaredAcceleration) {
  std::mt19937 rng(41);
  auto [prob, c] = random_problem(rng);
  prob.objective.mode = ObjectiveMode::full;
  prob.objective.mu = 0.0;
  const StateTrajectory s = simulate_forward(prob.system, c);
  const Metrics m = compute_metrics(s, prob.system, c, EnergyParams{});
  EXPECT_NEAR(total_objective(s, c, prob), m.total_sq_acceleration, 1e-10 * m.total_sq_acceleration);
}

TEST(Reduction, PercentAndRelativeDifference) {
  EXPECT_DOUBLE_EQ(*percent_reduction(200.0, 50.0), 75.0);
  EXPECT_FALSE(percent_reduction(0.0, 1.0).has_value());
  EXPECT_DOUBLE_EQ(*greedy_relative_difference(80.0, 60.0), 25.0);
  EXPECT_FALSE(greedy_relative_difference(0.0, 3.0).has_value());
}
