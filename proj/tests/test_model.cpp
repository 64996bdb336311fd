#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <random>
#include <vector>

#include "support.hpp"

using namespace platoon;
using platoon::testing::bando_params;

namespace {

using Big = boost::multiprecision::number<boost::multiprecision::cpp_dec_float<120>>;

// Independent evaluation of the car-following law in 120-digit arithmetic.
Big big_ov(const Big& h, const ModelParams& p) {
  using boost::multiprecision::tanh;
  const Big off = tanh(Big(p.vehicle_length) + Big(p.d_s));
  return Big(p.v_max) * (tanh(h - Big(p.d_s)) + off) / (1 + off);
}

Big big_acc(const Big& x, const Big& xl, const Big& v, const Big& vl, const ModelParams& p) {
  const Big h = xl - x - Big(p.vehicle_length);
  return Big(p.alpha) * (big_ov(h, p) - v) + Big(p.beta) * (vl - v) / (h * h);
}

template <typename F>
double big_central_diff(F f, double at, double step) {
  const Big d(step);
  return static_cast<double>((f(Big(at) + d) - f(Big(at) - d)) / (2 * d));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(OptimalVelocity, SaturatesAtVmax) {
  const ModelParams p = bando_params();
  EXPECT_NEAR(optimal_velocity(1e6, p), p.v_max, 1e-9 * p.v_max);
}

TEST(OptimalVelocity, ValueAtSafetyDistance) {
  const ModelParams p = bando_params();
  const double t = std::tanh(p.vehicle_length + p.d_s);
  EXPECT_NEAR(optimal_velocity(p.d_s, p), p.v_max * t / (1 + t), 1e-13);
}

TEST(OptimalVelocity, MatchesHighPrecisionEvaluation) {
  const ModelParams p = bando_params(2.5);
  // frozen from a 40-digit evaluation
  EXPECT_NEAR(optimal_velocity(10.0, p), 29.999990822925561, 1e-13);
  EXPECT_NEAR(optimal_velocity(10.0, p), static_cast<double>(big_ov(Big(10), p)), 1e-13);
  for (double h : {0.5, 2.5, 3.7, 8.0, 40.0})
    EXPECT_NEAR(optimal_velocity(h, p), static_cast<double>(big_ov(Big(h), p)), 1e-13) << h;
}

TEST(OptimalVelocity, RejectsNonPositiveHeadway) {
  const ModelParams p = bando_params();
  EXPECT_THROW(optimal_velocity(0.0, p), DomainError);
  EXPECT_THROW(optimal_velocity(-1.0, p), DomainError);
  EXPECT_THROW(optimal_velocity_deriv(0.0, p), DomainError);
}

TEST(OptimalVelocity, MonotoneNondecreasing) {
  const ModelParams p = bando_params();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> h(1e-3, 200.0);
  for (int k = 0; k < 1000; ++k) {
    double a = h(rng), b = h(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(optimal_velocity(a, p), optimal_velocity(b, p));
  }
}

TEST(OptimalVelocityDeriv, NonNegative) {
  const ModelParams p = bando_params();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> h(1e-9, 200.0);
  for (int k = 0; k < 1000; ++k) EXPECT_GE(optimal_velocity_deriv(h(rng), p), 0.0);
}

TEST(OptimalVelocityDeriv, MatchesFiniteDifferences) {
  const ModelParams p = bando_params(2.5);
  for (double h : {1.0, 5.0, 20.0, 100.0}) {
    const double fd = big_central_diff([&](const Big& x) { return big_ov(x, p); }, h, 1e-6);
    EXPECT_LT(rel_err(optimal_velocity_deriv(h, p), fd), 1e-6) << "h = " << h;
  }
  // plain double differences where round-off allows it
  for (double h : {1.0, 5.0}) {
    const double fd = (optimal_velocity(h + 1e-6, p) - optimal_velocity(h - 1e-6, p)) / 2e-6;
    EXPECT_LT(rel_err(optimal_velocity_deriv(h, p), fd), 1e-6) << "h = " << h;
  }
}

TEST(OptimalVelocityDeriv, PeaksAtSafetyDistance) {
  const ModelParams p = bando_params();
  const double peak = optimal_velocity_deriv(p.d_s, p);
  EXPECT_GE(peak, optimal_velocity_deriv(p.d_s + 1, p));
  EXPECT_GE(peak, optimal_velocity_deriv(p.d_s - 1, p));
}

TEST(BandoFtl, ZeroAtEquilibrium) {
  const ModelParams p = bando_params();
  for (double h : {0.3, 2.0, 7.5, 15.0, 60.0}) {
    const double v = optimal_velocity(h, p);
    EXPECT_NEAR(bando_ftl_acc(0.0, h + p.vehicle_length, v, v, p), 0.0, 1e-15);
  }
}

TEST(BandoFtl, ReferenceConstantsAtTenMetres) {
  const ModelParams p = bando_params(2.5);
  const double acc = bando_ftl_acc(0.0, 10.0 + p.vehicle_length, 5.0, 5.0, p);
  EXPECT_NEAR(acc, 0.1 * (optimal_velocity(10.0, p) - 5.0), 1e-15);
  EXPECT_NEAR(acc, 2.4999990822925561, 1e-13);  // 40-digit evaluation
}

TEST(BandoFtl, FasterLeaderPullsForward) {
  const ModelParams p = bando_params();
  const double h = 12.0;
  const double v = optimal_velocity(h, p);
  EXPECT_GT(bando_ftl_acc(0.0, h + p.vehicle_length, v, v + 1.0, p), 0.0);
}

TEST(BandoFtl, CollisionStateIsAnError) {
  const ModelParams p = bando_params();
  EXPECT_THROW(bando_ftl_acc(0.0, p.vehicle_length, 1.0, 1.0, p), DomainError);
  EXPECT_THROW(bando_ftl_partials(0.0, p.vehicle_length - 1, 1.0, 1.0, p), DomainError);
}

TEST(BandoPartials, LeaderPositionIsNegatedFollowerPosition) {
  const ModelParams p = bando_params();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> h(0.1, 100.0), v(0.0, 35.0);
  for (int k = 0; k < 1000; ++k) {
    const double x = -h(rng);
    const auto d = bando_ftl_partials(x - p.vehicle_length, 0.0, v(rng), v(rng), p);
    EXPECT_EQ(d.d_xlead, -d.d_x);
  }
}

TEST(BandoPartials, MatchFiniteDifferences) {
  const ModelParams p = bando_params();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> hd(0.5, 80.0), vd(0.0, 30.0);
  const double step = 1e-6;
  for (int k = 0; k < 100; ++k) {
    const double x = 0.0, v = vd(rng), vl = vd(rng);
    const double xl = x + p.vehicle_length + hd(rng);
    const auto d = bando_ftl_partials(x, xl, v, vl, p);
    const double fx = big_central_diff([&](const Big& z) { return big_acc(z, Big(xl), Big(v), Big(vl), p); }, x, step);
    const double fxl = big_central_diff([&](const Big& z) { return big_acc(Big(x), z, Big(v), Big(vl), p); }, xl, step);
    const double fv = big_central_diff([&](const Big& z) { return big_acc(Big(x), Big(xl), z, Big(vl), p); }, v, step);
    const double fvl = big_central_diff([&](const Big& z) { return big_acc(Big(x), Big(xl), Big(v), z, p); }, vl, step);
    EXPECT_LT(rel_err(d.d_x, fx), 1e-5);
    EXPECT_LT(rel_err(d.d_xlead, fxl), 1e-5);
    EXPECT_LT(rel_err(d.d_v, fv), 1e-5);
    EXPECT_LT(rel_err(d.d_vlead, fvl), 1e-5);
  }
}

TEST(BandoPartials, EqualSpeedsLeaveOnlyTheRelaxationTerm) {
  const ModelParams p = bando_params();
  const double h = 4.0;
  const auto d = bando_ftl_partials(0.0, h + p.vehicle_length, 9.0, 9.0, p);
  EXPECT_DOUBLE_EQ(d.d_x, -p.alpha * optimal_velocity_deriv(h, p));
  EXPECT_LT(d.d_x, 0.0);
}

TEST(WellPosednessBounds, RegressionValues) {
  const WellPosednessBounds b = theorem_bounds(bando_params(), 100.0, 20.0, 10.0);
  // 40-digit evaluation of the closed forms
  EXPECT_DOUBLE_EQ(b.A, -334.25);
  EXPECT_NEAR(b.d_min, 1.5699432395585832, 1e-14);
  EXPECT_NEAR(b.B, 213.10578638625190, 1e-10);
}

TEST(WellPosednessBounds, MinimumHeadwayPositiveAndBAboveAlpha) {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> T(1.0, 5000.0), g(0.01, 300.0), v(0.0, 40.0), a(0.01, 2.0), b(1.0, 2000.0);
  for (int k = 0; k < 1000; ++k) {
    ModelParams p = bando_params();
    p.alpha = a(rng);
    p.beta = b(rng);
    const auto r = theorem_bounds(p, T(rng), g(rng), v(rng));
    EXPECT_GT(r.d_min, 0.0);
    EXPECT_GT(r.B, p.alpha);
  }
}

TEST(SafeMinDeceleration, StoppingKinematics) {
  const std::vector<double> gaps{55.0}, speeds{10.0};
  EXPECT_DOUBLE_EQ(safe_min_deceleration(gaps, speeds, 5.0), -1.0);
}

TEST(SafeMinDeceleration, StandingStillNeedsNoBraking) {
  const std::vector<double> gaps{30.0}, speeds{0.0};
  EXPECT_EQ(safe_min_deceleration(gaps, speeds, 5.0), 0.0);
}

TEST(SafeMinDeceleration, BindingVehicleDeterminesTheValue) {
  const std::vector<double> gaps{105.0, 25.0}, speeds{20.0, 10.0};
  // -400/200 = -2 versus -100/40 = -2.5
  EXPECT_DOUBLE_EQ(safe_min_deceleration(gaps, speeds, 5.0), -2.5);
}

TEST(SafeMinDeceleration, RejectsGapsAtOrBelowSafeDistance) {
  const std::vector<double> gaps{5.0}, speeds{3.0};
  EXPECT_THROW(safe_min_deceleration(gaps, speeds, 5.0), ValidationError);
}

TEST(SafeMinDeceleration, ConstantBrakingStopsAtSafeDistance) {
  // one AV behind a frozen leader, braking at the computed level until it stops
  const double d_safe = 5.0, v0 = 10.0, gap0 = 55.0;
  const std::vector<double> gaps{gap0}, speeds{v0};
  const double a = safe_min_deceleration(gaps, speeds, d_safe);
  PlatoonSystem sys = platoon::testing::make_system(1, {0}, platoon::testing::grid(10.0), gap0, v0,
                                                    platoon::testing::constant_leader(0.0, 10.0, 0.1, 100.0));
  const StateTrajectory s = simulate_forward(sys, ControlSchedule::constant(sys.grid, 1, a));
  EXPECT_NEAR(s.v(s.steps(), 0), 0.0, 1e-12);
  EXPECT_NEAR(s.gap(s.steps(), 0, sys.leader, sys.model.vehicle_length), d_safe, 1e-6);
  for (int j = 0; j < s.samples(); ++j)
    EXPECT_GE(s.gap(j, 0, sys.leader, sys.model.vehicle_length), d_safe - 1e-9);
}
