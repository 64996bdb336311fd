#pragma once

// Small scenario builders shared by the unit tests.

#include <Eigen/Dense>
#include <limits>
#include <random>
#include <vector>

#include "platoon/platoon.hpp"

namespace platoon::testing {

inline ModelParams bando_params(double d_s = 2.5) {
  ModelParams p;
  p.alpha = 0.1;
  p.beta = 525.0;
  p.vehicle_length = 4.5;
  p.v_max = 30.0;
  p.d_s = d_s;
  return p;
}

inline LeaderTrajectory constant_leader(double v, double horizon, double step, double x0 = 0.0) {
  LeaderTrajectory l = synth_leader_stop_and_go(v, 0.0, 10.0, 0, horizon, step);
  l.x.array() += x0;
  return l;
}

/// `n` vehicles at uniform gap `gap` and speed `v0` behind `leader`.
inline PlatoonSystem make_system(int n, std::vector<int> av_slots, const TimeGrid& grid, double gap, double v0,
                                 LeaderTrajectory leader, const ModelParams& p = bando_params(15.0)) {
  PlatoonSystem sys;
  sys.model = p;
  sys.grid = grid;
  sys.layout = PlatoonLayout(n, std::move(av_slots));
  sys.leader = std::move(leader);
  sys.init.x0.resize(n);
  sys.init.v0 = Eigen::VectorXd::Constant(n, v0);
  for (int i = 0; i < n; ++i) sys.init.x0[i] = sys.leader.x[0] - (i + 1) * (gap + p.vehicle_length);
  return sys;
}

inline TimeGrid grid(double horizon, double state_step = 0.1, double control_step = 5.0) {
  TimeGrid g;
  g.horizon = horizon;
  g.state_step = state_step;
  g.control_step = control_step;
  return g;
}

/// Random mixed platoon (3-8 vehicles, 1-3 AVs, T in [30, 120] s) behind a
/// stop-and-go leader, with a random control schedule around leader tracking.
/// A tight d_max keeps some headway penalties active.
inline std::pair<Problem, ControlSchedule> random_problem(std::mt19937& rng) {
  std::uniform_int_distribution<int> n_dist(3, 8), av_dist(1, 3), T_dist(6, 24);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = n_dist(rng);
  const int n_av = std::min(av_dist(rng), n);
  std::vector<int> slots(n);
  for (int i = 0; i < n; ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(n_av);
  const double T = 5.0 * T_dist(rng);
  const double v_base = 20.0 + 8.0 * unit(rng);
  const LeaderTrajectory leader =
      synth_leader_stop_and_go(v_base, 0.6 * v_base * unit(rng), 20.0 + 40.0 * unit(rng), 1, T, 0.1, 0.2 * T);
  const ModelParams p = bando_params(15.0);
  const double gap = 14.0 + 10.0 * unit(rng);
  Problem prob;
  prob.system = make_system(n, slots, grid(T), gap, v_base, leader, p);
  prob.objective.mode = unit(rng) < 0.75 ? ObjectiveMode::full : ObjectiveMode::greedy;
  prob.objective.mu = 10.0;
  prob.objective.d_safe = 5.0;
  prob.objective.d_max = gap + 3.0;
  ControlSchedule c = leader_tracking_schedule(prob.system.grid, leader, n_av);
  for (int k = 0; k < c.intervals(); ++k)
    for (int m = 0; m < n_av; ++m) c.omega(k, m) += 0.3 * (2.0 * unit(rng) - 1.0);
  return {prob, c};
}

/// Lone AV behind a braking leader on a coarse control grid (p intervals of
/// 5 s); starting 12 m back at the leader's speed it must brake to respect
/// d_safe, so the penalty is active at omega = 0.
inline Problem lone_av_problem(int p, double mu) {
  const double T = 5.0 * p;
  Problem prob;
  const LeaderTrajectory leader = synth_leader_stop_and_go(20.0, 8.0, 2.0 * T, 1, T, 0.1, 0.0);
  prob.system = make_system(1, {0}, grid(T), 12.0, leader.v[0], leader);
  prob.objective.mu = mu;
  prob.objective.d_max = 30.0;
  return prob;
}

/// Grid search over omega in [-lim, lim]^p followed by a shrinking compass
/// (pattern) search from the best grid point.
inline std::pair<double, Eigen::VectorXd> brute_force_lone_av(const Problem& prob, double lim, int levels) {
  const int p = prob.system.grid.intervals();
  ControlSchedule c = ControlSchedule::zeros(prob.system.grid, 1);
  auto f = [&](const Eigen::VectorXd& w) {
    c.omega.col(0) = w;
    return objective_of(prob, c);
  };
  Eigen::VectorXd best(p), w(p);
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<int> idx(p, 0);
  while (true) {
    for (int k = 0; k < p; ++k) w[k] = -lim + 2.0 * lim * idx[k] / (levels - 1);
    const double v = f(w);
    if (v < best_f) {
      best_f = v;
      best = w;
    }
    int k = 0;
    while (k < p && ++idx[k] == levels) idx[k++] = 0;
    if (k == p) break;
  }
  for (double h = 2.0 * lim / (levels - 1); h > 1e-7; h *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int k = 0; k < p; ++k)
        for (double sgn : {1.0, -1.0}) {
          Eigen::VectorXd t = best;
          t[k] += sgn * h;
          const double v = f(t);
          if (v < best_f) {
            best_f = v;
            best = t;
            improved = true;
          }
        }
    }
  }
  return {best_f, best};
}

}  // namespace platoon::testing
