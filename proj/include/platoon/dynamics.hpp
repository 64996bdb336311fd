#pragma once

// Forward simulation of the mixed platoon: human drivers follow the Bando-FtL
// law, AVs integrate their piecewise-constant commanded acceleration.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "platoon/error.hpp"
#include "platoon/grid.hpp"
#include "platoon/leader.hpp"
#include "platoon/model.hpp"

namespace platoon {

/// Everything needed to integrate the platoon forward in time.
struct PlatoonSystem {
  ModelParams model;
  PlatoonLayout layout;
  InitialState init;
  LeaderTrajectory leader;
  TimeGrid grid;

  int size() const { return layout.size(); }

  void validate() const {
    model.validate();
    grid.validate();
    const int n = layout.size();
    if (init.x0.size() != n || init.v0.size() != n)
      throw ValidationError("initial state length does not match the platoon size");
    for (int i = 0; i < n; ++i)
      if (init.v0[i] < 0.0) throw ValidationError("initial velocity of vehicle " + std::to_string(i + 1) + " is negative");
    if (leader.samples() != grid.steps() + 1 || std::abs(leader.step - grid.state_step) > 1e-12 * grid.state_step)
      throw GridError("leader trajectory is not sampled on the state grid");
  }

  /// Bumper-to-bumper gaps at t = 0 (slot 0 measured to the leader).
  Eigen::VectorXd initial_gaps() const {
    Eigen::VectorXd g(size());
    for (int i = 0; i < size(); ++i) {
      const double ahead = i == 0 ? leader.x[0] : init.x0[i - 1];
      g[i] = ahead - init.x0[i] - model.vehicle_length;
    }
    return g;
  }
};

/// Positions and velocities on the state grid; row j is time j * step.
struct StateTrajectory {
  double step = 0.0;
  Eigen::MatrixXd x;
  Eigen::MatrixXd v;

  int samples() const { return static_cast<int>(x.rows()); }
  int steps() const { return samples() - 1; }
  int vehicles() const { return static_cast<int>(x.cols()); }
  double time(int j) const { return j * step; }

  Eigen::VectorXd state(int j) const {
    Eigen::VectorXd y(2 * vehicles());
    y << x.row(j).transpose(), v.row(j).transpose();
    return y;
  }

  /// Headway of `slot` at sample j.
  double gap(int j, int slot, const LeaderTrajectory& leader, double vehicle_length) const {
    const double ahead = slot == 0 ? leader.x[j] : x(j, slot - 1);
    return ahead - x(j, slot) - vehicle_length;
  }

  bool operator==(const StateTrajectory& o) const { return step == o.step && x == o.x && v == o.v; }
};

/// Third-order explicit Runge-Kutta tableau (Bogacki-Shampine stage layout).
struct Rk3 {
  static constexpr std::array<double, 3> c{0.0, 0.5, 0.75};
  static constexpr std::array<double, 3> b{2.0 / 9.0, 3.0 / 9.0, 4.0 / 9.0};
  static constexpr double a21 = 0.5;
  static constexpr double a32 = 0.75;
};

namespace detail {

/// dy/dt for stacked y = [x; v]; u is indexed by slot (HV entries ignored).
inline void evaluate_rhs(const Eigen::VectorXd& y, const Eigen::VectorXd& u, double leader_x, double leader_v,
                         double t, const ModelParams& p, const PlatoonLayout& layout, Eigen::VectorXd& dy) {
  const int n = layout.size();
  dy.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    dy[i] = y[n + i];
    if (layout.is_av(i)) {
      dy[n + i] = u[i];
      continue;
    }
    const double x_lead = i == 0 ? leader_x : y[i - 1];
    const double v_lead = i == 0 ? leader_v : y[n + i - 1];
    const double h = x_lead - y[i] - p.vehicle_length;
    if (!(h > 0.0)) throw CollisionError(i + 1, t, h);
    dy[n + i] = bando_ftl_acc(y[i], x_lead, y[n + i], v_lead, p);
  }
}

/// Reusable buffers for one RK3 step: stage states Y_s and slopes k_s.
struct StepStages {
  std::array<Eigen::VectorXd, 3> y;
  std::array<Eigen::VectorXd, 3> k;
  std::array<double, 3> leader_x{};
  std::array<double, 3> leader_v{};
  std::array<double, 3> t{};
};

inline void compute_stages(const PlatoonSystem& sys, int j, const Eigen::VectorXd& yj, const Eigen::VectorXd& u,
                           StepStages& st) {
  const double h = sys.grid.state_step;
  for (int s = 0; s < 3; ++s) {
    st.leader_x[s] = sys.leader.position(j, Rk3::c[s]);
    st.leader_v[s] = sys.leader.velocity(j, Rk3::c[s]);
    st.t[s] = (j + Rk3::c[s]) * h;
  }
  st.y[0] = yj;
  evaluate_rhs(st.y[0], u, st.leader_x[0], st.leader_v[0], st.t[0], sys.model, sys.layout, st.k[0]);
  st.y[1] = yj + (h * Rk3::a21) * st.k[0];
  evaluate_rhs(st.y[1], u, st.leader_x[1], st.leader_v[1], st.t[1], sys.model, sys.layout, st.k[1]);
  st.y[2] = yj + (h * Rk3::a32) * st.k[1];
  evaluate_rhs(st.y[2], u, st.leader_x[2], st.leader_v[2], st.t[2], sys.model, sys.layout, st.k[2]);
}

/// Slot-indexed control vectors, one per control interval.
inline std::vector<Eigen::VectorXd> slot_controls(const ControlSchedule& c, const PlatoonLayout& layout) {
  if (c.n_av() != layout.n_av())
    throw ValidationError("control schedule has " + std::to_string(c.n_av()) + " columns for " +
                          std::to_string(layout.n_av()) + " AVs");
  std::vector<Eigen::VectorXd> out(c.intervals(), Eigen::VectorXd::Zero(layout.size()));
  for (int k = 0; k < c.intervals(); ++k)
    for (int slot : layout.av_slots()) out[k][slot] = c.omega(k, layout.control_column(slot));
  return out;
}

}  // namespace detail

/// Right-hand side of the platoon ODE at time t, leader taken from its samples.
inline Eigen::VectorXd rhs(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& u, const PlatoonLayout& layout,
                           const ModelParams& params, const LeaderTrajectory& leader) {
  if (y.size() != 2 * layout.size() || u.size() != layout.size())
    throw ValidationError("rhs: state/control size does not match the layout");
  Eigen::VectorXd dy;
  detail::evaluate_rhs(y, u, leader.position_at(t), leader.velocity_at(t), t, params, layout, dy);
  return dy;
}

/// Fixed-step RK3 integration over the state grid. Controls are constant on
/// every step because the state grid refines the control grid.
inline StateTrajectory simulate_forward(const PlatoonSystem& sys, const ControlSchedule& c) {
  sys.validate();
  const std::vector<int> interval = step_intervals(c, sys.grid);
  const std::vector<Eigen::VectorXd> controls = detail::slot_controls(c, sys.layout);
  const int n = sys.size();
  const int steps = sys.grid.steps();
  const double h = sys.grid.state_step;

  StateTrajectory out;
  out.step = h;
  out.x.resize(steps + 1, n);
  out.v.resize(steps + 1, n);

  Eigen::VectorXd y(2 * n);
  y << sys.init.x0, sys.init.v0;
  out.x.row(0) = sys.init.x0.transpose();
  out.v.row(0) = sys.init.v0.transpose();

  detail::StepStages st;
  for (int j = 0; j < steps; ++j) {
    detail::compute_stages(sys, j, y, controls[interval[j]], st);
    y += h * (Rk3::b[0] * st.k[0] + Rk3::b[1] * st.k[1] + Rk3::b[2] * st.k[2]);
    out.x.row(j + 1) = y.head(n).transpose();
    out.v.row(j + 1) = y.tail(n).transpose();
  }
  for (int i : sys.layout.hv_slots()) {
    const double g = out.gap(steps, i, sys.leader, sys.model.vehicle_length);
    if (!(g > 0.0)) throw CollisionError(i + 1, sys.grid.horizon, g);
  }
  return out;
}

/// Accelerations seen on each state step. AV values are the step's control
/// at both ends; HV values are the car-following law at the grid nodes.
struct AccelerationProfile {
  Eigen::MatrixXd step_start;  // steps x vehicles, value at t_j+
  Eigen::MatrixXd step_end;    // steps x vehicles, value at t_{j+1}-

  int steps() const { return static_cast<int>(step_start.rows()); }

  /// Right-continuous node values (the last node repeats the final step's end).
  Eigen::MatrixXd samples() const {
    Eigen::MatrixXd out(steps() + 1, step_start.cols());
    out.topRows(steps()) = step_start;
    out.row(steps()) = step_end.row(steps() - 1);
    return out;
  }
};

inline AccelerationProfile accelerations(const StateTrajectory& states, const PlatoonSystem& sys,
                                         const ControlSchedule& c) {
  const std::vector<int> interval = step_intervals(c, sys.grid);
  const int n = sys.size();
  const int steps = states.steps();
  Eigen::MatrixXd hv_node = Eigen::MatrixXd::Zero(steps + 1, n);
  for (int j = 0; j <= steps; ++j)
    for (int i : sys.layout.hv_slots()) {
      const double x_lead = i == 0 ? sys.leader.x[j] : states.x(j, i - 1);
      const double v_lead = i == 0 ? sys.leader.v[j] : states.v(j, i - 1);
      hv_node(j, i) = bando_ftl_acc(states.x(j, i), x_lead, states.v(j, i), v_lead, sys.model);
    }
  AccelerationProfile a;
  a.step_start = hv_node.topRows(steps);
  a.step_end = hv_node.bottomRows(steps);
  for (int j = 0; j < steps; ++j)
    for (int slot : sys.layout.av_slots()) {
      const double u = c.omega(interval[j], sys.layout.control_column(slot));
      a.step_start(j, slot) = u;
      a.step_end(j, slot) = u;
    }
  return a;
}

/// Headways on the state grid (samples x vehicles).
inline Eigen::MatrixXd headways(const StateTrajectory& states, const LeaderTrajectory& leader, double vehicle_length) {
  Eigen::MatrixXd g(states.samples(), states.vehicles());
  for (int j = 0; j < states.samples(); ++j)
    for (int i = 0; i < states.vehicles(); ++i) g(j, i) = states.gap(j, i, leader, vehicle_length);
  return g;
}

}  // namespace platoon
