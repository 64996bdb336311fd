#pragma once

// Running cost (squared accelerations), quadratic penalties for the AV
// headway/velocity constraints, trapezoidal objective, and the evaluation-only
// energy model.

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "platoon/dynamics.hpp"

namespace platoon {

enum class ObjectiveMode { full, greedy };
enum class TerminalCost { zero };
enum class PenaltyDirection { min, max };

inline std::string to_string(ObjectiveMode m) { return m == ObjectiveMode::full ? "full" : "greedy"; }

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::full;
  double mu = 10.0;        // penalty weight
  double d_safe = 5.0;     // m
  double d_max = 120.0;    // m
  bool velocity_penalty = true;
  TerminalCost terminal = TerminalCost::zero;

  void validate() const {
    if (!(mu >= 0.0)) throw ValidationError("objective.mu must be non-negative");
    if (!(d_safe > 0.0) || !(d_max > d_safe))
      throw ValidationError("objective: need 0 < d_safe < d_max");
  }
};

/// Optimal control problem instance: platoon dynamics plus objective.
struct Problem {
  PlatoonSystem system;
  ObjectiveConfig objective;
};

struct PenaltyValue {
  double value = 0.0;
  double slope = 0.0;  // d value / d gap
};

/// min: (min{gap - threshold, 0})^2; max: (min{threshold - gap, 0})^2.
inline PenaltyValue headway_penalty(double gap, double threshold, PenaltyDirection direction) {
  if (direction == PenaltyDirection::min) {
    const double m = std::min(gap - threshold, 0.0);
    return {m * m, 2.0 * m};
  }
  const double m = std::min(threshold - gap, 0.0);
  return {m * m, -2.0 * m};
}

inline PenaltyValue velocity_penalty(double v) {
  const double m = std::min(v, 0.0);
  return {m * m, 2.0 * m};
}

namespace detail {

/// Running cost at one node; accumulates L_y (size 2n) and L_u (slot-indexed,
/// size n) when the pointers are non-null.
inline double node_cost(const Eigen::VectorXd& y, const Eigen::VectorXd& u, double leader_x, double leader_v,
                        double t, const ModelParams& p, const PlatoonLayout& layout, const ObjectiveConfig& obj,
                        Eigen::VectorXd* L_y, Eigen::VectorXd* L_u) {
  const int n = layout.size();
  double cost = 0.0;
  if (L_y) L_y->setZero(2 * n);
  if (L_u) L_u->setZero(n);
  for (int i = 0; i < n; ++i) {
    const double x_lead = i == 0 ? leader_x : y[i - 1];
    const double v_lead = i == 0 ? leader_v : y[n + i - 1];
    if (layout.is_av(i)) {
      cost += u[i] * u[i];
      if (L_u) (*L_u)[i] = 2.0 * u[i];
      if (obj.mu == 0.0) continue;
      const double gap = x_lead - y[i] - p.vehicle_length;
      const PenaltyValue lo = headway_penalty(gap, obj.d_safe, PenaltyDirection::min);
      const PenaltyValue hi = headway_penalty(gap, obj.d_max, PenaltyDirection::max);
      const PenaltyValue vel = obj.velocity_penalty ? velocity_penalty(y[n + i]) : PenaltyValue{};
      cost += obj.mu * (lo.value + hi.value + vel.value);
      if (L_y) {
        const double dgap = obj.mu * (lo.slope + hi.slope);
        (*L_y)[i] -= dgap;
        if (i > 0) (*L_y)[i - 1] += dgap;
        (*L_y)[n + i] += obj.mu * vel.slope;
      }
    } else if (obj.mode == ObjectiveMode::full) {
      const double h = x_lead - y[i] - p.vehicle_length;
      if (!(h > 0.0)) throw CollisionError(i + 1, t, h);
      const double acc = bando_ftl_acc(y[i], x_lead, y[n + i], v_lead, p);
      cost += acc * acc;
      if (L_y) {
        const BandoPartials d = bando_ftl_partials(y[i], x_lead, y[n + i], v_lead, p);
        (*L_y)[i] += 2.0 * acc * d.d_x;
        (*L_y)[n + i] += 2.0 * acc * d.d_v;
        if (i > 0) {
          (*L_y)[i - 1] += 2.0 * acc * d.d_xlead;
          (*L_y)[n + i - 1] += 2.0 * acc * d.d_vlead;
        }
      }
    }
  }
  return cost;
}

inline Eigen::VectorXd slot_control(const Eigen::VectorXd& av_u, const PlatoonLayout& layout) {
  if (av_u.size() != layout.n_av()) throw ValidationError("control vector length must equal the AV count");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(layout.size());
  for (int slot : layout.av_slots()) u[slot] = av_u[layout.control_column(slot)];
  return u;
}

}  // namespace detail

/// Running cost L(t, y, u). `av_u` holds one entry per AV (control-column order).
inline double running_cost(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& av_u, const Problem& prob) {
  const auto& sys = prob.system;
  return detail::node_cost(y, detail::slot_control(av_u, sys.layout), sys.leader.position_at(t),
                           sys.leader.velocity_at(t), t, sys.model, sys.layout, prob.objective, nullptr, nullptr);
}

struct CostPartials {
  Eigen::VectorXd L_y;  // 2n
  Eigen::VectorXd L_u;  // one per AV
};

inline CostPartials running_cost_partials(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& av_u,
                                          const Problem& prob) {
  const auto& sys = prob.system;
  CostPartials out;
  Eigen::VectorXd L_u_slot;
  detail::node_cost(y, detail::slot_control(av_u, sys.layout), sys.leader.position_at(t), sys.leader.velocity_at(t),
                    t, sys.model, sys.layout, prob.objective, &out.L_y, &L_u_slot);
  out.L_u.resize(sys.layout.n_av());
  for (int slot : sys.layout.av_slots()) out.L_u[sys.layout.control_column(slot)] = L_u_slot[slot];
  return out;
}

/// Trapezoidal quadrature of the running cost over the state grid. Each step
/// uses its own control at both ends, so control jumps never leak across tau_k.
/// The control enters only through sum u_i^2, so the state-dependent part is
/// evaluated once per node.
inline double total_objective(const StateTrajectory& states, const ControlSchedule& c, const Problem& prob) {
  const auto& sys = prob.system;
  if (states.samples() != sys.grid.steps() + 1) throw GridError("trajectory is not on the problem's state grid");
  const std::vector<int> interval = step_intervals(c, sys.grid);
  if (c.n_av() != sys.layout.n_av()) throw ValidationError("control schedule does not match the AV count");
  const double h = sys.grid.state_step;
  const Eigen::VectorXd no_control = Eigen::VectorXd::Zero(sys.size());
  Eigen::VectorXd node(states.samples());
  for (int j = 0; j < states.samples(); ++j)
    node[j] = detail::node_cost(states.state(j), no_control, sys.leader.x[j], sys.leader.v[j], j * h, sys.model,
                                sys.layout, prob.objective, nullptr, nullptr);
  double total = 0.0;
  for (int j = 0; j < states.steps(); ++j) total += 0.5 * h * (node[j] + node[j + 1]) + h * c.omega.row(interval[j]).squaredNorm();
  return total;  // terminal cost is zero
}

/// Coefficients of the integrated instantaneous energy model
/// E(v, u) = C0 + C1 v + C2 v^2 + C3 v^3 + p0 u + p1 u v + p2 u v^2
///         + q0 max(u, 0)^2 + q1 max(u, 0)^2 v.
/// Defaults are placeholders, not a calibrated vehicle.
struct EnergyParams {
  double C0 = 0.2;
  double C1 = 0.005;
  double C2 = 0.0;
  double C3 = 2.0e-6;
  double p0 = 0.05;
  double p1 = 0.01;
  double p2 = 0.0;
  double q0 = 0.05;
  double q1 = 0.005;

  static EnergyParams zero() { return {0, 0, 0, 0, 0, 0, 0, 0, 0}; }
};

/// Per-vehicle energy over the horizon. Terms in u that integrate exactly
/// (u = dv/dt) use boundary values; the rest are trapezoidal.
inline Eigen::VectorXd energy_metric(const StateTrajectory& states, const AccelerationProfile& acc,
                                     const EnergyParams& ep) {
  const int n = states.vehicles();
  const int r = states.steps();
  const double h = states.step;
  const double horizon = r * h;
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = states.v(0, i);
    const double vT = states.v(r, i);
    double e = ep.C0 * horizon + ep.C1 * (states.x(r, i) - states.x(0, i)) + ep.p0 * (vT - v0) +
               ep.p1 / 2.0 * (vT * vT - v0 * v0) + ep.p2 / 3.0 * (vT * vT * vT - v0 * v0 * v0);
    double quad = 0.0;
    for (int j = 0; j < r; ++j) {
      const double va = states.v(j, i);
      const double vb = states.v(j + 1, i);
      const double ua = std::max(acc.step_start(j, i), 0.0);
      const double ub = std::max(acc.step_end(j, i), 0.0);
      const double fa = ep.C2 * va * va + ep.C3 * va * va * va + (ep.q0 + ep.q1 * va) * ua * ua;
      const double fb = ep.C2 * vb * vb + ep.C3 * vb * vb * vb + (ep.q0 + ep.q1 * vb) * ub * ub;
      quad += 0.5 * h * (fa + fb);
    }
    out[i] = e + quad;
  }
  return out;
}

/// Platoon performance summary.
struct Metrics {
  Eigen::VectorXd sq_acceleration;  // per vehicle: integral of a^2
  Eigen::VectorXd fuel;             // per vehicle
  double total_sq_acceleration = 0.0;
  double total_fuel = 0.0;
  double av_sq_acceleration = 0.0;
};

inline Eigen::VectorXd squared_acceleration(const AccelerationProfile& acc, double step) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(acc.step_start.cols());
  for (int j = 0; j < acc.steps(); ++j)
    out += 0.5 * step * (acc.step_start.row(j).array().square() + acc.step_end.row(j).array().square()).matrix().transpose();
  return out;
}

inline Metrics compute_metrics(const StateTrajectory& states, const PlatoonSystem& sys, const ControlSchedule& c,
                               const EnergyParams& ep) {
  const AccelerationProfile acc = accelerations(states, sys, c);
  Metrics m;
  m.sq_acceleration = squared_acceleration(acc, states.step);
  m.fuel = energy_metric(states, acc, ep);
  m.total_sq_acceleration = m.sq_acceleration.sum();
  m.total_fuel = m.fuel.sum();
  for (int slot : sys.layout.av_slots()) m.av_sq_acceleration += m.sq_acceleration[slot];
  return m;
}

/// 100 (baseline - value) / baseline; empty when the baseline is zero.
inline std::optional<double> percent_reduction(double baseline, double value) {
  if (baseline == 0.0) return std::nullopt;
  return 100.0 * (baseline - value) / baseline;
}

/// 100 (greedy - full) / greedy; empty when the greedy value is zero.
inline std::optional<double> greedy_relative_difference(double greedy, double full) {
  if (greedy == 0.0) return std::nullopt;
  return 100.0 * (greedy - full) / greedy;
}

}  // namespace platoon
