#pragma once

// State/control time grids, platoon layout and piecewise-constant controls.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "platoon/error.hpp"

namespace platoon {

namespace detail {
/// Returns n when value == n * unit up to relative round-off, else -1.
inline long exact_multiple(double value, double unit) {
  const double ratio = value / unit;
  const double rounded = std::round(ratio);
  if (rounded < 0.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, rounded)) return -1;
  return static_cast<long>(rounded);
}
}  // namespace detail

/// Uniform state grid S with spacing `state_step` refining a uniform control
/// grid with spacing `control_step` on [0, horizon].
struct TimeGrid {
  double horizon = 600.0;
  double state_step = 0.1;
  double control_step = 5.0;

  void validate() const {
    if (!(horizon > 0.0) || !(state_step > 0.0) || !(control_step > 0.0))
      throw ValidationError("grid: horizon, state_step and control_step must be positive");
    if (detail::exact_multiple(control_step, state_step) < 1)
      throw ValidationError("grid: control_step must be a positive integer multiple of state_step");
    if (detail::exact_multiple(horizon, control_step) < 1)
      throw ValidationError("grid: horizon must be a positive integer multiple of control_step");
  }

  int steps() const { return static_cast<int>(detail::exact_multiple(horizon, state_step)); }
  int intervals() const { return static_cast<int>(detail::exact_multiple(horizon, control_step)); }
  int steps_per_interval() const {
    return static_cast<int>(detail::exact_multiple(control_step, state_step));
  }
  double time(int j) const { return j * state_step; }

  /// Control breakpoints tau_0 = 0 < ... < tau_p = horizon.
  std::vector<double> control_breakpoints() const {
    std::vector<double> tau(intervals() + 1);
    for (std::size_t k = 0; k < tau.size(); ++k) tau[k] = static_cast<double>(k) * control_step;
    tau.back() = horizon;
    return tau;
  }
};

/// Which platoon slots are autonomous. Slot 0 is the vehicle directly behind
/// the leader (vehicle 1 in platoon numbering).
class PlatoonLayout {
 public:
  PlatoonLayout() = default;
  PlatoonLayout(int n_vehicles, std::vector<int> av_slots) : is_av_(n_vehicles, false) {
    if (n_vehicles < 1) throw ValidationError("layout: need at least one vehicle");
    std::sort(av_slots.begin(), av_slots.end());
    for (std::size_t k = 0; k < av_slots.size(); ++k) {
      const int slot = av_slots[k];
      if (slot < 0 || slot >= n_vehicles)
        throw ValidationError("layout: AV slot " + std::to_string(slot) + " out of range");
      if (k > 0 && av_slots[k - 1] == slot)
        throw ValidationError("layout: duplicate AV slot " + std::to_string(slot));
      is_av_[slot] = true;
    }
    rebuild();
  }

  /// Builds a layout from 1-based vehicle numbers.
  static PlatoonLayout from_vehicle_numbers(int n_vehicles, const std::vector<int>& numbers) {
    std::vector<int> slots;
    slots.reserve(numbers.size());
    for (int n : numbers) slots.push_back(n - 1);
    return PlatoonLayout(n_vehicles, std::move(slots));
  }

  int size() const { return static_cast<int>(is_av_.size()); }
  int n_av() const { return static_cast<int>(av_slots_.size()); }
  int n_hv() const { return size() - n_av(); }
  bool is_av(int slot) const { return is_av_[slot]; }
  const std::vector<int>& av_slots() const { return av_slots_; }
  const std::vector<int>& hv_slots() const { return hv_slots_; }
  /// Column of `slot` in a control matrix, or -1 for human drivers.
  int control_column(int slot) const { return column_[slot]; }

  bool operator==(const PlatoonLayout&) const = default;

 private:
  void rebuild() {
    av_slots_.clear();
    hv_slots_.clear();
    column_.assign(is_av_.size(), -1);
    for (int i = 0; i < size(); ++i) {
      if (is_av_[i]) {
        column_[i] = static_cast<int>(av_slots_.size());
        av_slots_.push_back(i);
      } else {
        hv_slots_.push_back(i);
      }
    }
  }

  std::vector<bool> is_av_;
  std::vector<int> av_slots_;
  std::vector<int> hv_slots_;
  std::vector<int> column_;
};

struct InitialState {
  Eigen::VectorXd x0;  // m, decreasing from slot 0 backwards
  Eigen::VectorXd v0;  // m/s
};

/// Piecewise-constant AV accelerations: row k holds the value on
/// [tau_k, tau_{k+1}), column c the AV with control_column c.
struct ControlSchedule {
  std::vector<double> tau;
  Eigen::MatrixXd omega;

  static ControlSchedule zeros(const TimeGrid& grid, int n_av) {
    ControlSchedule c;
    c.tau = grid.control_breakpoints();
    c.omega = Eigen::MatrixXd::Zero(grid.intervals(), n_av);
    return c;
  }
  static ControlSchedule constant(const TimeGrid& grid, int n_av, double value) {
    ControlSchedule c = zeros(grid, n_av);
    c.omega.setConstant(value);
    return c;
  }

  int intervals() const { return static_cast<int>(omega.rows()); }
  int n_av() const { return static_cast<int>(omega.cols()); }
  double horizon() const { return tau.back(); }

  void validate() const {
    if (tau.size() < 2 || static_cast<Eigen::Index>(tau.size()) != omega.rows() + 1)
      throw ValidationError("control schedule: need p + 1 breakpoints for p intervals");
    if (tau.front() != 0.0) throw ValidationError("control schedule: tau_0 must be 0");
    for (std::size_t k = 1; k < tau.size(); ++k)
      if (!(tau[k] > tau[k - 1])) throw ValidationError("control schedule: breakpoints must increase");
  }

  /// Interval index k such that t lies in [tau_k, tau_{k+1}); t = T maps to the last one.
  int interval_at(double t) const {
    if (t < tau.front() || t > tau.back())
      throw std::out_of_range("control schedule: t = " + std::to_string(t) + " outside [0, T]");
    const auto it = std::upper_bound(tau.begin(), tau.end(), t);
    const int k = static_cast<int>(it - tau.begin()) - 1;
    return std::min(k, intervals() - 1);
  }

  bool operator==(const ControlSchedule& o) const { return tau == o.tau && omega == o.omega; }
};

/// Full per-vehicle control vector at time t (zeros at human-driven slots).
inline Eigen::VectorXd control_value_at(const ControlSchedule& c, double t, const PlatoonLayout& layout) {
  const int k = c.interval_at(t);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(layout.size());
  for (int slot : layout.av_slots()) u[slot] = c.omega(k, layout.control_column(slot));
  return u;
}

/// For each state step j, the control interval that contains [t_j, t_{j+1}).
/// Every breakpoint must be a state-grid node.
inline std::vector<int> step_intervals(const ControlSchedule& c, const TimeGrid& grid) {
  c.validate();
  const int steps = grid.steps();
  if (std::abs(c.horizon() - grid.horizon) > 1e-9 * grid.horizon)
    throw GridError("control schedule horizon differs from the state grid horizon");
  std::vector<int> out(steps);
  int j = 0;
  for (int k = 0; k < c.intervals(); ++k) {
    const long end = detail::exact_multiple(c.tau[k + 1], grid.state_step);
    if (end < 0) throw GridError("control breakpoint " + std::to_string(c.tau[k + 1]) + " is not a state-grid node");
    for (; j < end && j < steps; ++j) out[j] = k;
  }
  if (j != steps) throw GridError("control schedule does not cover the state grid");
  return out;
}

}  // namespace platoon
