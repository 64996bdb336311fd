#pragma once

#include <stdexcept>
#include <string>

namespace platoon {

/// Invalid configuration or input data (bad parameters, malformed files).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A car-following law evaluated outside its domain (non-positive headway).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two grids (state grid, control grid, leader samples) that do not line up.
class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A human-driven vehicle reached a non-positive headway during simulation.
/// `vehicle` uses platoon numbering (1 is directly behind the leader).
class CollisionError : public std::runtime_error {
 public:
  CollisionError(int vehicle, double time, double gap)
      : std::runtime_error("collision: vehicle " + std::to_string(vehicle) + " headway " +
                           std::to_string(gap) + " m at t = " + std::to_string(time) + " s"),
        vehicle_(vehicle),
        time_(time),
        gap_(gap) {}

  int vehicle() const noexcept { return vehicle_; }
  double time() const noexcept { return time_; }
  double gap() const noexcept { return gap_; }

 private:
  int vehicle_;
  double time_;
  double gap_;
};

}  // namespace platoon
