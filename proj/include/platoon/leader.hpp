#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "platoon/error.hpp"
#include "platoon/interp.hpp"

namespace platoon {

/// Lead-vehicle samples on a uniform grid t_j = j * step.
struct LeaderTrajectory {
  double step = 0.1;
  Eigen::VectorXd x;  // m
  Eigen::VectorXd v;  // m/s
  Eigen::VectorXd a;  // m/s^2

  int samples() const { return static_cast<int>(x.size()); }
  double horizon() const { return step * (samples() - 1); }

  /// Non-negative speed and trapezoidal consistency (metres per step) between x and v.
  void validate(double consistency_tol = 1e-3) const {
    if (x.size() < 2 || v.size() != x.size() || a.size() != x.size())
      throw ValidationError("leader: x, v, a must have equal length >= 2");
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (v[j] < 0.0)
        throw ValidationError("leader: negative velocity " + std::to_string(v[j]) + " at sample " +
                              std::to_string(j));
    for (Eigen::Index j = 0; j + 1 < x.size(); ++j) {
      const double drift = x[j + 1] - x[j] - 0.5 * step * (v[j] + v[j + 1]);
      if (std::abs(drift) > consistency_tol)
        throw ValidationError("leader: position and velocity samples inconsistent at sample " +
                              std::to_string(j));
    }
  }

  /// Cell index and local coordinate for time t.
  std::pair<int, double> locate(double t) const {
    const double r = t / step;
    int j = static_cast<int>(std::floor(r));
    const int last = samples() - 2;
    if (j < 0 || j > last + 1 || t > horizon() * (1 + 1e-12) + 1e-12)
      throw GridError("leader trajectory does not cover t = " + std::to_string(t));
    j = std::min(j, last);
    return {j, r - j};
  }

  double position(int j, double s) const { return hermite(x[j], x[j + 1], v[j], v[j + 1], step, s); }
  double velocity(int j, double s) const { return hermite(v[j], v[j + 1], a[j], a[j + 1], step, s); }
  double position_at(double t) const {
    const auto [j, s] = locate(t);
    return position(j, s);
  }
  double velocity_at(double t) const {
    const auto [j, s] = locate(t);
    return velocity(j, s);
  }
};

}  // namespace platoon
