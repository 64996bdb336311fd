#pragma once

// Bando follow-the-leader car-following law and its closed-form bounds.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "platoon/error.hpp"

namespace platoon {

struct ModelParams {
  double alpha = 0.1;            // 1/s
  double beta = 525.0;           // m^2/s
  double vehicle_length = 4.5;   // m
  double v_max = 30.0;           // m/s
  double d_s = 20.0;             // m, centre of the optimal-velocity transition

  void validate() const {
    auto positive = [](double value, const char* name) {
      if (!(value > 0.0) || !std::isfinite(value))
        throw ValidationError(std::string("model.") + name + " must be positive and finite");
    };
    positive(alpha, "alpha");
    positive(beta, "beta");
    positive(vehicle_length, "vehicle_length");
    positive(v_max, "v_max");
    positive(d_s, "d_s");
  }
};

namespace detail {
inline void require_positive_headway(double h) {
  if (!(h > 0.0)) throw DomainError("non-positive headway " + std::to_string(h) + " m (collision state)");
}

/// tanh(z) and sech^2(z) from a single exp(-2|z|); absolute error ~1e-16.
struct TanhSech2 {
  double tanh;
  double sech2;
};
inline TanhSech2 tanh_sech2(double z) {
  const double e = std::exp(-2.0 * std::abs(z));
  const double t = (1.0 - e) / (1.0 + e);
  return {std::copysign(t, z), 4.0 * e / ((1.0 + e) * (1.0 + e))};
}
}  // namespace detail

/// V(h) = v_max (tanh(h - d_s) + tanh(l + d_s)) / (1 + tanh(l + d_s)).
inline double optimal_velocity(double h, const ModelParams& p) {
  detail::require_positive_headway(h);
  const double offset = detail::tanh_sech2(p.vehicle_length + p.d_s).tanh;
  return p.v_max * (detail::tanh_sech2(h - p.d_s).tanh + offset) / (1.0 + offset);
}

inline double optimal_velocity_deriv(double h, const ModelParams& p) {
  detail::require_positive_headway(h);
  const double offset = detail::tanh_sech2(p.vehicle_length + p.d_s).tanh;
  return p.v_max * detail::tanh_sech2(h - p.d_s).sech2 / (1.0 + offset);
}

/// Acceleration of a human driver at `x` following a vehicle at `x_lead`.
inline double bando_ftl_acc(double x, double x_lead, double v, double v_lead, const ModelParams& p) {
  const double h = x_lead - x - p.vehicle_length;
  detail::require_positive_headway(h);
  return p.alpha * (optimal_velocity(h, p) - v) + p.beta * (v_lead - v) / (h * h);
}

struct BandoPartials {
  double d_x = 0.0;
  double d_xlead = 0.0;
  double d_v = 0.0;
  double d_vlead = 0.0;
};

inline BandoPartials bando_ftl_partials(double x, double x_lead, double v, double v_lead,
                                        const ModelParams& p) {
  const double h = x_lead - x - p.vehicle_length;
  detail::require_positive_headway(h);
  const double inv_h2 = 1.0 / (h * h);
  BandoPartials out;
  out.d_x = -p.alpha * optimal_velocity_deriv(h, p) + 2.0 * p.beta * (v_lead - v) * inv_h2 / h;
  out.d_xlead = -out.d_x;
  out.d_v = -p.alpha - p.beta * inv_h2;
  out.d_vlead = p.beta * inv_h2;
  return out;
}

/// Headway, velocity and acceleration envelopes of a single human driver
/// behind an arbitrary admissible leader over [0, T].
struct WellPosednessBounds {
  double A = 0.0;
  double d_min = 0.0;
  double B = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double v_sup = 0.0;  // sup of the optimal-velocity function
  double v0 = 0.0;

  double velocity_lower(double t) const { return v0 * std::exp(-B * t); }
  double velocity_upper(double v_lead) const {
    return std::max(v0, v_sup + beta / alpha * v_lead / (d_min * d_min));
  }
  double acc_lower(double v_lead) const { return -B * velocity_upper(v_lead); }
  double acc_upper(double t, double v_lead) const {
    return alpha * v_sup - alpha * v0 * std::exp(-B * t) + beta * v_lead / (d_min * d_min);
  }
};

inline WellPosednessBounds theorem_bounds(const ModelParams& p, double horizon, double initial_gap,
                                          double v0_follower) {
  if (!(initial_gap > 0.0)) throw DomainError("theorem_bounds: initial gap must be positive");
  if (!(horizon > 0.0)) throw DomainError("theorem_bounds: horizon must be positive");
  WellPosednessBounds b;
  b.alpha = p.alpha;
  b.beta = p.beta;
  b.v_sup = p.v_max;
  b.v0 = v0_follower;
  b.A = -v0_follower - p.alpha * horizon * p.v_max + p.alpha * initial_gap - p.beta / initial_gap;
  // (A + sqrt(A^2 + 4ab)) / (2a) cancels catastrophically for A << 0; use the
  // conjugate form 2b / (sqrt(A^2 + 4ab) - A) there.
  const double root = std::sqrt(b.A * b.A + 4.0 * p.alpha * p.beta);
  b.d_min = b.A >= 0.0 ? (b.A + root) / (2.0 * p.alpha) : 2.0 * p.beta / (root - b.A);
  b.B = (p.alpha * b.d_min * b.d_min + p.beta) / (b.d_min * b.d_min);
  return b;
}

/// Uniform braking level that stops every listed AV no closer than `d_safe`
/// to a leader frozen at its initial position: -max v^2 / (2 (gap - d_safe)).
inline double safe_min_deceleration(std::span<const double> initial_gaps,
                                    std::span<const double> initial_speeds, double d_safe) {
  if (initial_gaps.size() != initial_speeds.size())
    throw ValidationError("safe_min_deceleration: gap and speed lists differ in length");
  double worst = 0.0;
  for (std::size_t k = 0; k < initial_gaps.size(); ++k) {
    const double room = initial_gaps[k] - d_safe;
    if (!(room > 0.0))
      throw ValidationError("infeasible initial condition: AV " + std::to_string(k) +
                            " starts within the safety distance");
    if (initial_speeds[k] < 0.0) throw ValidationError("safe_min_deceleration: negative speed");
    worst = std::max(worst, initial_speeds[k] * initial_speeds[k] / (2.0 * room));
  }
  return -worst;
}

}  // namespace platoon
