#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "platoon/error.hpp"

namespace platoon {

/// Cubic Hermite value on a cell of width h at local coordinate s in [0, 1].
inline double hermite(double y0, double y1, double d0, double d1, double h, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * d1;
}

/// Derivative (with respect to t) of the cubic Hermite interpolant.
inline double hermite_slope(double y0, double y1, double d0, double d1, double h, double s) {
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * y0 + (-6 * s2 + 6 * s) * y1) / h + (3 * s2 - 4 * s + 1) * d0 +
         (3 * s2 - 2 * s) * d1;
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolation of scattered samples.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> t, std::vector<double> y) : t_(std::move(t)), y_(std::move(y)) {
    const std::size_t n = t_.size();
    if (n < 2 || y_.size() != n) throw ValidationError("monotone cubic: need at least two samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(t_[i] > t_[i - 1])) throw ValidationError("monotone cubic: abscissae must increase");
    std::vector<double> secant(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) secant[i] = (y_[i + 1] - y_[i]) / (t_[i + 1] - t_[i]);
    d_.assign(n, 0.0);
    d_[0] = secant[0];
    d_[n - 1] = secant[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double a = secant[i - 1];
      const double b = secant[i];
      if (a * b <= 0.0) continue;
      const double h0 = t_[i] - t_[i - 1];
      const double h1 = t_[i + 1] - t_[i];
      const double w0 = 2 * h1 + h0;
      const double w1 = h1 + 2 * h0;
      d_[i] = (w0 + w1) / (w0 / a + w1 / b);
    }
    // endpoint slopes must not overshoot the adjacent secant
    auto clamp_end = [&](std::size_t i, double s) {
      if (d_[i] * s <= 0.0) d_[i] = 0.0;
      else if (std::abs(d_[i]) > 3 * std::abs(s)) d_[i] = 3 * s;
    };
    clamp_end(0, secant[0]);
    clamp_end(n - 1, secant[n - 2]);
  }

  double operator()(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t i = it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
    i = std::min(i, t_.size() - 2);
    const double h = t_[i + 1] - t_[i];
    return hermite(y_[i], y_[i + 1], d_[i], d_[i + 1], h, (t - t_[i]) / h);
  }

 private:
  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> d_;
};

}  // namespace platoon
