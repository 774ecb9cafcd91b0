#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace hypobridge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

constexpr double kPi = 3.14159265358979323846;

/// Wrap a scalar into [0, period).
inline double wrap_periodic(double x, double period) {
  double y = x - period * std::floor(x / period);
  if (y >= period) y -= period;  // guard against floor roundoff
  return y;
}

/// Signed distance a-b on a circle of the given period, in (-period/2, period/2].
inline double wrapped_diff(double a, double b, double period) {
  double d = wrap_periodic(a - b, period);
  if (d > 0.5 * period) d -= period;
  return d;
}

}  // namespace hypobridge
