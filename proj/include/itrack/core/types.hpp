#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace itrack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

struct Pose2d {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, (-pi, pi]

  bool operator==(const Pose2d&) const = default;
};

/// BEV oriented box with vertical extent carried along unchanged.
/// Units: meters, m/s, radians.
struct OrientedBox {
  double x = 0.0, y = 0.0, z = 0.0;
  double h = 1.0, l = 1.0, w = 1.0;
  double vx = 0.0, vy = 0.0;
  double theta = 0.0;

  bool operator==(const OrientedBox&) const = default;
};

struct EgoState {
  Pose2d pose;
  double vx = 0.0;
  double vy = 0.0;

  bool operator==(const EgoState&) const = default;
};

/// Binary BEV raster; true = occluded. Row-major, origin at the grid's
/// lower-left corner, cell (0,0) adjacent to the origin.
struct OcclusionGrid {
  Pose2d origin;
  double cell_size = 1.0;
  int width = 0;
  int height = 0;
  std::vector<uint8_t> mask;  // width*height, row-major

  bool well_formed() const {
    return cell_size > 0.0 && width >= 0 && height >= 0 &&
           mask.size() == static_cast<size_t>(width) * height;
  }

  /// Cell index for a point, or (-1,-1) when outside the extent.
  std::pair<int, int> cell_of(double px, double py) const {
    const double c = std::cos(-origin.heading), s = std::sin(-origin.heading);
    const double dx = px - origin.x, dy = py - origin.y;
    const double lx = c * dx - s * dy;
    const double ly = s * dx + c * dy;
    const int ix = static_cast<int>(std::floor(lx / cell_size));
    const int iy = static_cast<int>(std::floor(ly / cell_size));
    if (ix < 0 || iy < 0 || ix >= width || iy >= height) return {-1, -1};
    return {ix, iy};
  }

  bool at(int ix, int iy) const {
    return mask[static_cast<size_t>(iy) * width + ix] != 0;
  }

  bool operator==(const OcclusionGrid&) const = default;
};

using BoxList = std::vector<OrientedBox>;
using FeatureList = std::vector<Vec>;

/// 2D rigid transform of a point into the ego frame: R(-theta)*(p - pos).
inline Eigen::Vector2d to_ego_frame(double px, double py, const Pose2d& ego) {
  const double c = std::cos(-ego.heading), s = std::sin(-ego.heading);
  const double dx = px - ego.x, dy = py - ego.y;
  return {c * dx - s * dy, s * dx + c * dy};
}

/// Inverse of to_ego_frame.
inline Eigen::Vector2d to_world_frame(double px, double py, const Pose2d& ego) {
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  return {ego.x + c * px - s * py, ego.y + s * px + c * py};
}

}  // namespace itrack
