#pragma once

#include <optional>

#include <Eigen/Core>

#include "flowvo/camera.hpp"
#include "flowvo/se3.hpp"

namespace flowvo {

struct TriangulatedPoint {
  double depth;      // along the frame-0 ray, frame-0 units
  double ray_angle;  // conditioning: angle between the two rays, radians
};

inline constexpr double kTriangulationMinAngle = 1e-8;

// Midpoint two-view triangulation. `pixel1` is the frame-1 observation
// (pixel0 + observed flow); `T1` maps frame-0 coordinates into frame 1.
// Empty when the rays are parallel within kTriangulationMinAngle.
std::optional<TriangulatedPoint> triangulate(const Intrinsics& K, const Pose& T1,
                                             const Eigen::Vector2d& pixel0,
                                             const Eigen::Vector2d& pixel1);

}  // namespace flowvo
