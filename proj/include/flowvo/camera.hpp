#pragma once

#include <optional>

#include <Eigen/Core>

#include "flowvo/se3.hpp"

namespace flowvo {

// Pinhole intrinsics; inputs are assumed rectified.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  Eigen::Vector3d unproject(const Eigen::Vector2d& px) const {
    return {(px.x() - cx) / fx, (px.y() - cy) / fy, 1.0};
  }
  Eigen::Vector2d project_point(const Eigen::Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return K;
  }
};

struct Projection {
  Eigen::Vector2d pixel;
  double depth;  // z after the motion; positive for visible points
};

// Back-projects `pixel` to 3D at `depth`, applies `motion` (a composed pose
// chain), reprojects. Empty when the transformed point has z <= 0.
inline std::optional<Projection> project(const Intrinsics& K, const Pose& motion,
                                         const Eigen::Vector2d& pixel, double depth) {
  const Eigen::Vector3d p = motion.apply(depth * K.unproject(pixel));
  if (!(p.z() > 0.0)) return std::nullopt;
  return Projection{K.project_point(p), p.z()};
}

// Flow induced by camera motion alone between two chained poses.
inline std::optional<Eigen::Vector2d> rigid_flow(const Intrinsics& K, const Pose& chain_prev,
                                                 const Pose& chain_cur,
                                                 const Eigen::Vector2d& pixel, double depth) {
  const auto a = project(K, chain_prev, pixel, depth);
  const auto b = project(K, chain_cur, pixel, depth);
  if (!a || !b) return std::nullopt;
  return b->pixel - a->pixel;
}

}  // namespace flowvo
