#include "flowvo/triangulation.hpp"

#include <cmath>

namespace flowvo {

std::optional<TriangulatedPoint> triangulate(const Intrinsics& K, const Pose& T1,
                                             const Eigen::Vector2d& pixel0,
                                             const Eigen::Vector2d& pixel1) {
  // Both rays expressed in frame 0. Keeping d0 at unit z makes the ray
  // parameter equal to the frame-0 depth.
  const Eigen::Vector3d d0 = K.unproject(pixel0);
  const Eigen::Vector3d d1 = T1.R.transpose() * K.unproject(pixel1);
  const Eigen::Vector3d c1 = -(T1.R.transpose() * T1.t);  // frame-1 center in frame 0

  const double angle =
      std::atan2(d0.normalized().cross(d1.normalized()).norm(), d0.normalized().dot(d1.normalized()));
  if (angle < kTriangulationMinAngle) return std::nullopt;

  // Closest point between the lines p = s*d0 and p = c1 + u*d1.
  const double a = d0.dot(d0);
  const double b = d0.dot(d1);
  const double c = d1.dot(d1);
  const double d = d0.dot(c1);
  const double e = d1.dot(c1);
  const double denom = a * c - b * b;
  if (denom <= 0.0) return std::nullopt;
  const double s = (c * d - b * e) / denom;
  return TriangulatedPoint{s, angle};
}

}  // namespace flowvo
