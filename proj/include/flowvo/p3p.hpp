#pragma once

#include <array>

#include <Eigen/Core>

#include "flowvo/camera.hpp"
#include "flowvo/se3.hpp"

namespace flowvo {

enum class P3PStatus { kOk, kCollinear, kNoRealSolution };

struct P3PSolutions {
  P3PStatus status = P3PStatus::kNoRealSolution;
  int count = 0;
  std::array<Pose, 4> poses;
};

inline constexpr double kP3PCollinearArea = 1e-12;
inline constexpr double kP3PReprojTol = 1e-6;  // px

// Minimal absolute pose from three 3D-2D correspondences. Returns every pose
// (up to four) that reprojects the three points onto the three pixels within
// kP3PReprojTol. Disambiguation is the caller's job.
P3PSolutions solve_p3p(const std::array<Eigen::Vector3d, 3>& points,
                       const std::array<Eigen::Vector2d, 3>& pixels, const Intrinsics& K);

// Core solver on unit bearing vectors; poses map world points into the camera
// frame (Q_i ~ s_i * bearing_i = R * P_i + t).
P3PSolutions solve_p3p_bearings(const std::array<Eigen::Vector3d, 3>& points,
                                const std::array<Eigen::Vector3d, 3>& bearings);

// Real roots of c[4] x^4 + c[3] x^3 + c[2] x^2 + c[1] x + c[0], ascending
// coefficient order, Newton-polished. Returns the number of roots written.
int solve_quartic(const std::array<double, 5>& coeffs, std::array<double, 4>& roots);

}  // namespace flowvo
