#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace flowvo {

// 6-vector twist: first three entries translational, last three rotational.
using Twist = Eigen::Matrix<double, 6, 1>;

Eigen::Matrix3d skew(const Eigen::Vector3d& w);
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);
double rotation_angle(const Eigen::Matrix3d& R);

// Rigid transform X' = R*X + t. Used both for frame-to-frame relative motion
// and for prefix products of such motions.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  static Pose exp(const Twist& xi);
  Twist log() const;

  bool is_finite() const { return R.allFinite() && t.allFinite(); }
};

inline Pose operator*(const Pose& a, const Pose& b) {
  return {a.R * b.R, a.R * b.t + a.t};
}

// Twist norm of a * b^-1; the pose-change measure used for convergence checks.
double pose_delta(const Pose& a, const Pose& b);

}  // namespace flowvo
