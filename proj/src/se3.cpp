#include "flowvo/se3.hpp"

#include <cmath>

namespace flowvo {

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d S;
  S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return S;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(w);
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  // Quaternion-based extraction stays accurate up to the cut locus at pi.
  const Eigen::AngleAxisd aa(Eigen::Quaterniond(R).normalized());
  return aa.angle() * aa.axis();
}

double rotation_angle(const Eigen::Matrix3d& R) {
  return Eigen::AngleAxisd(Eigen::Quaterniond(R).normalized()).angle();
}

namespace {

// Coefficients of V = I + c1*S + c2*S^2 with S = skew(w), so that
// exp([v, w]) = (exp(S), V v).
void left_jacobian_coeffs(double theta, double& c1, double& c2) {
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    c1 = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c2 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / (theta * theta);
    c2 = (theta - std::sin(theta)) / (theta * theta * theta);
  }
}

}  // namespace

Pose Pose::exp(const Twist& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  const double theta = w.norm();
  double c1, c2;
  left_jacobian_coeffs(theta, c1, c2);
  const Eigen::Matrix3d S = skew(w);
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + c1 * S + c2 * S * S;
  return {so3_exp(w), V * v};
}

Twist Pose::log() const {
  const Eigen::Vector3d w = so3_log(R);
  const double theta = w.norm();
  const Eigen::Matrix3d S = skew(w);
  Eigen::Matrix3d V_inv;
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    const double c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
    V_inv = Eigen::Matrix3d::Identity() - 0.5 * S + c * S * S;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    const double c = (1.0 - a / (2.0 * b)) / (theta * theta);
    V_inv = Eigen::Matrix3d::Identity() - 0.5 * S + c * S * S;
  }
  Twist xi;
  xi.head<3>() = V_inv * t;
  xi.tail<3>() = w;
  return xi;
}

double pose_delta(const Pose& a, const Pose& b) {
  return (a * b.inverse()).log().norm();
}

}  // namespace flowvo
