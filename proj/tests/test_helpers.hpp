#pragma once

#include <random>

#include <Eigen/Core>

#include "flowvo/se3.hpp"

namespace flowvo::test {

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 1.0,
                        double max_angle = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ua(0.0, max_angle);
  Eigen::Vector3d axis(g(rng), g(rng), g(rng));
  axis.normalize();
  Twist xi;
  xi.head<3>() = trans_scale * Eigen::Vector3d(g(rng), g(rng), g(rng));
  xi.tail<3>() = ua(rng) * axis;
  return Pose::exp(xi);
}

inline Twist random_twist(std::mt19937_64& rng, double trans_scale = 1.0,
                          double max_angle = 1.0) {
  return random_pose(rng, trans_scale, max_angle).log();
}

}  // namespace flowvo::test
