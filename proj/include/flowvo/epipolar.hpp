#pragma once

#include <random>

#include <Eigen/Core>

#include "flowvo/camera.hpp"
#include "flowvo/image.hpp"
#include "flowvo/se3.hpp"

namespace flowvo {

struct EpipolarOptions {
  int trials = 256;                    // minimal 8-point fits
  int cheirality_subsample = 64;       // correspondences checked per decomposition
  double max_median_sampson_px = 4.0;  // on the LMedS-best model
  double min_parallax = 1e-4;          // rotation-compensated, normalized units
};

// Relative pose of the first frame pair from its flow field, estimated by
// least-median-of-squares over minimal essential fits and decomposed with a
// cheirality vote. Translation is returned at unit norm. Throws
// EstimationError("degenerate-motion") on low parallax / ambiguous cheirality.
Pose epipolar_bootstrap(const FlowField& flow, const Intrinsics& K, int stride,
                        std::mt19937_64& rng, const EpipolarOptions& opt = {});

// Squared Sampson error of a correspondence under an essential matrix, all in
// normalized camera coordinates.
double sampson_error_sq(const Eigen::Matrix3d& E, const Eigen::Vector2d& x0,
                        const Eigen::Vector2d& x1);

}  // namespace flowvo
