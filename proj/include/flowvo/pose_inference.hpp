#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flowvo/depth_inference.hpp"
#include "flowvo/image.hpp"
#include "flowvo/se3.hpp"

namespace flowvo {

struct PoseSample {
  Twist twist;
  double weight;  // product of the three rigidness values, in [0, 1]
};

inline constexpr int kMinPoseSamples = 64;

struct PoseSamplingOptions {
  int stride = 4;
  // Previous estimate of this frame's pose; proximity tie-break for P3P
  // candidate disambiguation when the extra-point test is inconclusive.
  std::optional<Pose> prior;
};

// One minimal P3P instance per strided anchor pixel: the anchor plus two
// random depth-map pixels give three 3D points (depth back-projections pushed
// through the pose chain up to t-1) and three frame-t image points (projected
// track position plus sampled flow). Groups that are collinear, unsolvable or
// broken are skipped. Weight is the product of the three rigidness values.
std::vector<PoseSample> sample_pose_candidates(const TrackContext& ctx, const DepthMap& depth,
                                               const RigidnessMap& w_t, int t,
                                               const PoseSamplingOptions& opt,
                                               std::mt19937_64& rng);

struct MeanshiftOptions {
  Twist sigma = (Twist() << 0.1, 0.1, 0.1, 0.004, 0.004, 0.004).finished();
  int seeds = 8;
  int max_iters = 100;
  double tol = 1e-8;
  // Samples beyond this Mahalanobis radius from the iterate are dropped from
  // a restart's working set after its first step; 0 disables pruning.
  double prune_mahalanobis = 3.0;
};

struct MeanshiftTrace {
  std::vector<Twist> iterates;
  std::vector<double> densities;  // on the restart's working set
};

// Weighted Gaussian-kernel density of the sample set at a point (diagonal
// kernel covariance, unnormalized).
double kernel_density(std::span<const PoseSample> samples, const Twist& p, const Twist& sigma);

// Mode of the weighted kernel density: meanshift restarted from the highest
// weighted samples; returns the converged point of largest full-set density.
// Throws EstimationError when all weights are zero.
Twist meanshift_mode(std::span<const PoseSample> samples, const MeanshiftOptions& opt,
                     MeanshiftTrace* trace = nullptr);

// Full pose update for frame t. Throws EstimationError("too-few-samples")
// when fewer than kMinPoseSamples groups survive.
Pose update_pose(const TrackContext& ctx, const DepthMap& depth, const RigidnessMap& w_t, int t,
                 const PoseSamplingOptions& sopt, const MeanshiftOptions& mopt,
                 std::mt19937_64& rng);

}  // namespace flowvo
