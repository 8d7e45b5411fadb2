#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flowvo/camera.hpp"
#include "flowvo/image.hpp"
#include "flowvo/residual_model.hpp"
#include "flowvo/se3.hpp"

namespace flowvo {

// Sentinel emission for broken tracks (projection behind the camera, outside
// the image, or over invalid flow). The gap pins the rigidness posterior near
// zero and penalizes candidates that break tracks the E-step trusted, at a
// level comparable to a grossly wrong but visible hypothesis.
inline constexpr double kBrokenLogRho = -25.0;
inline constexpr double kBrokenLogMu = -15.0;

struct Emission {
  double log_rho;
  double log_mu;
  bool broken;
};

// Everything per-track computations read. chain[i] is the prefix product
// T_1 * ... * T_{i+1}; flows[i] is the flow field X_{i+1} (frame i -> i+1).
struct TrackContext {
  const Intrinsics* K = nullptr;
  std::span<const Pose> chain;
  std::span<const FlowField> flows;
  const ResidualModel* model = nullptr;

  int frames() const { return int(flows.size()); }
};

inline constexpr int kMaxWindow = 32;

// Emission terms for pixel j of frame 0 at frame t (1-based), under the given
// depth hypothesis. Total: broken tracks yield the sentinel.
Emission emission(const TrackContext& ctx, const Eigen::Vector2d& pixel0, int t, double depth);

// Two-state forward-backward over one chain with a symmetric gamma transition
// matrix and uniform prior at the first node. Writes q(W = 1) per node.
void forward_backward(std::span<const double> log_rho, std::span<const double> log_mu,
                      double gamma, std::span<double> q_out);

struct EmissionTable {
  Grid<double> log_rho;
  Grid<double> log_mu;
};

// Emission tables for all frames under the current depth map. Pixels with
// invalid depth get the broken sentinel.
std::vector<EmissionTable> compute_emission_tables(const TrackContext& ctx,
                                                   const DepthMap& depth);

// E-step. smooth=true: forward-backward along rows and columns, combined by
// averaging log-odds. smooth=false: the per-pixel emission posterior only,
// which keeps high-frequency detail ahead of the pose update.
RigidnessMaps update_rigidness(const TrackContext& ctx, const DepthMap& depth, double gamma,
                               bool smooth);

// Depth scores; q_w1[t-1] = q(W_t = 1) for this pixel. MIE is the expected
// inlier log-posterior ratio under equal mixture priors (always <= 0); MLE is
// the expected complete-data log-likelihood and exists for the ablation.
double depth_score_mie(const TrackContext& ctx, const Eigen::Vector2d& pixel0, double depth,
                       std::span<const double> q_w1);
double depth_score_mle(const TrackContext& ctx, const Eigen::Vector2d& pixel0, double depth,
                       std::span<const double> q_w1);

enum class DepthCriterion { kMie, kMle };

enum class SweepDirection { kLeftRight, kRightLeft, kTopBottom, kBottomTop };

struct DepthUpdateOptions {
  // Candidate sampling range; 0 derives [0.1, 10] * median of the current map.
  double d_min = 0.0;
  double d_max = 0.0;
  std::vector<SweepDirection> directions;  // empty = all four
  DepthCriterion criterion = DepthCriterion::kMie;
};

// M-step: directed sweeps where each pixel keeps the best of {current value,
// propagated neighbor, fresh sample} and hands the winner to the next pixel.
// Per-pixel scores never decrease within a call.
void update_depth_map(const TrackContext& ctx, const RigidnessMaps& q, DepthMap& depth,
                      std::mt19937_64& rng, const DepthUpdateOptions& opt = {});

}  // namespace flowvo
