#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowvo/depth_inference.hpp"
#include "flowvo/epipolar.hpp"
#include "flowvo/image.hpp"
#include "flowvo/pose_inference.hpp"
#include "flowvo/residual_model.hpp"
#include "flowvo/trajectory.hpp"

namespace flowvo {

struct BatchConfig {
  int window_size = 6;   // flows per batch
  double gamma = 0.9;    // rigidness chain transition probability
  ResidualModel residual;
  Twist kernel_sigma = (Twist() << 0.1, 0.1, 0.1, 0.004, 0.004, 0.004).finished();
  int max_iters = 5;
  double convergence_eps = 1e-4;  // max per-frame twist change
  int pose_stride = 4;
  int meanshift_seeds = 8;
  int bootstrap_stride = 4;
  EpipolarOptions epipolar;
  DepthCriterion depth_criterion = DepthCriterion::kMie;
  uint64_t seed = 0;
};

struct IterationStats {
  double max_pose_delta;
  double mean_rigidness;
  double depth_score_before;  // mean per-pixel MIE score, same rigidness maps
  double depth_score_after;
};

struct BatchResult {
  std::vector<Pose> poses;  // T_1..T_N, frame-to-frame
  DepthMap depth;           // over the batch's first frame
  RigidnessMaps rigidness;  // final unsmoothed maps
  std::vector<IterationStats> iterations;
  bool used_bootstrap = false;
};

// One batch of the alternating inference: bootstrap T_1 (epipolar unless a
// prior is given), triangulate the depth map, then loop pose / rigidness /
// depth updates until the poses settle or max_iters is hit.
// Throws PipelineError("bootstrap-failed ...") or PipelineError("diverged ...").
BatchResult run_batch(std::span<const FlowField> flows, const Intrinsics& K,
                      const BatchConfig& cfg, const std::optional<Pose>& prior_T1 = {});

class FlowSource {
 public:
  virtual ~FlowSource() = default;
  virtual int count() const = 0;
  virtual FlowField get(int index) const = 0;
};

class VectorFlowSource final : public FlowSource {
 public:
  explicit VectorFlowSource(std::vector<FlowField> flows) : flows_(std::move(flows)) {}
  int count() const override { return int(flows_.size()); }
  FlowField get(int index) const override { return flows_[index]; }

 private:
  std::vector<FlowField> flows_;
};

struct SequenceOptions {
  BatchConfig batch;
  bool ground_scale = false;     // per-batch metric scale from the ground plane
  double camera_height = 1.7;
  double scale_ema = 0.5;
};

struct BatchRecord {
  int first_frame;
  int flow_count;
  bool ok;
  bool used_bootstrap;
  bool rebootstrapped;  // prior-seeded attempt failed; epipolar retry used
  bool fallback;        // constant-velocity poses substituted
  std::string error;
};

struct SequenceResult {
  Trajectory trajectory;       // absolute camera-to-world, frame 0 = identity
  std::vector<Pose> relative;  // T_m per frame pair, already scale-corrected
  std::vector<BatchRecord> batches;
  DepthMap last_depth;
  RigidnessMaps last_rigidness;
};

// Consecutive batches overlapping by one frame; each batch seeds the next
// one's T_1 with its own last relative pose. A failed batch is replaced by
// constant-velocity poses and flagged.
SequenceResult run_sequence(const FlowSource& source, const Intrinsics& K,
                            const SequenceOptions& opt);

struct GroundScaleOptions {
  double camera_height = 1.7;    // meters above the ground plane
  double max_normal_angle_deg = 10.0;
  int min_region_pixels = 1000;  // valid depths required in the lower half
  int min_kept_pixels = 200;
  double bin_fraction = 0.02;    // histogram bin width, fraction of median height
};

// Metric scale from the ground plane: back-project the lower image half, keep
// pixels whose local surface normal is near the camera's down axis, histogram
// their heights and take camera_height over the refined histogram mode.
// Throws EstimationError("no-ground ...") when too few pixels qualify.
double estimate_ground_scale(const DepthMap& depth, const Intrinsics& K,
                             const GroundScaleOptions& opt);

// Deterministic per-batch seed stream; derive_seed(s, 0) == s so a
// single-batch sequence reproduces run_batch exactly.
uint64_t derive_seed(uint64_t seed, int index);

}  // namespace flowvo
