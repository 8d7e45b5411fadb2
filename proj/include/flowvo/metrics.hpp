#pragma once

#include <span>
#include <vector>

#include "flowvo/image.hpp"
#include "flowvo/trajectory.hpp"

namespace flowvo {

struct OdometryErrors {
  double translation_pct;     // mean segment translation error, % of length
  double rotation_deg_per_m;  // mean segment rotation error
  long segments;
};

// KITTI-style relative pose error: every start frame, segment lengths 100 m
// to 800 m in 100 m steps measured by ground-truth arc length. Throws
// EstimationError("too-short ...") when the path is under 100 m.
OdometryErrors kitti_metrics(const Trajectory& est, const Trajectory& gt);

// Mean translation RMSE of sliding fixed-length segments after closed-form
// rigid alignment (orthogonal Procrustes on positions).
double segment_ate(const Trajectory& est, const Trajectory& gt, int segment_len = 6);

struct DepthBucket {
  double threshold;     // rigidness-sum cut W > threshold
  double density;       // bucket pixels / valid gt pixels
  double mean_epe;      // disparity EPE, px
  double outlier_rate;  // EPE > 3 px and > 5% of gt
  long pixels;
};

// Disparity-domain depth quality against ground truth (0 = invalid), after
// median-ratio scale alignment. rigidness_sum may be null, in which case all
// buckets see every valid pixel.
std::vector<DepthBucket> depth_metrics(const DepthMap& depth, const Grid<double>& gt_disparity,
                                       const Grid<double>* rigidness_sum,
                                       std::span<const double> thresholds);

}  // namespace flowvo
