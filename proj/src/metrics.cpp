#include "flowvo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "flowvo/errors.hpp"

namespace flowvo {

OdometryErrors kitti_metrics(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) throw EstimationError("kitti_metrics: length mismatch");
  const int n = gt.size();

  std::vector<double> dist(n, 0.0);
  for (int i = 1; i < n; ++i) {
    dist[i] = dist[i - 1] + (gt.position(i) - gt.position(i - 1)).norm();
  }
  if (n < 2 || dist[n - 1] < 100.0) {
    throw EstimationError("too-short: ground-truth path under 100 m");
  }

  double t_acc = 0.0, r_acc = 0.0;
  long segments = 0;
  for (int i = 0; i < n; ++i) {
    int j = i;
    for (int len = 100; len <= 800; len += 100) {
      while (j < n && dist[j] - dist[i] < double(len)) ++j;
      if (j >= n) break;
      const double seg_len = dist[j] - dist[i];
      const Pose gt_rel = gt.pose(i).inverse() * gt.pose(j);
      const Pose est_rel = est.pose(i).inverse() * est.pose(j);
      const Pose err = gt_rel.inverse() * est_rel;
      t_acc += err.t.norm() / seg_len;
      r_acc += rotation_angle(err.R) / seg_len;
      ++segments;
    }
  }
  if (segments == 0) throw EstimationError("too-short: no full segments");
  return {100.0 * t_acc / double(segments),
          (180.0 / std::numbers::pi) * r_acc / double(segments), segments};
}

double segment_ate(const Trajectory& est, const Trajectory& gt, int segment_len) {
  if (est.size() != gt.size()) throw EstimationError("segment_ate: length mismatch");
  const int n = gt.size();
  if (n < segment_len) throw EstimationError("too-short: fewer frames than the segment length");

  double acc = 0.0;
  long count = 0;
  for (int start = 0; start + segment_len <= n; ++start) {
    Eigen::Vector3d pc = Eigen::Vector3d::Zero(), gc = Eigen::Vector3d::Zero();
    for (int k = 0; k < segment_len; ++k) {
      pc += est.position(start + k);
      gc += gt.position(start + k);
    }
    pc /= segment_len;
    gc /= segment_len;

    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (int k = 0; k < segment_len; ++k) {
      H += (gt.position(start + k) - gc) * (est.position(start + k) - pc).transpose();
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0) {
      Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
      fix(2, 2) = -1;
      R = svd.matrixU() * fix * svd.matrixV().transpose();
    }

    double se = 0.0;
    for (int k = 0; k < segment_len; ++k) {
      const Eigen::Vector3d r =
          R * (est.position(start + k) - pc) + gc - gt.position(start + k);
      se += r.squaredNorm();
    }
    acc += std::sqrt(se / segment_len);
    ++count;
  }
  return acc / double(count);
}

std::vector<DepthBucket> depth_metrics(const DepthMap& depth, const Grid<double>& gt_disparity,
                                       const Grid<double>* rigidness_sum,
                                       std::span<const double> thresholds) {
  if (depth.width != gt_disparity.width() || depth.height != gt_disparity.height()) {
    throw EstimationError("depth_metrics: dimension mismatch");
  }

  // Median-ratio scale alignment: est_disp = s / depth.
  std::vector<double> ratios;
  long gt_valid = 0;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (gt_disparity.at(x, y) <= 0.0) continue;
      ++gt_valid;
      if (depth.is_valid(x, y)) ratios.push_back(gt_disparity.at(x, y) * depth.at(x, y));
    }
  }
  if (ratios.empty()) throw EstimationError("depth_metrics: no overlapping valid pixels");
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  const double scale = ratios[ratios.size() / 2];

  std::vector<DepthBucket> buckets;
  for (double thresh : thresholds) {
    DepthBucket b{thresh, 0.0, 0.0, 0.0, 0};
    long outliers = 0;
    for (int y = 0; y < depth.height; ++y) {
      for (int x = 0; x < depth.width; ++x) {
        const double gt = gt_disparity.at(x, y);
        if (gt <= 0.0 || !depth.is_valid(x, y)) continue;
        if (rigidness_sum && rigidness_sum->at(x, y) <= thresh) continue;
        const double epe = std::abs(scale / depth.at(x, y) - gt);
        b.mean_epe += epe;
        outliers += (epe > 3.0 && epe > 0.05 * gt) ? 1 : 0;
        ++b.pixels;
      }
    }
    if (b.pixels > 0) {
      b.mean_epe /= double(b.pixels);
      b.outlier_rate = double(outliers) / double(b.pixels);
    }
    b.density = gt_valid > 0 ? double(b.pixels) / double(gt_valid) : 0.0;
    buckets.push_back(b);
  }
  return buckets;
}

}  // namespace flowvo
