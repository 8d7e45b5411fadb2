#pragma once

#include <filesystem>
#include <vector>

#include "flowvo/se3.hpp"

namespace flowvo {

// Absolute camera-to-world poses, strictly increasing frame indices.
struct TrajectoryEntry {
  int frame;
  Pose pose;
};

struct Trajectory {
  std::vector<TrajectoryEntry> entries;

  int size() const { return int(entries.size()); }
  const Pose& pose(int i) const { return entries[i].pose; }
  Eigen::Vector3d position(int i) const { return entries[i].pose.t; }

  void push_back(int frame, const Pose& p) { entries.push_back({frame, p}); }
};

enum class TrajectoryFormat { kKitti, kTum };

// kitti: 12 floats per line, row-major 3x4 [R|t], frame = line index.
// tum: "timestamp tx ty tz qx qy qz qw", timestamp = frame index.
void write_trajectory(const Trajectory& traj, TrajectoryFormat format,
                      const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path, TrajectoryFormat format);

}  // namespace flowvo
