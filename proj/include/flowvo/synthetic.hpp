#pragma once

#include <optional>
#include <vector>

#include "flowvo/camera.hpp"
#include "flowvo/image.hpp"
#include "flowvo/residual_model.hpp"
#include "flowvo/se3.hpp"
#include "flowvo/trajectory.hpp"

namespace flowvo {

// Infinite plane n . X = offset in frame-0 coordinates, camera side facing.
struct PlaneSpec {
  Eigen::Vector3d normal;
  double offset;
};

// Fronto-parallel card anchored to a frame-0 image rectangle.
struct CardSpec {
  double x0, y0, x1, y1;  // image rectangle, frame 0
  double depth;
};

// Image rectangle whose flow follows an extra rigid motion on top of the
// camera; the synthetic stand-in for an independently moving object.
struct MovingRect {
  int x0, y0, x1, y1;
  Twist motion;  // applied in the previous frame's coordinates
};

struct SceneSpec {
  int width = 256;
  int height = 192;
  int flow_count = 6;
  Intrinsics K{160.0, 160.0, 127.5, 95.5};

  std::vector<PlaneSpec> planes;  // extra infinite planes
  std::vector<CardSpec> cards;    // empty: random_cards are generated
  int random_cards = 4;
  double depth_min = 4.0;
  double depth_max = 12.0;
  bool ground_plane = false;
  double ground_height = 1.5;  // camera height above the ground, scene units

  double trans_mag = 0.15;     // per-frame camera travel
  double trans_jitter = 0.0;   // relative magnitude jitter
  double rot_mag_deg = 0.5;    // per-frame rotation bound
  bool forward_motion = true;  // mostly along +z, driving style

  bool add_noise = false;
  ResidualModel noise;  // Fisk constants used for noise injection

  std::vector<MovingRect> outlier_rects;
  uint64_t seed = 1;
};

struct SyntheticScene {
  SceneSpec spec;
  std::vector<Pose> gt_poses;  // T_1..T_N
  DepthMap gt_depth;           // frame 0
  std::vector<FlowField> flows;
  std::vector<FlowField> clean_flows;
  std::vector<Grid<uint8_t>> outlier_masks;

  std::vector<Pose> chain() const;       // prefix products of gt_poses
  Trajectory gt_trajectory() const;      // absolute camera-to-world
};

// Renders exact rigid flow from a piecewise-planar scene under random (or
// caller-pinned) camera motion, then injects magnitude-adaptive Fisk noise
// and moving-object flow where requested.
SyntheticScene generate_scene(const SceneSpec& spec);

// Overrides the random camera path; poses.size() must equal spec.flow_count.
SyntheticScene generate_scene(const SceneSpec& spec, const std::vector<Pose>& poses);

}  // namespace flowvo
