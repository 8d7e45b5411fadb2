#include "flowvo/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "flowvo/errors.hpp"

namespace flowvo {

namespace {

struct SceneModel {
  std::vector<PlaneSpec> planes;  // includes background and ground
  std::vector<CardSpec> cards;
};

// Depth along the ray of `pixel` in the frame whose chain pose is `C`
// (frame coords = C * frame-0 coords). Returns the nearest positive hit.
std::optional<double> raycast(const SceneModel& scene, const Intrinsics& K, const Pose& C,
                              const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d r = K.unproject(pixel);         // frame ray, z = 1
  const Eigen::Vector3d rd = C.R.transpose() * r;       // ray direction, frame-0 coords
  const Eigen::Vector3d ro = -(C.R.transpose() * C.t);  // camera center, frame-0 coords

  double best = std::numeric_limits<double>::infinity();
  for (const auto& plane : scene.planes) {
    const double denom = plane.normal.dot(rd);
    if (std::abs(denom) < 1e-12) continue;
    const double s = (plane.offset - plane.normal.dot(ro)) / denom;
    if (s > 1e-9 && s < best) best = s;
  }
  for (const auto& card : scene.cards) {
    // Card plane z = depth in frame-0 coords, bounded by its image rectangle.
    if (std::abs(rd.z()) < 1e-12) continue;
    const double s = (card.depth - ro.z()) / rd.z();
    if (!(s > 1e-9) || s >= best) continue;
    const Eigen::Vector3d hit = ro + s * rd;
    const double hx = K.fx * hit.x() / card.depth + K.cx;
    const double hy = K.fy * hit.y() / card.depth + K.cy;
    if (hx >= card.x0 && hx <= card.x1 && hy >= card.y0 && hy <= card.y1) best = s;
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

SceneModel build_model(const SceneSpec& spec, std::mt19937_64& rng) {
  SceneModel model;
  model.planes = spec.planes;
  // Background guarantees every ray terminates.
  model.planes.push_back({{0, 0, 1}, spec.depth_max});
  if (spec.ground_plane) {
    model.planes.push_back({{0, 1, 0}, spec.ground_height});
  }
  model.cards = spec.cards;
  if (model.cards.empty() && spec.random_cards > 0) {
    std::uniform_real_distribution<double> ux(0.0, spec.width * 0.7);
    std::uniform_real_distribution<double> uy(0.0, spec.height * 0.6);
    std::uniform_real_distribution<double> usz(0.2, 0.45);
    std::uniform_real_distribution<double> ud(spec.depth_min, 0.8 * spec.depth_max);
    for (int i = 0; i < spec.random_cards; ++i) {
      const double x0 = ux(rng), y0 = uy(rng);
      model.cards.push_back({x0, y0, x0 + usz(rng) * spec.width, y0 + usz(rng) * spec.height,
                             ud(rng)});
    }
  }
  return model;
}

std::vector<Pose> random_motion(const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ujit(-spec.trans_jitter, spec.trans_jitter);
  std::uniform_real_distribution<double> ulat(-0.3, 0.3);
  std::uniform_real_distribution<double> uang(0.2, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Heading and per-frame rotation evolve as bounded random walks: camera
  // trajectories turn smoothly, and the sliding-window prior seeding relies
  // on that frame-to-frame coherence.
  Eigen::Vector3d dir;
  if (spec.forward_motion) {
    dir = Eigen::Vector3d(ulat(rng), 0.3 * ulat(rng), 1.0).normalized();
  } else {
    dir = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)).normalized();
  }
  const double heading_step = 2.0 * std::numbers::pi / 180.0;  // per frame

  std::vector<Pose> poses;
  for (int t = 0; t < spec.flow_count; ++t) {
    if (t > 0) {
      Eigen::Vector3d wobble(gauss(rng), 0.4 * gauss(rng), gauss(rng));
      wobble -= wobble.dot(dir) * dir;
      if (wobble.norm() > 1e-9) {
        dir = so3_exp(heading_step * wobble.normalized().cross(dir).normalized() *
                      std::min(1.0, std::abs(gauss(rng)))) *
              dir;
        dir.normalize();
      }
    }
    const double mag = spec.trans_mag * (1.0 + (spec.trans_jitter > 0 ? ujit(rng) : 0.0));
    Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
    axis.normalize();
    const double angle = uang(rng) * spec.rot_mag_deg * std::numbers::pi / 180.0;
    // Camera moves by (R_cam, c); points seen from the new frame transform by
    // the inverse.
    const Eigen::Matrix3d R_cam = so3_exp(axis * angle);
    const Eigen::Vector3d c = dir * mag;
    poses.push_back({R_cam.transpose(), -(R_cam.transpose() * c)});
  }
  return poses;
}

}  // namespace

std::vector<Pose> SyntheticScene::chain() const {
  std::vector<Pose> out(gt_poses.size());
  Pose acc = Pose::identity();
  for (size_t i = 0; i < gt_poses.size(); ++i) {
    acc = gt_poses[i] * acc;
    out[i] = acc;
  }
  return out;
}

Trajectory SyntheticScene::gt_trajectory() const {
  Trajectory traj;
  Pose abs = Pose::identity();
  traj.push_back(0, abs);
  for (size_t i = 0; i < gt_poses.size(); ++i) {
    abs = abs * gt_poses[i].inverse();
    traj.push_back(int(i) + 1, abs);
  }
  return traj;
}

SyntheticScene generate_scene(const SceneSpec& spec, const std::vector<Pose>& poses) {
  if (int(poses.size()) != spec.flow_count) {
    throw Error("generate_scene: pose count does not match flow_count");
  }
  std::mt19937_64 rng(spec.seed);
  const SceneModel model = build_model(spec, rng);

  SyntheticScene scene;
  scene.spec = spec;
  scene.gt_poses = poses;

  // Ground-truth depth over frame 0.
  scene.gt_depth = DepthMap(spec.width, spec.height);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const auto d = raycast(model, spec.K, Pose::identity(), {double(x), double(y)});
      if (d) scene.gt_depth.set(x, y, *d);
    }
  }

  const auto chain = scene.chain();
  std::uniform_real_distribution<double> uphi(0.0, 2.0 * std::numbers::pi);

  for (int t = 1; t <= spec.flow_count; ++t) {
    const Pose& C_prev = t >= 2 ? chain[t - 2] : Pose::identity();
    const Pose& T_t = poses[t - 1];
    FlowField clean(spec.width, spec.height);
    Grid<uint8_t> mask(spec.width, spec.height, 0);

    FlowField observed(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Eigen::Vector2d px(x, y);
        const auto d = raycast(model, spec.K, C_prev, px);
        if (!d) {
          clean.set(x, y, {0, 0}, false);
          observed.set(x, y, {0, 0}, false);
          continue;
        }
        const Eigen::Vector3d p_prev = *d * spec.K.unproject(px);

        // clean carries the pure rigid flow; moving objects enter only the
        // observation.
        const Eigen::Vector3d p_rigid = T_t.apply(p_prev);
        bool moving = false;
        Eigen::Vector3d p_obs = p_rigid;
        for (const auto& rect : spec.outlier_rects) {
          if (x >= rect.x0 && x < rect.x1 && y >= rect.y0 && y < rect.y1) {
            p_obs = T_t.apply(Pose::exp(rect.motion).apply(p_prev));
            moving = true;
            break;
          }
        }
        if (!(p_rigid.z() > 0.0) || !(p_obs.z() > 0.0)) {
          clean.set(x, y, {0, 0}, false);
          observed.set(x, y, {0, 0}, false);
          continue;
        }
        clean.set(x, y, spec.K.project_point(p_rigid) - px);
        observed.set(x, y, spec.K.project_point(p_obs) - px);
        if (moving) mask.at(x, y) = 1;
      }
    }

    if (spec.add_noise) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const size_t i = observed.index(x, y);
          if (!observed.valid[i]) continue;
          const double mag = std::hypot(observed.u[i], observed.v[i]);
          const double epe = fisk_sample(rng, adaptive_params(spec.noise, mag));
          const double phi = uphi(rng);
          observed.u[i] += epe * std::cos(phi);
          observed.v[i] += epe * std::sin(phi);
        }
      }
    }

    scene.clean_flows.push_back(std::move(clean));
    scene.flows.push_back(std::move(observed));
    scene.outlier_masks.push_back(std::move(mask));
  }
  return scene;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed ^ 0xC0FFEEull);
  return generate_scene(spec, random_motion(spec, rng));
}

}  // namespace flowvo
