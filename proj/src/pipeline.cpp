#include "flowvo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowvo/errors.hpp"
#include "flowvo/triangulation.hpp"

namespace flowvo {

namespace {

std::vector<Pose> prefix_chain(std::span<const Pose> poses) {
  std::vector<Pose> chain(poses.size());
  Pose acc = Pose::identity();
  for (size_t i = 0; i < poses.size(); ++i) {
    acc = poses[i] * acc;
    chain[i] = acc;
  }
  return chain;
}

DepthMap triangulate_depth(const FlowField& flow, const Intrinsics& K, const Pose& T1) {
  DepthMap depth(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (!flow.valid[flow.index(x, y)]) continue;
      const Eigen::Vector2d p0(x, y);
      const auto tri = triangulate(K, T1, p0, p0 + flow.at(x, y));
      if (!tri || !(tri->depth > 0.0) || !std::isfinite(tri->depth)) continue;
      // Cheirality in the second view as well.
      if (T1.apply(tri->depth * K.unproject(p0)).z() <= 0.0) continue;
      depth.set(x, y, tri->depth);
    }
  }
  return depth;
}

double mean_mie_score(const TrackContext& ctx, const RigidnessMaps& q, const DepthMap& depth) {
  const int n = ctx.frames();
  double acc = 0.0;
  long count = 0;
  double qv[kMaxWindow];
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      for (int t = 0; t < n; ++t) qv[t] = q[t].at(x, y);
      acc += depth_score_mie(ctx, {double(x), double(y)}, depth.at(x, y), {qv, size_t(n)});
      ++count;
    }
  }
  return count > 0 ? acc / double(count) : 0.0;
}

double mean_rigidness(const RigidnessMaps& maps) {
  double acc = 0.0;
  size_t count = 0;
  for (const auto& m : maps) {
    for (size_t i = 0; i < m.size(); ++i) acc += m.data()[i];
    count += m.size();
  }
  return count > 0 ? acc / double(count) : 0.0;
}

}  // namespace

uint64_t derive_seed(uint64_t seed, int index) {
  if (index == 0) return seed;
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * uint64_t(index);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

BatchResult run_batch(std::span<const FlowField> flows, const Intrinsics& K,
                      const BatchConfig& cfg, const std::optional<Pose>& prior_T1) {
  const int n = int(flows.size());
  if (n < 1 || n > kMaxWindow) throw PipelineError("run_batch: unsupported window size");
  const int w = flows[0].width, h = flows[0].height;
  for (const auto& f : flows) {
    if (f.width != w || f.height != h) throw PipelineError("run_batch: flow dimension mismatch");
  }

  std::mt19937_64 rng(cfg.seed);
  BatchResult result;

  // Table-1 initialization: uninformative rigidness, epipolar T_1 unless a
  // previous estimate seeds it, depth from two-view triangulation.
  RigidnessMaps rigid(n, RigidnessMap(w, h, 1.0));
  std::vector<Pose> poses(n, Pose::identity());
  if (prior_T1) {
    poses[0] = *prior_T1;
  } else {
    try {
      poses[0] = epipolar_bootstrap(flows[0], K, cfg.bootstrap_stride, rng, cfg.epipolar);
    } catch (const EstimationError& e) {
      throw PipelineError(std::string("bootstrap-failed: ") + e.what());
    }
    result.used_bootstrap = true;
  }
  DepthMap depth = triangulate_depth(flows[0], K, poses[0]);
  if (depth.valid_count() < kMinPoseSamples) {
    throw PipelineError("bootstrap-failed: triangulation left too few valid pixels");
  }

  PoseSamplingOptions sopt;
  sopt.stride = cfg.pose_stride;
  MeanshiftOptions mopt;
  mopt.sigma = cfg.kernel_sigma;
  mopt.seeds = cfg.meanshift_seeds;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    IterationStats stats{};

    std::vector<Pose> chain = prefix_chain(poses);
    double max_delta = 0.0;
    for (int t = 1; t <= n; ++t) {
      TrackContext ctx{&K, chain, flows, &cfg.residual};
      sopt.prior = (iter == 0 && t >= 2) ? std::nullopt : std::optional<Pose>(poses[t - 1]);
      const Pose updated = update_pose(ctx, depth, rigid[t - 1], t, sopt, mopt, rng);
      if (iter > 0 || t == 1) max_delta = std::max(max_delta, pose_delta(updated, poses[t - 1]));
      poses[t - 1] = updated;
      chain = prefix_chain(poses);  // downstream frames see the refreshed prefix
    }
    if (iter == 0) max_delta = std::numeric_limits<double>::infinity();
    stats.max_pose_delta = max_delta;

    TrackContext ctx{&K, chain, flows, &cfg.residual};
    const RigidnessMaps smoothed = update_rigidness(ctx, depth, cfg.gamma, true);

    stats.depth_score_before = mean_mie_score(ctx, smoothed, depth);
    DepthUpdateOptions dopt;
    dopt.criterion = cfg.depth_criterion;
    update_depth_map(ctx, smoothed, depth, rng, dopt);
    stats.depth_score_after = mean_mie_score(ctx, smoothed, depth);

    rigid = update_rigidness(ctx, depth, cfg.gamma, false);
    stats.mean_rigidness = mean_rigidness(rigid);
    result.iterations.push_back(stats);

    for (const auto& p : poses) {
      if (!p.is_finite()) throw PipelineError("diverged: non-finite pose state");
    }
    if (max_delta < cfg.convergence_eps) break;
  }

  result.poses = std::move(poses);
  result.depth = std::move(depth);
  result.rigidness = std::move(rigid);
  return result;
}

SequenceResult run_sequence(const FlowSource& source, const Intrinsics& K,
                            const SequenceOptions& opt) {
  const int total = source.count();
  const int window = opt.batch.window_size;
  if (total < window) throw PipelineError("run_sequence: fewer flows than the window size");

  SequenceResult out;
  std::optional<Pose> prior;
  Pose last_relative = Pose::identity();      // scale-corrected, for fallbacks
  Pose last_relative_raw = Pose::identity();  // batch units, seeds the next batch
  double ema_scale = 1.0;
  bool have_scale = false;

  int start = 0;
  int batch_index = 0;
  while (start < total) {
    const int count = std::min(window, total - start);
    std::vector<FlowField> flows;
    flows.reserve(count);
    for (int i = 0; i < count; ++i) flows.push_back(source.get(start + i));

    BatchConfig cfg = opt.batch;
    cfg.seed = derive_seed(opt.batch.seed, batch_index);

    BatchRecord record{start, count, true, false, false, false, ""};
    try {
      BatchResult batch = [&] {
        try {
          return run_batch(flows, K, cfg, prior);
        } catch (const Error&) {
          if (!prior) throw;
          // A bad prior can sink the whole batch; retry from scratch and
          // restore the sequence scale through the prior's speed.
          record.rebootstrapped = true;
          BatchResult fresh = run_batch(flows, K, cfg, std::nullopt);
          const double speed = prior->t.norm();
          if (speed > 0.0) {
            const double have = fresh.poses.front().t.norm();
            if (have > 0.0) {
              const double s = speed / have;
              for (auto& p : fresh.poses) p.t *= s;
              for (size_t i = 0; i < fresh.depth.depth.size(); ++i) fresh.depth.depth[i] *= s;
            }
          }
          return fresh;
        }
      }();
      record.used_bootstrap = batch.used_bootstrap;

      last_relative_raw = batch.poses.back();
      if (opt.ground_scale) {
        GroundScaleOptions gopt;
        gopt.camera_height = opt.camera_height;
        const double s = estimate_ground_scale(batch.depth, K, gopt);
        ema_scale = have_scale ? opt.scale_ema * ema_scale + (1.0 - opt.scale_ema) * s : s;
        have_scale = true;
        for (auto& p : batch.poses) p.t *= ema_scale;
      }

      for (const auto& p : batch.poses) out.relative.push_back(p);
      last_relative = batch.poses.back();
      prior = last_relative_raw;
      out.last_depth = std::move(batch.depth);
      out.last_rigidness = std::move(batch.rigidness);
    } catch (const Error& e) {
      record.ok = false;
      record.fallback = true;
      record.error = e.what();
      for (int i = 0; i < count; ++i) out.relative.push_back(last_relative);
      prior = last_relative_raw;
    }
    out.batches.push_back(record);
    start += count;
    ++batch_index;
  }

  Pose abs = Pose::identity();
  out.trajectory.push_back(0, abs);
  for (size_t m = 0; m < out.relative.size(); ++m) {
    abs = abs * out.relative[m].inverse();
    out.trajectory.push_back(int(m) + 1, abs);
  }
  return out;
}

double estimate_ground_scale(const DepthMap& depth, const Intrinsics& K,
                             const GroundScaleOptions& opt) {
  const int w = depth.width, h = depth.height;
  const int y_start = h / 2;

  int region_valid = 0;
  for (int y = y_start; y < h; ++y)
    for (int x = 0; x < w; ++x) region_valid += depth.is_valid(x, y);
  if (region_valid < opt.min_region_pixels) {
    throw EstimationError("no-ground: too few valid depths in the lower image half");
  }

  const double cos_limit = std::cos(opt.max_normal_angle_deg * std::numbers::pi / 180.0);
  const Eigen::Vector3d down(0, 1, 0);  // image y grows downward
  std::vector<double> heights;
  heights.reserve(size_t(region_valid));
  for (int y = y_start; y < h - 1; ++y) {
    for (int x = 0; x < w - 1; ++x) {
      if (!depth.is_valid(x, y) || !depth.is_valid(x + 1, y) || !depth.is_valid(x, y + 1))
        continue;
      const Eigen::Vector3d p = depth.at(x, y) * K.unproject({double(x), double(y)});
      const Eigen::Vector3d pr =
          depth.at(x + 1, y) * K.unproject({double(x) + 1.0, double(y)});
      const Eigen::Vector3d pd =
          depth.at(x, y + 1) * K.unproject({double(x), double(y) + 1.0});
      const Eigen::Vector3d n = (pr - p).cross(pd - p);
      const double nn = n.norm();
      if (!(nn > 0.0)) continue;
      if (std::abs(n.dot(down)) / nn < cos_limit) continue;
      const double height = p.dot(down);
      if (height > 0.0) heights.push_back(height);
    }
  }
  if (int(heights.size()) < opt.min_kept_pixels) {
    throw EstimationError("no-ground: too few near-vertical surface normals");
  }

  std::vector<double> tmp = heights;
  std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
  const double median = tmp[tmp.size() / 2];
  const double bin_w = opt.bin_fraction * median;
  if (!(bin_w > 0.0)) throw EstimationError("no-ground: degenerate height distribution");

  std::vector<int> hist;
  for (double v : heights) {
    const int k = int(v / bin_w);
    if (k >= int(hist.size())) hist.resize(k + 1, 0);
    ++hist[k];
  }
  int mode_bin = 0;
  for (int k = 1; k < int(hist.size()); ++k)
    if (hist[k] > hist[mode_bin]) mode_bin = k;

  // Parabolic refinement over the mode bin and its neighbors.
  double mode = (mode_bin + 0.5) * bin_w;
  if (mode_bin > 0 && mode_bin + 1 < int(hist.size())) {
    const double c0 = hist[mode_bin - 1], c1 = hist[mode_bin], c2 = hist[mode_bin + 1];
    const double denom = c0 - 2.0 * c1 + c2;
    if (denom < 0.0) mode = (mode_bin + 0.5 + 0.5 * (c0 - c2) / denom) * bin_w;
  }
  return opt.camera_height / mode;
}

}  // namespace flowvo
