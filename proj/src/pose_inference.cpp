#include "flowvo/pose_inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowvo/errors.hpp"
#include "flowvo/p3p.hpp"

namespace flowvo {

namespace {

struct GroupPoint {
  Eigen::Vector3d world;   // frame t-1 coordinates
  Eigen::Vector2d image;   // frame t pixels
  double rigidness;
};

// Builds one correspondence for pixel index i of the depth map; empty when the
// track is broken at this frame.
std::optional<GroupPoint> make_point(const TrackContext& ctx, const DepthMap& depth,
                                     const RigidnessMap& w_t, const Pose& chain_prev, int t,
                                     size_t pix_index) {
  const int x = int(pix_index % depth.width);
  const int y = int(pix_index / depth.width);
  const Eigen::Vector2d px(x, y);
  const double d = depth.depth[pix_index];
  const auto proj = project(*ctx.K, chain_prev, px, d);
  if (!proj) return std::nullopt;
  const auto obs = ctx.flows[t - 1].sample(proj->pixel.x(), proj->pixel.y());
  if (!obs) return std::nullopt;
  return GroupPoint{chain_prev.apply(d * ctx.K->unproject(px)), proj->pixel + *obs,
                    w_t.at(x, y)};
}

}  // namespace

std::vector<PoseSample> sample_pose_candidates(const TrackContext& ctx, const DepthMap& depth,
                                               const RigidnessMap& w_t, int t,
                                               const PoseSamplingOptions& opt,
                                               std::mt19937_64& rng) {
  const Pose chain_prev = t >= 2 ? ctx.chain[t - 2] : Pose::identity();

  std::vector<size_t> valid;
  valid.reserve(depth.depth.size());
  for (size_t i = 0; i < depth.depth.size(); ++i)
    if (depth.valid[i]) valid.push_back(i);
  std::vector<PoseSample> samples;
  if (valid.size() < 4) return samples;
  std::uniform_int_distribution<size_t> pick(0, valid.size() - 1);

  for (int y = 0; y < depth.height; y += opt.stride) {
    for (int x = 0; x < depth.width; x += opt.stride) {
      if (!depth.is_valid(x, y)) continue;
      const size_t j1 = depth.index(x, y);
      size_t j2 = valid[pick(rng)];
      size_t j3 = valid[pick(rng)];
      size_t j4 = valid[pick(rng)];
      if (j2 == j1 || j3 == j1 || j3 == j2 || j4 == j1 || j4 == j2 || j4 == j3) continue;

      const auto p1 = make_point(ctx, depth, w_t, chain_prev, t, j1);
      const auto p2 = make_point(ctx, depth, w_t, chain_prev, t, j2);
      const auto p3 = make_point(ctx, depth, w_t, chain_prev, t, j3);
      if (!p1 || !p2 || !p3) continue;

      const auto sols = solve_p3p({p1->world, p2->world, p3->world},
                                  {p1->image, p2->image, p3->image}, *ctx.K);
      if (sols.status != P3PStatus::kOk) continue;

      // Disambiguate with a fourth point; fall back to prior proximity.
      int best = -1;
      const auto p4 = make_point(ctx, depth, w_t, chain_prev, t, j4);
      if (p4) {
        double best_err = std::numeric_limits<double>::infinity();
        for (int c = 0; c < sols.count; ++c) {
          const Eigen::Vector3d pc = sols.poses[c].apply(p4->world);
          if (!(pc.z() > 0.0)) continue;
          const double err = (ctx.K->project_point(pc) - p4->image).norm();
          if (err < best_err) {
            best_err = err;
            best = c;
          }
        }
      }
      if (best < 0) {
        if (opt.prior) {
          double best_d = std::numeric_limits<double>::infinity();
          for (int c = 0; c < sols.count; ++c) {
            const double d = pose_delta(sols.poses[c], *opt.prior);
            if (d < best_d) {
              best_d = d;
              best = c;
            }
          }
        } else {
          best = 0;
        }
      }
      samples.push_back({sols.poses[best].log(), p1->rigidness * p2->rigidness * p3->rigidness});
    }
  }
  return samples;
}

double kernel_density(std::span<const PoseSample> samples, const Twist& p, const Twist& sigma) {
  double acc = 0.0;
  for (const auto& s : samples) {
    const Twist d = (p - s.twist).cwiseQuotient(sigma);
    acc += s.weight * std::exp(-0.5 * d.squaredNorm());
  }
  return acc;
}

Twist meanshift_mode(std::span<const PoseSample> samples, const MeanshiftOptions& opt,
                     MeanshiftTrace* trace) {
  if (samples.empty()) throw EstimationError("meanshift: empty sample set");

  // Canonical processing order makes the result independent of input order.
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (samples[a].weight != samples[b].weight) return samples[a].weight > samples[b].weight;
    for (int k = 0; k < 6; ++k) {
      if (samples[a].twist[k] != samples[b].twist[k])
        return samples[a].twist[k] < samples[b].twist[k];
    }
    return false;
  });
  std::vector<PoseSample> sorted(samples.size());
  for (size_t i = 0; i < order.size(); ++i) sorted[i] = samples[order[i]];

  double total_weight = 0.0;
  for (const auto& s : sorted) total_weight += s.weight;
  if (!(total_weight > 0.0)) throw EstimationError("meanshift: zero-weight sample set");

  // Restart seeds ranked by local weighted density (probed on a strided
  // subset). Weight-ranked seeding collapses under tied weights -- the
  // uninformative-rigidness bootstrap -- by picking isolated extremes that
  // stall as their own modes.
  const int probe_stride = std::max<size_t>(1, sorted.size() / 512);
  std::vector<double> local_density(sorted.size(), 0.0);
  for (size_t i = 0; i < sorted.size(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < sorted.size(); j += probe_stride) {
      const Twist d = (sorted[i].twist - sorted[j].twist).cwiseQuotient(opt.sigma);
      acc += sorted[j].weight * std::exp(-0.5 * d.squaredNorm());
    }
    local_density[i] = acc;
  }
  std::vector<int> seed_rank(sorted.size());
  std::iota(seed_rank.begin(), seed_rank.end(), 0);
  std::stable_sort(seed_rank.begin(), seed_rank.end(), [&](int a, int b) {
    return local_density[a] > local_density[b];
  });

  const int n_seeds = std::min<int>(opt.seeds, int(sorted.size()));
  Twist best_mode = sorted[seed_rank[0]].twist;
  double best_density = -1.0;

  std::vector<PoseSample> working;
  for (int s = 0; s < n_seeds; ++s) {
    if (!(local_density[seed_rank[s]] > 0.0)) break;  // no mass near the rest
    Twist p = sorted[seed_rank[s]].twist;
    std::span<const PoseSample> set = sorted;
    for (int it = 0; it < opt.max_iters; ++it) {
      Twist num = Twist::Zero();
      double den = 0.0;
      for (const auto& g : set) {
        const Twist d = (p - g.twist).cwiseQuotient(opt.sigma);
        const double k = g.weight * std::exp(-0.5 * d.squaredNorm());
        num += k * g.twist;
        den += k;
      }
      if (!(den > 0.0)) break;
      const Twist next = num / den;
      // Convergence check before assigning keeps exact fixed points exact.
      if ((next - p).norm() < opt.tol) break;
      p = next;
      if (trace) {
        trace->iterates.push_back(p);
        trace->densities.push_back(kernel_density(set, p, opt.sigma));
      }
      if (it == 0 && opt.prune_mahalanobis > 0.0) {
        working.clear();
        for (const auto& g : sorted) {
          const Twist d = (p - g.twist).cwiseQuotient(opt.sigma);
          if (d.norm() <= opt.prune_mahalanobis) working.push_back(g);
        }
        if (!working.empty()) set = working;
      }
    }
    const double density = kernel_density(sorted, p, opt.sigma);
    if (density > best_density) {
      best_density = density;
      best_mode = p;
    }
  }
  return best_mode;
}

Pose update_pose(const TrackContext& ctx, const DepthMap& depth, const RigidnessMap& w_t, int t,
                 const PoseSamplingOptions& sopt, const MeanshiftOptions& mopt,
                 std::mt19937_64& rng) {
  const auto samples = sample_pose_candidates(ctx, depth, w_t, t, sopt, rng);
  if (int(samples.size()) < kMinPoseSamples) {
    throw EstimationError("too-few-samples: pose sampling produced " +
                          std::to_string(samples.size()) + " groups");
  }
  return Pose::exp(meanshift_mode(samples, mopt));
}

}  // namespace flowvo
