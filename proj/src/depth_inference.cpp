#include "flowvo/depth_inference.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace flowvo {

namespace {

double log1pexp(double z) {
  if (z > 35.0) return z;
  if (z < -35.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

double logit(double q) {
  q = std::clamp(q, 1e-12, 1.0 - 1e-12);
  return std::log(q) - std::log1p(-q);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Walks the projected track of (pixel0, depth) through all frames, invoking
// f(t, Emission) for t = 1..N. Frames are independent: a frame is broken when
// either of its projections fails or the flow sample is unavailable.
template <typename F>
void for_each_emission(const TrackContext& ctx, const Eigen::Vector2d& pixel0, double depth,
                       F&& f) {
  const int n = ctx.frames();
  std::optional<Projection> prev = Projection{pixel0, depth};
  if (!(depth > 0.0)) prev.reset();
  for (int t = 1; t <= n; ++t) {
    const std::optional<Projection> cur = project(*ctx.K, ctx.chain[t - 1], pixel0, depth);
    Emission e{kBrokenLogRho, kBrokenLogMu, true};
    if (prev && cur) {
      const auto obs = ctx.flows[t - 1].sample(prev->pixel.x(), prev->pixel.y());
      if (obs) {
        const Eigen::Vector2d rigid = cur->pixel - prev->pixel;
        const double epe = (rigid - *obs).norm();
        const double mag = obs->norm();
        e = {log_rho(*ctx.model, epe, mag), log_outlier_density(*ctx.model, mag), false};
      }
    }
    f(t, e);
    prev = cur;
  }
}

}  // namespace

Emission emission(const TrackContext& ctx, const Eigen::Vector2d& pixel0, int t, double depth) {
  Emission out{kBrokenLogRho, kBrokenLogMu, true};
  for_each_emission(ctx, pixel0, depth, [&](int tt, const Emission& e) {
    if (tt == t) out = e;
  });
  return out;
}

void forward_backward(std::span<const double> log_rho, std::span<const double> log_mu,
                      double gamma, std::span<double> q_out) {
  const int n = int(log_rho.size());
  assert(int(log_mu.size()) == n && int(q_out.size()) == n);
  if (n == 0) return;

  // Scaled linear-space messages; per-pixel emission rescaling cancels in the
  // posterior and keeps everything in range.
  thread_local std::vector<double> e1v, e0v, f1v, f0v;
  e1v.resize(n);
  e0v.resize(n);
  f1v.resize(n);
  f0v.resize(n);
  for (int i = 0; i < n; ++i) {
    const double m = std::max(log_rho[i], log_mu[i]);
    e1v[i] = std::exp(log_rho[i] - m);
    e0v[i] = std::exp(log_mu[i] - m);
  }

  double f1 = 0.5 * e1v[0], f0 = 0.5 * e0v[0];
  double s = f1 + f0;
  f1v[0] = f1 / s;
  f0v[0] = f0 / s;
  for (int i = 1; i < n; ++i) {
    f1 = e1v[i] * (gamma * f1v[i - 1] + (1.0 - gamma) * f0v[i - 1]);
    f0 = e0v[i] * ((1.0 - gamma) * f1v[i - 1] + gamma * f0v[i - 1]);
    s = f1 + f0;
    f1v[i] = f1 / s;
    f0v[i] = f0 / s;
  }

  double b1 = 1.0, b0 = 1.0;
  q_out[n - 1] = f1v[n - 1];
  for (int i = n - 2; i >= 0; --i) {
    const double nb1 = gamma * e1v[i + 1] * b1 + (1.0 - gamma) * e0v[i + 1] * b0;
    const double nb0 = (1.0 - gamma) * e1v[i + 1] * b1 + gamma * e0v[i + 1] * b0;
    s = nb1 + nb0;
    b1 = nb1 / s;
    b0 = nb0 / s;
    q_out[i] = f1v[i] * b1 / (f1v[i] * b1 + f0v[i] * b0);
  }
}

std::vector<EmissionTable> compute_emission_tables(const TrackContext& ctx,
                                                   const DepthMap& depth) {
  const int n = ctx.frames();
  std::vector<EmissionTable> tables(n);
  for (auto& t : tables) {
    t.log_rho = Grid<double>(depth.width, depth.height, kBrokenLogRho);
    t.log_mu = Grid<double>(depth.width, depth.height, kBrokenLogMu);
  }
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      for_each_emission(ctx, {double(x), double(y)}, depth.at(x, y),
                        [&](int t, const Emission& e) {
                          tables[t - 1].log_rho.at(x, y) = e.log_rho;
                          tables[t - 1].log_mu.at(x, y) = e.log_mu;
                        });
    }
  }
  return tables;
}

RigidnessMaps update_rigidness(const TrackContext& ctx, const DepthMap& depth, double gamma,
                               bool smooth) {
  const int w = depth.width, h = depth.height;
  const auto tables = compute_emission_tables(ctx, depth);
  RigidnessMaps maps;
  maps.reserve(tables.size());
  for (const auto& table : tables) {
    RigidnessMap q(w, h, 0.5);
    if (!smooth) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          q.at(x, y) = sigmoid(table.log_rho.at(x, y) - table.log_mu.at(x, y));
      maps.push_back(std::move(q));
      continue;
    }

    Grid<double> q_row(w, h), q_col(w, h);
    for (int y = 0; y < h; ++y) {
      forward_backward(table.log_rho.row(y), table.log_mu.row(y), gamma, q_row.row(y));
    }
    std::vector<double> lr(h), lm(h), qc(h);
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) {
        lr[y] = table.log_rho.at(x, y);
        lm[y] = table.log_mu.at(x, y);
      }
      forward_backward(lr, lm, gamma, qc);
      for (int y = 0; y < h; ++y) q_col.at(x, y) = qc[y];
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        q.at(x, y) = sigmoid(0.5 * (logit(q_row.at(x, y)) + logit(q_col.at(x, y))));
    maps.push_back(std::move(q));
  }
  return maps;
}

double depth_score_mie(const TrackContext& ctx, const Eigen::Vector2d& pixel0, double depth,
                       std::span<const double> q_w1) {
  if (!(depth > 0.0)) return -std::numeric_limits<double>::infinity();
  double score = 0.0;
  for_each_emission(ctx, pixel0, depth, [&](int t, const Emission& e) {
    // log(rho / (rho + mu)) with the equal mixture priors cancelled.
    score += q_w1[t - 1] * (-log1pexp(e.log_mu - e.log_rho));
  });
  return score;
}

double depth_score_mle(const TrackContext& ctx, const Eigen::Vector2d& pixel0, double depth,
                       std::span<const double> q_w1) {
  if (!(depth > 0.0)) return -std::numeric_limits<double>::infinity();
  double score = 0.0;
  for_each_emission(ctx, pixel0, depth, [&](int t, const Emission& e) {
    score += q_w1[t - 1] * e.log_rho + (1.0 - q_w1[t - 1]) * e.log_mu;
  });
  return score;
}

namespace {

struct SweepState {
  const TrackContext* ctx;
  const RigidnessMaps* q;
  DepthMap* depth;
  DepthCriterion criterion;
  double inv_lo, inv_hi;  // inverse-depth sampling range
};

double score_candidate(const SweepState& s, const Eigen::Vector2d& px, double d,
                       std::span<const double> qv) {
  return s.criterion == DepthCriterion::kMie ? depth_score_mie(*s.ctx, px, d, qv)
                                             : depth_score_mle(*s.ctx, px, d, qv);
}

void process_pixel(const SweepState& s, int x, int y, double& nbr, bool& nbr_valid,
                   std::mt19937_64& rng) {
  const int n = s.ctx->frames();
  assert(n <= kMaxWindow);
  double qv[kMaxWindow];
  for (int t = 0; t < n; ++t) qv[t] = (*s.q)[t].at(x, y);
  const Eigen::Vector2d px(x, y);

  const bool has_cur = s.depth->is_valid(x, y);
  double best = has_cur ? s.depth->at(x, y) : 0.0;
  double best_score = has_cur ? score_candidate(s, px, best, {qv, size_t(n)})
                              : -std::numeric_limits<double>::infinity();

  if (nbr_valid && (!has_cur || nbr != best)) {
    const double sc = score_candidate(s, px, nbr, {qv, size_t(n)});
    if (sc > best_score) {
      best_score = sc;
      best = nbr;
    }
  }
  // Always drawn so the random stream does not depend on data.
  const double smp = 1.0 / std::uniform_real_distribution<double>(s.inv_lo, s.inv_hi)(rng);
  const double sc = score_candidate(s, px, smp, {qv, size_t(n)});
  if (sc > best_score) {
    best_score = sc;
    best = smp;
  }

  if (best > 0.0 && std::isfinite(best_score)) {
    s.depth->set(x, y, best);
    nbr = best;
    nbr_valid = true;
  } else if (has_cur) {
    nbr = s.depth->at(x, y);
    nbr_valid = true;
  } else {
    nbr_valid = false;
  }
}

}  // namespace

void update_depth_map(const TrackContext& ctx, const RigidnessMaps& q, DepthMap& depth,
                      std::mt19937_64& rng, const DepthUpdateOptions& opt) {
  double d_min = opt.d_min, d_max = opt.d_max;
  if (d_min <= 0.0 || d_max <= 0.0) {
    const double med = depth.median();
    const double base = med > 0.0 ? med : 1.0;
    d_min = 0.1 * base;
    d_max = 10.0 * base;
  }
  SweepState s{&ctx, &q, &depth, opt.criterion, 1.0 / d_max, 1.0 / d_min};

  static const std::vector<SweepDirection> kAll = {
      SweepDirection::kLeftRight, SweepDirection::kRightLeft, SweepDirection::kTopBottom,
      SweepDirection::kBottomTop};
  const auto& dirs = opt.directions.empty() ? kAll : opt.directions;

  const int w = depth.width, h = depth.height;
  for (const auto dir : dirs) {
    const bool horizontal =
        dir == SweepDirection::kLeftRight || dir == SweepDirection::kRightLeft;
    const int chains = horizontal ? h : w;
    const int len = horizontal ? w : h;
    const bool forward =
        dir == SweepDirection::kLeftRight || dir == SweepDirection::kTopBottom;
    for (int c = 0; c < chains; ++c) {
      double nbr = 0.0;
      bool nbr_valid = false;
      for (int i = 0; i < len; ++i) {
        const int k = forward ? i : len - 1 - i;
        const int x = horizontal ? k : c;
        const int y = horizontal ? c : k;
        process_pixel(s, x, y, nbr, nbr_valid, rng);
      }
    }
  }
}

}  // namespace flowvo
