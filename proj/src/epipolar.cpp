#include "flowvo/epipolar.hpp"

#include <algorithm>
#include <optional>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "flowvo/errors.hpp"
#include "flowvo/triangulation.hpp"

namespace flowvo {

double sampson_error_sq(const Eigen::Matrix3d& E, const Eigen::Vector2d& x0,
                        const Eigen::Vector2d& x1) {
  const Eigen::Vector3d p0(x0.x(), x0.y(), 1.0);
  const Eigen::Vector3d p1(x1.x(), x1.y(), 1.0);
  const Eigen::Vector3d Ep0 = E * p0;
  const Eigen::Vector3d Etp1 = E.transpose() * p1;
  const double c = p1.dot(Ep0);
  const double denom = Ep0.head<2>().squaredNorm() + Etp1.head<2>().squaredNorm();
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return c * c / denom;
}

namespace {

struct Correspondence {
  Eigen::Vector2d x0, x1;  // normalized camera coordinates
};

// Hartley conditioning transform for a point subset.
Eigen::Matrix3d conditioning(const std::vector<Correspondence>& corr,
                             const std::vector<int>& idx, bool second) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int i : idx) mean += second ? corr[i].x1 : corr[i].x0;
  mean /= double(idx.size());
  double scale = 0;
  for (int i : idx) scale += ((second ? corr[i].x1 : corr[i].x0) - mean).norm();
  scale /= double(idx.size());
  const double s = scale > 1e-12 ? std::sqrt(2.0) / scale : 1.0;
  Eigen::Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

// Linear 8-point essential fit on the given subset, with conditioning and
// projection onto the essential manifold.
bool eight_point(const std::vector<Correspondence>& corr, const std::vector<int>& idx,
                 Eigen::Matrix3d& E_out) {
  const Eigen::Matrix3d T0 = conditioning(corr, idx, false);
  const Eigen::Matrix3d T1 = conditioning(corr, idx, true);
  Eigen::Matrix<double, Eigen::Dynamic, 9> A(idx.size(), 9);
  for (size_t r = 0; r < idx.size(); ++r) {
    const Eigen::Vector3d a0 = T0 * Eigen::Vector3d(corr[idx[r]].x0.x(), corr[idx[r]].x0.y(), 1);
    const Eigen::Vector3d a1 = T1 * Eigen::Vector3d(corr[idx[r]].x1.x(), corr[idx[r]].x1.y(), 1);
    A.row(r) << a1.x() * a0.x(), a1.x() * a0.y(), a1.x(), a1.y() * a0.x(), a1.y() * a0.y(),
        a1.y(), a0.x(), a0.y(), 1.0;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  if (svd.rank() < 8) return false;
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d E;
  E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  E = T1.transpose() * E * T0;
  const Eigen::JacobiSVD<Eigen::Matrix3d> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  E_out = esvd.matrixU() * Eigen::Vector3d(1, 1, 0).asDiagonal() * esvd.matrixV().transpose();
  return E_out.allFinite();
}

}  // namespace

Pose epipolar_bootstrap(const FlowField& flow, const Intrinsics& K, int stride,
                        std::mt19937_64& rng, const EpipolarOptions& opt) {
  std::vector<Correspondence> corr;
  for (int y = 0; y < flow.height; y += stride) {
    for (int x = 0; x < flow.width; x += stride) {
      if (!flow.valid[flow.index(x, y)]) continue;
      const Eigen::Vector2d p0(x, y);
      const Eigen::Vector2d p1 = p0 + flow.at(x, y);
      corr.push_back({K.unproject(p0).head<2>(), K.unproject(p1).head<2>()});
    }
  }
  if (corr.size() < 200) {
    throw EstimationError("epipolar bootstrap: too few correspondences");
  }

  const int n = int(corr.size());
  std::vector<double> errs(corr.size());
  std::vector<int> sample(8);
  std::vector<int> all(corr.size());
  for (int i = 0; i < n; ++i) all[i] = i;

  struct Trial {
    double median;
    Eigen::Matrix3d E;
  };
  std::vector<Trial> trials;
  trials.reserve(opt.trials);
  for (int trial = 0; trial < opt.trials; ++trial) {
    // Distinct indices by partial Fisher-Yates.
    for (int k = 0; k < 8; ++k) {
      std::uniform_int_distribution<int> d(k, n - 1);
      std::swap(all[k], all[d(rng)]);
      sample[k] = all[k];
    }
    Eigen::Matrix3d E;
    if (!eight_point(corr, sample, E)) continue;
    for (size_t i = 0; i < corr.size(); ++i) errs[i] = sampson_error_sq(E, corr[i].x0, corr[i].x1);
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    trials.push_back({errs[errs.size() / 2], E});
  }
  std::stable_sort(trials.begin(), trials.end(),
                   [](const Trial& a, const Trial& b) { return a.median < b.median; });

  const double sampson_thresh = std::pow(opt.max_median_sampson_px / K.fx, 2);
  if (trials.empty() || trials.front().median > sampson_thresh) {
    throw EstimationError("degenerate-motion: no essential model fits the flow");
  }

  // LMedS finish. A minimal fit pins the translation direction poorly: the
  // Sampson objective has a long rotation-vs-lateral-translation valley at
  // this field of view, and linear refits cannot track it. Each leading
  // trial therefore gets (a) iterated gate-and-refit rounds, (b) a cheirality
  // decomposition, and (c) a Gauss-Newton descent over (R, t-direction) with
  // re-gating. The polished leaders are compared by inlier support at a
  // common gate; ties fall back to the median.
  auto robust_gate = [&](double median) {
    const double sigma = 1.4826 * (1.0 + 5.0 / double(n - 8)) * std::sqrt(median);
    return std::max(std::pow(2.5 * sigma, 2), 1e-14);
  };
  auto median_of = [&](const Eigen::Matrix3d& E) {
    for (size_t i = 0; i < corr.size(); ++i)
      errs[i] = sampson_error_sq(E, corr[i].x0, corr[i].x1);
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    return errs[errs.size() / 2];
  };
  auto make_E = [](const Pose& p) { return Eigen::Matrix3d(skew(p.t.normalized()) * p.R); };

  const Intrinsics unit{1.0, 1.0, 0.0, 0.0};
  const int step = std::max(1, n / opt.cheirality_subsample);
  auto decompose_vote = [&](const Eigen::Matrix3d& E) -> std::optional<Pose> {
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU();
    Eigen::Matrix3d V = svd.matrixV();
    if (U.determinant() < 0) U.col(2) *= -1;
    if (V.determinant() < 0) V.col(2) *= -1;
    Eigen::Matrix3d W;
    W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Eigen::Matrix3d R1 = U * W * V.transpose();
    const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
    const Eigen::Vector3d t = U.col(2);
    const std::array<Pose, 4> candidates = {Pose{R1, t}, Pose{R1, -t}, Pose{R2, t},
                                            Pose{R2, -t}};
    std::array<int, 4> votes{};
    int checked = 0;
    for (int i = 0; i < n; i += step) {
      ++checked;
      for (int c = 0; c < 4; ++c) {
        const auto tri = triangulate(unit, candidates[c], corr[i].x0, corr[i].x1);
        if (!tri || tri->depth <= 0.0) continue;
        const Eigen::Vector3d p0(corr[i].x0.x() * tri->depth, corr[i].x0.y() * tri->depth,
                                 tri->depth);
        if (candidates[c].apply(p0).z() > 0.0) ++votes[c];
      }
    }
    int best_c = 0;
    for (int c = 1; c < 4; ++c)
      if (votes[c] > votes[best_c]) best_c = c;
    int second = -1;
    for (int c = 0; c < 4; ++c)
      if (c != best_c && (second < 0 || votes[c] > votes[second])) second = c;
    if (votes[best_c] < checked / 2 || votes[second] * 5 >= votes[best_c] * 4) {
      return std::nullopt;
    }
    return candidates[best_c];
  };

  auto gn_polish = [&](Pose pose, const std::vector<int>& inliers) -> Pose {
    auto cost = [&](const Pose& p) {
      const Eigen::Matrix3d E = make_E(p);
      double acc = 0.0;
      for (int i : inliers) acc += sampson_error_sq(E, corr[i].x0, corr[i].x1);
      return acc;
    };
    double lambda = 1e-6;
    double cur = cost(pose);
    for (int it = 0; it < 30; ++it) {
      const Eigen::Vector3d tu = pose.t.normalized();
      const Eigen::Vector3d any =
          std::abs(tu.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
      const Eigen::Vector3d b1 = tu.cross(any).normalized();
      const Eigen::Vector3d b2 = tu.cross(b1).normalized();
      const int m = int(inliers.size());
      Eigen::VectorXd r(m);
      Eigen::MatrixXd J(m, 5);
      const Eigen::Matrix3d E0 = make_E(pose);
      for (int k = 0; k < m; ++k)
        r(k) = std::sqrt(sampson_error_sq(E0, corr[inliers[k]].x0, corr[inliers[k]].x1));
      const double h = 1e-7;
      for (int p = 0; p < 5; ++p) {
        Pose probe = pose;
        if (p < 3) {
          Eigen::Vector3d w = Eigen::Vector3d::Zero();
          w[p] = h;
          probe.R = so3_exp(w) * pose.R;
        } else {
          probe.t = (tu + h * (p == 3 ? b1 : b2)).normalized();
        }
        const Eigen::Matrix3d Es = make_E(probe);
        for (int k = 0; k < m; ++k) {
          J(k, p) =
              (std::sqrt(sampson_error_sq(Es, corr[inliers[k]].x0, corr[inliers[k]].x1)) -
               r(k)) /
              h;
        }
      }
      const Eigen::Matrix<double, 5, 5> H =
          J.transpose() * J + lambda * Eigen::Matrix<double, 5, 5>::Identity();
      const Eigen::Matrix<double, 5, 1> dx = H.ldlt().solve(-J.transpose() * r);
      Pose trial = pose;
      trial.R = so3_exp(Eigen::Vector3d(dx[0], dx[1], dx[2])) * pose.R;
      trial.t = (tu + dx[3] * b1 + dx[4] * b2).normalized();
      const double c_trial = cost(trial);
      if (c_trial < cur) {
        pose = trial;
        cur = c_trial;
        lambda = std::max(lambda * 0.5, 1e-9);
        if (dx.norm() < 1e-10) break;
      } else {
        lambda *= 8.0;
        if (lambda > 1e3) break;
      }
    }
    pose.t = pose.t.normalized();
    return pose;
  };

  struct Finalist {
    Pose pose;
    double median;
  };
  std::vector<Finalist> finalists;
  const int leaders = int(std::min<size_t>(trials.size(), 24));
  for (int c = 0; c < leaders; ++c) {
    for (int round = 0; round < 4; ++round) {
      const double gate = robust_gate(trials[c].median);
      std::vector<int> inliers;
      for (int i = 0; i < n; ++i) {
        if (sampson_error_sq(trials[c].E, corr[i].x0, corr[i].x1) <= gate) inliers.push_back(i);
      }
      Eigen::Matrix3d refit;
      if (int(inliers.size()) < 8 || !eight_point(corr, inliers, refit)) break;
      const double med = median_of(refit);
      if (med >= trials[c].median) break;
      trials[c].median = med;
      trials[c].E = refit;
    }

    auto pose_c = decompose_vote(trials[c].E);
    if (!pose_c) continue;
    double med = trials[c].median;
    for (int round = 0; round < 2; ++round) {
      const double gate = robust_gate(med);
      std::vector<int> inliers;
      const Eigen::Matrix3d E = make_E(*pose_c);
      for (int i = 0; i < n; ++i) {
        if (sampson_error_sq(E, corr[i].x0, corr[i].x1) <= gate) inliers.push_back(i);
      }
      if (int(inliers.size()) < 16) break;
      pose_c = gn_polish(*pose_c, inliers);
      med = median_of(make_E(*pose_c));
    }
    finalists.push_back({*pose_c, med});
  }
  if (finalists.empty()) {
    throw EstimationError("degenerate-motion: ambiguous cheirality");
  }

  double floor_median = std::numeric_limits<double>::infinity();
  for (const auto& f : finalists) floor_median = std::min(floor_median, f.median);
  Pose pose = finalists.front().pose;
  double best_median = finalists.front().median;
  {
    const double common_gate = robust_gate(floor_median);
    long best_count = -1;
    for (const auto& f : finalists) {
      const Eigen::Matrix3d E = make_E(f.pose);
      long count = 0;
      for (const auto& cr : corr) {
        if (sampson_error_sq(E, cr.x0, cr.x1) <= common_gate) ++count;
      }
      if (count > best_count || (count == best_count && f.median < best_median)) {
        best_count = count;
        pose = f.pose;
        best_median = f.median;
      }
    }
  }
  if (best_median > sampson_thresh) {
    throw EstimationError("degenerate-motion: no consistent essential model");
  }

  // Rotation-compensated parallax; pure rotation or zero flow must not pass.
  std::vector<double> residual(corr.size());
  for (size_t i = 0; i < corr.size(); ++i) {
    const Eigen::Vector3d r = pose.R * Eigen::Vector3d(corr[i].x0.x(), corr[i].x0.y(), 1.0);
    residual[i] = r.z() > 1e-9
                      ? (corr[i].x1 - Eigen::Vector2d(r.x() / r.z(), r.y() / r.z())).norm()
                      : 0.0;
  }
  std::nth_element(residual.begin(), residual.begin() + residual.size() / 2, residual.end());
  if (residual[residual.size() / 2] < opt.min_parallax) {
    throw EstimationError("degenerate-motion: insufficient parallax");
  }
  return pose;
}

}  // namespace flowvo
