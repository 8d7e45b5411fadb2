#include "flowvo/p3p.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace flowvo {

namespace {

double eval_poly(const std::array<double, 5>& c, double x) {
  return (((c[4] * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0];
}

double eval_poly_deriv(const std::array<double, 5>& c, double x) {
  return ((4 * c[4] * x + 3 * c[3]) * x + 2 * c[2]) * x + c[1];
}

// Rigid alignment Q_i = R * P_i + t for three point pairs.
Pose absolute_orientation(const std::array<Eigen::Vector3d, 3>& P,
                          const std::array<Eigen::Vector3d, 3>& Q) {
  const Eigen::Vector3d pc = (P[0] + P[1] + P[2]) / 3.0;
  const Eigen::Vector3d qc = (Q[0] + Q[1] + Q[2]) / 3.0;
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) M += (Q[i] - qc) * (P[i] - pc).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    fix(2, 2) = -1;
    R = svd.matrixU() * fix * svd.matrixV().transpose();
  }
  return {R, qc - R * pc};
}

}  // namespace

int solve_quartic(const std::array<double, 5>& coeffs, std::array<double, 4>& roots) {
  // Companion-matrix eigenvalues, then Newton polishing.
  if (std::abs(coeffs[4]) < 1e-30) return 0;
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  C(1, 0) = C(2, 1) = C(3, 2) = 1.0;
  for (int i = 0; i < 4; ++i) C(i, 3) = -coeffs[i] / coeffs[4];
  const Eigen::EigenSolver<Eigen::Matrix4d> es(C, /*computeEigenvectors=*/false);
  int n = 0;
  for (int i = 0; i < 4; ++i) {
    const auto ev = es.eigenvalues()[i];
    // Keep near-real eigenvalues; double roots can pick up small imaginary parts.
    if (std::abs(ev.imag()) > 1e-6 * (1.0 + std::abs(ev.real()))) continue;
    double x = ev.real();
    for (int it = 0; it < 3; ++it) {
      const double f = eval_poly(coeffs, x);
      const double df = eval_poly_deriv(coeffs, x);
      if (std::abs(df) < 1e-300) break;
      const double step = f / df;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots[n++] = x;
  }
  return n;
}

P3PSolutions solve_p3p_bearings(const std::array<Eigen::Vector3d, 3>& points,
                                const std::array<Eigen::Vector3d, 3>& bearings) {
  P3PSolutions out;
  const double area2 = (points[1] - points[0]).cross(points[2] - points[0]).norm();
  if (0.5 * area2 <= kP3PCollinearArea) {
    out.status = P3PStatus::kCollinear;
    return out;
  }

  const Eigen::Vector3d f1 = bearings[0].normalized();
  const Eigen::Vector3d f2 = bearings[1].normalized();
  const Eigen::Vector3d f3 = bearings[2].normalized();

  const double cos_ab = f1.dot(f2);  // opposite side c = |P1P2|
  const double cos_ac = f1.dot(f3);  // opposite side b = |P1P3|
  const double cos_bc = f2.dot(f3);  // opposite side a = |P2P3|

  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  if (b2 <= 0.0) {
    out.status = P3PStatus::kCollinear;
    return out;
  }
  const double m = a2 / b2;
  const double q = c2 / b2;

  // Distance ratios u = s2/s1, v = s3/s1 satisfy
  //   (A) u^2 + v^2 - 2uv*cos_bc = m * G(v)
  //   (B) 1 + u^2 - 2u*cos_ab  = q * G(v)
  // with G(v) = 1 + v^2 - 2v*cos_ac. Eliminating u via
  // u = N(v)/D(v) turns (B) into a quartic in v.
  const std::array<double, 3> G = {1.0, -2.0 * cos_ac, 1.0};
  const std::array<double, 3> N = {(m - q) + 1.0, -2.0 * (m - q) * cos_ac, (m - q) - 1.0};
  const std::array<double, 2> D = {2.0 * cos_ab, -2.0 * cos_bc};

  // Q(v) = D^2 + N^2 - 2*cos_ab*N*D - q*G*D^2, ascending coefficients.
  std::array<double, 5> Q{};
  std::array<double, 3> D2{};  // D^2
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) D2[i + j] += D[i] * D[j];
  for (int i = 0; i < 3; ++i) {
    Q[i] += D2[i];
    for (int j = 0; j < 3; ++j) Q[i + j] += N[i] * N[j];
    for (int j = 0; j < 2; ++j) Q[i + j] -= 2.0 * cos_ab * N[i] * D[j];
    for (int j = 0; j < 3; ++j) Q[i + j] -= q * G[i] * D2[j];
  }

  std::array<double, 4> roots;
  const int n_roots = solve_quartic(Q, roots);

  for (int r = 0; r < n_roots; ++r) {
    const double v = roots[r];
    if (!(v > 0.0) || !std::isfinite(v)) continue;
    const double Gv = (G[2] * v + G[1]) * v + G[0];
    if (!(Gv > 0.0)) continue;

    const double Dv = D[0] + D[1] * v;
    double u_candidates[2];
    int n_u = 0;
    if (std::abs(Dv) > 1e-10) {
      u_candidates[n_u++] = ((N[2] * v + N[1]) * v + N[0]) / Dv;
    } else {
      // Degenerate elimination: fall back to the quadratic (B) in u.
      const double disc = cos_ab * cos_ab - 1.0 + q * Gv;
      if (disc < 0.0) continue;
      u_candidates[n_u++] = cos_ab + std::sqrt(disc);
      u_candidates[n_u++] = cos_ab - std::sqrt(disc);
    }
    for (int k = 0; k < n_u; ++k) {
      double u = u_candidates[k];
      double vv = v;
      if (!(u > 0.0) || !std::isfinite(u)) continue;
      // Joint Newton polish of (A) and (B); tightens near-degenerate cases.
      for (int it = 0; it < 2; ++it) {
        const double Gp = 2.0 * vv - 2.0 * cos_ac;
        const double Gvv = (G[2] * vv + G[1]) * vv + G[0];
        const double fA = u * u + vv * vv - 2.0 * u * vv * cos_bc - m * Gvv;
        const double fB = 1.0 + u * u - 2.0 * u * cos_ab - q * Gvv;
        const double jAu = 2.0 * u - 2.0 * vv * cos_bc;
        const double jAv = 2.0 * vv - 2.0 * u * cos_bc - m * Gp;
        const double jBu = 2.0 * u - 2.0 * cos_ab;
        const double jBv = -q * Gp;
        const double det = jAu * jBv - jAv * jBu;
        if (std::abs(det) < 1e-300) break;
        u -= (fA * jBv - jAv * fB) / det;
        vv -= (jAu * fB - fA * jBu) / det;
      }
      if (!(u > 0.0) || !(vv > 0.0) || !std::isfinite(u) || !std::isfinite(vv)) continue;
      const double Gv2 = (G[2] * vv + G[1]) * vv + G[0];
      if (!(Gv2 > 0.0)) continue;
      // Residual of (A) rejects spurious branches introduced by squaring.
      const double resA = u * u + vv * vv - 2.0 * u * vv * cos_bc - m * Gv2;
      if (std::abs(resA) > 1e-6 * (1.0 + m)) continue;

      const double s1 = std::sqrt(b2 / Gv2);
      const double s2 = u * s1;
      const double s3 = vv * s1;
      const std::array<Eigen::Vector3d, 3> cam_pts = {s1 * f1, s2 * f2, s3 * f3};
      const Pose pose = absolute_orientation(points, cam_pts);

      // Verify the alignment really reproduces the bearings.
      bool ok = true;
      for (int i = 0; i < 3 && ok; ++i) {
        const Eigen::Vector3d pc = pose.apply(points[i]);
        if (!(pc.z() > 0.0)) {
          ok = false;
          break;
        }
        const Eigen::Vector3d f = (i == 0 ? f1 : i == 1 ? f2 : f3);
        ok = (pc.normalized() - f).norm() < 1e-6;
      }
      if (!ok) continue;

      bool dup = false;
      for (int i = 0; i < out.count; ++i) {
        if ((out.poses[i].R - pose.R).norm() < 1e-9 && (out.poses[i].t - pose.t).norm() < 1e-9) {
          dup = true;
          break;
        }
      }
      if (!dup && out.count < 4) out.poses[out.count++] = pose;
    }
  }

  out.status = out.count > 0 ? P3PStatus::kOk : P3PStatus::kNoRealSolution;
  return out;
}

P3PSolutions solve_p3p(const std::array<Eigen::Vector3d, 3>& points,
                       const std::array<Eigen::Vector2d, 3>& pixels, const Intrinsics& K) {
  const std::array<Eigen::Vector3d, 3> bearings = {K.unproject(pixels[0]), K.unproject(pixels[1]),
                                                   K.unproject(pixels[2])};
  P3PSolutions sols = solve_p3p_bearings(points, bearings);
  if (sols.status != P3PStatus::kOk) return sols;

  // Enforce the pixel-space contract.
  P3PSolutions out;
  out.status = P3PStatus::kOk;
  for (int i = 0; i < sols.count; ++i) {
    bool ok = true;
    for (int j = 0; j < 3 && ok; ++j) {
      const Eigen::Vector3d pc = sols.poses[i].apply(points[j]);
      ok = pc.z() > 0.0 && (K.project_point(pc) - pixels[j]).norm() < kP3PReprojTol;
    }
    if (ok && out.count < 4) out.poses[out.count++] = sols.poses[i];
  }
  if (out.count == 0) out.status = P3PStatus::kNoRealSolution;
  return out;
}

}  // namespace flowvo
