#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace flowvo {

struct FiskParams {
  double alpha;  // scale, px
  double beta;   // shape
};

inline constexpr double kMinAlpha = 1e-6;
inline constexpr double kMinBeta = 0.1;
// EPE below sub-pixel resolution is treated as indistinguishable; keeps the
// beta < 1 density (and every log-density) finite at zero.
inline constexpr double kMinEpe = 1e-4;

// Residual density family. The Gaussian branch reuses the (a1, a2) scale
// regression as a half-normal sigma and exists for the ablation harness.
enum class ResidualFamily { kFisk, kGaussian };

// The learned observation model: magnitude-conditioned Fisk parameters plus
// the outlier level. Defaults are the PWC-Net calibration used throughout.
struct ResidualModel {
  double a1 = 0.01;
  double a2 = 0.09;
  double b1 = -0.0022;
  double b2 = 1.0;
  double lambda = 0.15;
  ResidualFamily family = ResidualFamily::kFisk;
};

// The exact normalized density; diverges at x = 0 for beta < 1.
double fisk_pdf(double x, const FiskParams& p);
// Inference-path evaluation: clamps x at kMinEpe so log-densities stay finite.
double fisk_log_pdf(double x, const FiskParams& p);
double fisk_cdf(double x, const FiskParams& p);
double fisk_quantile(double p_quantile, const FiskParams& p);
double fisk_sample(std::mt19937_64& rng, const FiskParams& p);

double half_normal_pdf(double x, double sigma);
double half_normal_log_pdf(double x, double sigma);
double half_normal_cdf(double x, double sigma);

FiskParams adaptive_params(const ResidualModel& m, double flow_mag);

// Inlier density rho(rigid || observed): family density of the end-point
// error under the magnitude-conditioned parameters.
double rho(const ResidualModel& m, const Eigen::Vector2d& rigid, const Eigen::Vector2d& observed);
// Outlier density mu(observed): the same density evaluated at lambda*|observed|;
// constant w.r.t. the rigid-flow hypothesis.
double outlier_density(const ResidualModel& m, const Eigen::Vector2d& observed);

// Log-space versions used by inference (epe = |rigid - observed|, mag = |observed|).
double log_rho(const ResidualModel& m, double epe, double mag);
double log_outlier_density(const ResidualModel& m, double mag);

struct ResidualSample {
  double flow_mag;
  double epe;
};

struct BinFit {
  double mag_center;
  FiskParams params;
  int count;
};

struct ResidualFit {
  ResidualModel model;
  std::vector<BinFit> bins;
};

inline constexpr int kMinBinSamples = 100;

// Per-bin Fisk MLE over flow-magnitude bins, then log-linear regression of
// alpha and linear regression of beta against magnitude. Bins with fewer than
// kMinBinSamples entries or a degenerate sample spread are dropped; throws
// InsufficientDataError when fewer than 3 bins survive.
ResidualFit fit_residual_model(std::span<const ResidualSample> samples, int n_bins,
                               double mag_max);

// Maximum-likelihood Fisk fit of a flat sample set: coordinate ascent with
// golden-section line searches from (alpha = median, beta = 1).
FiskParams fisk_mle(std::span<const double> samples);

// Least-squares y = a + b*x; returns {a, b}.
std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y);

// Kolmogorov-Smirnov statistic of sorted samples against a reference CDF.
double ks_statistic(std::span<const double> sorted_samples,
                    const std::function<double(double)>& cdf);
double ks_statistic(std::span<const double> sorted_samples, const FiskParams& p);

}  // namespace flowvo
