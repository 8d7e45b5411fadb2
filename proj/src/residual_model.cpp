#include "flowvo/residual_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <limits>

#include "flowvo/errors.hpp"

namespace flowvo {

namespace {

double log1pexp(double z) {
  if (z > 35.0) return z;
  if (z < -35.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

}  // namespace

double fisk_pdf(double x, const FiskParams& p) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) {
    if (p.beta > 1.0) return 0.0;
    if (p.beta == 1.0) return 1.0 / p.alpha;
    return std::numeric_limits<double>::infinity();
  }
  const double r = x / p.alpha;
  const double rb = std::pow(r, p.beta);
  const double denom = (1.0 + rb) * (1.0 + rb);
  return (p.beta / p.alpha) * std::pow(r, p.beta - 1.0) / denom;
}

double fisk_log_pdf(double x, const FiskParams& p) {
  x = std::max(x, kMinEpe);
  const double z = p.beta * (std::log(x) - std::log(p.alpha));
  return std::log(p.beta) - std::log(x) + z - 2.0 * log1pexp(z);
}

double fisk_cdf(double x, const FiskParams& p) {
  if (x <= 0.0) return 0.0;
  const double z = p.beta * (std::log(x) - std::log(p.alpha));
  // sigmoid(z)
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double fisk_quantile(double p_quantile, const FiskParams& p) {
  return p.alpha * std::pow(p_quantile / (1.0 - p_quantile), 1.0 / p.beta);
}

double fisk_sample(std::mt19937_64& rng, const FiskParams& p) {
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  return fisk_quantile(u(rng), p);
}

double half_normal_pdf(double x, double sigma) {
  if (x < 0.0) return 0.0;
  const double z = x / sigma;
  return std::sqrt(2.0 / std::numbers::pi) / sigma * std::exp(-0.5 * z * z);
}

double half_normal_log_pdf(double x, double sigma) {
  const double z = x / sigma;
  return 0.5 * std::log(2.0 / std::numbers::pi) - std::log(sigma) - 0.5 * z * z;
}

double half_normal_cdf(double x, double sigma) {
  if (x <= 0.0) return 0.0;
  return std::erf(x / (sigma * std::numbers::sqrt2));
}

FiskParams adaptive_params(const ResidualModel& m, double flow_mag) {
  return {std::max(m.a1 * std::exp(m.a2 * flow_mag), kMinAlpha),
          std::max(m.b1 * flow_mag + m.b2, kMinBeta)};
}

double rho(const ResidualModel& m, const Eigen::Vector2d& rigid,
           const Eigen::Vector2d& observed) {
  const double epe = (rigid - observed).norm();
  const double mag = observed.norm();
  if (m.family == ResidualFamily::kGaussian) {
    return half_normal_pdf(epe, std::max(m.a1 * std::exp(m.a2 * mag), kMinAlpha));
  }
  return fisk_pdf(epe, adaptive_params(m, mag));
}

double outlier_density(const ResidualModel& m, const Eigen::Vector2d& observed) {
  const double mag = observed.norm();
  if (m.family == ResidualFamily::kGaussian) {
    return half_normal_pdf(m.lambda * mag, std::max(m.a1 * std::exp(m.a2 * mag), kMinAlpha));
  }
  return fisk_pdf(m.lambda * mag, adaptive_params(m, mag));
}

double log_rho(const ResidualModel& m, double epe, double mag) {
  if (m.family == ResidualFamily::kGaussian) {
    return half_normal_log_pdf(epe, std::max(m.a1 * std::exp(m.a2 * mag), kMinAlpha));
  }
  return fisk_log_pdf(epe, adaptive_params(m, mag));
}

double log_outlier_density(const ResidualModel& m, double mag) {
  return log_rho(m, m.lambda * mag, mag);
}

namespace {

// Fisk log-likelihood with precomputed log-samples.
double fisk_loglik(std::span<const double> log_x, double log_alpha, double beta) {
  double acc = 0.0;
  for (double lx : log_x) {
    const double z = beta * (lx - log_alpha);
    acc += z - 2.0 * log1pexp(z);
  }
  const double n = double(log_x.size());
  double sum_log_x = 0.0;
  for (double lx : log_x) sum_log_x += lx;
  return n * std::log(beta) - sum_log_x + acc;
}

// Golden-section maximization on [lo, hi].
double golden_max(const std::function<double(double)>& f, double lo, double hi, int iters) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc > fd ? c : d;
}

}  // namespace

FiskParams fisk_mle(std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (!(median > 0.0) || sorted.front() == sorted.back()) {
    throw InsufficientDataError("fisk_mle: degenerate sample spread");
  }
  std::vector<double> log_x(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i) log_x[i] = std::log(std::max(sorted[i], 1e-300));

  double log_alpha = std::log(median);
  double beta = 1.0;
  const double log_beta_lo = std::log(kMinBeta), log_beta_hi = std::log(50.0);
  for (int it = 0; it < 50; ++it) {
    const double span_a = 2.5 / (1.0 + 0.25 * it);  // shrinking bracket
    log_alpha = golden_max(
        [&](double la) { return fisk_loglik(log_x, la, beta); }, log_alpha - span_a,
        log_alpha + span_a, 24);
    const double lb = std::log(beta);
    const double span_b = 1.5 / (1.0 + 0.25 * it);
    const double new_lb = golden_max(
        [&](double v) {
          return fisk_loglik(log_x, log_alpha, std::exp(v));
        },
        std::max(log_beta_lo, lb - span_b), std::min(log_beta_hi, lb + span_b), 24);
    beta = std::exp(new_lb);
  }
  return {std::exp(log_alpha), beta};
}

std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  const double b = (n * sxy - sx * sy) / denom;
  const double a = (sy - b * sx) / n;
  return {a, b};
}

ResidualFit fit_residual_model(std::span<const ResidualSample> samples, int n_bins,
                               double mag_max) {
  std::vector<std::vector<double>> bins(n_bins);
  const double w = mag_max / n_bins;
  for (const auto& s : samples) {
    if (s.flow_mag < 0.0 || s.flow_mag >= mag_max) continue;
    bins[int(s.flow_mag / w)].push_back(s.epe);
  }

  ResidualFit fit;
  std::vector<double> centers, log_alphas, betas;
  for (int k = 0; k < n_bins; ++k) {
    if (int(bins[k].size()) < kMinBinSamples) continue;
    const auto [mn, mx] = std::minmax_element(bins[k].begin(), bins[k].end());
    if (*mn == *mx) continue;  // degenerate MLE
    FiskParams p;
    try {
      p = fisk_mle(bins[k]);
    } catch (const InsufficientDataError&) {
      continue;
    }
    const double center = (k + 0.5) * w;
    fit.bins.push_back({center, p, int(bins[k].size())});
    centers.push_back(center);
    log_alphas.push_back(std::log(p.alpha));
    betas.push_back(p.beta);
  }
  if (fit.bins.size() < 3) {
    throw InsufficientDataError("fit_residual_model: fewer than 3 usable magnitude bins");
  }

  const auto [la, a2] = linear_fit(centers, log_alphas);
  const auto [b2, b1] = linear_fit(centers, betas);
  fit.model.a1 = std::exp(la);
  fit.model.a2 = a2;
  fit.model.b1 = b1;
  fit.model.b2 = b2;
  return fit;
}

double ks_statistic(std::span<const double> sorted_samples,
                    const std::function<double(double)>& cdf) {
  const double n = double(sorted_samples.size());
  double d = 0.0;
  for (size_t i = 0; i < sorted_samples.size(); ++i) {
    const double f = cdf(sorted_samples[i]);
    d = std::max(d, std::max(f - double(i) / n, double(i + 1) / n - f));
  }
  return d;
}

double ks_statistic(std::span<const double> sorted_samples, const FiskParams& p) {
  return ks_statistic(sorted_samples, [&](double x) { return fisk_cdf(x, p); });
}

}  // namespace flowvo
