#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "flowvo/errors.hpp"
#include "flowvo/residual_model.hpp"

using namespace flowvo;

namespace {

// Quadrature oracle: piecewise Gauss-Legendre on geometric segments spanning
// essentially the whole mass, independent of the closed-form CDF.
double integrate_pdf(const FiskParams& p) {
  // 16-point Gauss-Legendre nodes/weights on [-1, 1].
  static const double nodes[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                  0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                  0.9445750230732326, 0.9894009349916499};
  static const double weights[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                    0.0622535239386479, 0.0271524594117541};
  // Bounds holding all but ~1e-10 of the mass on each side.
  const double x_lo = p.alpha * std::pow(1e-10, 1.0 / p.beta);
  const double x_hi = p.alpha * std::pow(1e10, 1.0 / p.beta);
  double acc = 0.0;
  double a = x_lo;
  while (a < x_hi) {
    const double b = std::min(a * 1.5, x_hi);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int k = 0; k < 8; ++k) {
      acc += half * weights[k] * fisk_pdf(mid - half * nodes[k], p);
      acc += half * weights[k] * fisk_pdf(mid + half * nodes[k], p);
    }
    a = b;
  }
  return acc;
}

}  // namespace

TEST_CASE("fisk_pdf: closed-form spot values") {
  CHECK(fisk_pdf(1.0, {1.0, 1.0}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(fisk_pdf(0.0, {1.0, 2.0}) == 0.0);
}

TEST_CASE("fisk_pdf: quadrature normalizes to one over the operating envelope") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ua(-2.0, 2.0);  // log10 alpha
  std::uniform_real_distribution<double> ub(0.3, 3.0);
  for (int i = 0; i < 20; ++i) {
    const FiskParams p{std::pow(10.0, ua(rng)), ub(rng)};
    CHECK(integrate_pdf(p) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Envelope corners: the beta floor and a large adaptive alpha.
  CHECK(integrate_pdf({0.01, kMinBeta}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(integrate_pdf({81.03, 0.78}) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fisk_cdf: median, monotonicity, derivative matches pdf") {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> ua(0.01, 50.0), ub(0.3, 4.0), ux(0.0, 100.0);
  for (int i = 0; i < 50; ++i) {
    const FiskParams p{ua(rng), ub(rng)};
    CHECK(fisk_cdf(p.alpha, p) == doctest::Approx(0.5).epsilon(1e-12));
  }
  for (int i = 0; i < 1000; ++i) {
    const FiskParams p{ua(rng), ub(rng)};
    const double x1 = ux(rng), x2 = ux(rng);
    const double lo = std::min(x1, x2), hi = std::max(x1, x2);
    CHECK(fisk_cdf(lo, p) <= fisk_cdf(hi, p));
  }
  // Central finite differences away from the origin.
  for (int i = 0; i < 50; ++i) {
    const FiskParams p{ua(rng), 1.0 + ub(rng)};
    const double x = p.alpha * (0.5 + ux(rng) / 50.0);
    const double h = 1e-6 * std::max(1.0, x);
    const double num = (fisk_cdf(x + h, p) - fisk_cdf(x - h, p)) / (2.0 * h);
    CHECK(num == doctest::Approx(fisk_pdf(x, p)).epsilon(1e-5));
  }
}

TEST_CASE("adaptive_params: calibration constants and the beta floor") {
  const ResidualModel m;  // defaults are the published calibration
  const FiskParams p0 = adaptive_params(m, 0.0);
  CHECK(p0.alpha == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(p0.beta == doctest::Approx(1.0).epsilon(1e-12));

  const FiskParams p100 = adaptive_params(m, 100.0);
  CHECK(p100.alpha == doctest::Approx(0.01 * std::exp(9.0)).epsilon(1e-12));
  CHECK(p100.alpha == doctest::Approx(81.03).epsilon(1e-3));
  CHECK(p100.beta == doctest::Approx(0.78).epsilon(1e-12));

  ResidualModel steep;
  steep.b1 = -0.01;
  steep.b2 = 0.5;
  CHECK(adaptive_params(steep, 100.0).beta == doctest::Approx(kMinBeta));

  // alpha monotone in magnitude when a2 > 0.
  double prev = 0.0;
  for (double mag = 0.0; mag <= 100.0; mag += 5.0) {
    const double a = adaptive_params(m, mag).alpha;
    CHECK(a > prev);
    prev = a;
  }
}

TEST_CASE("rho: compositional definition and sign symmetry") {
  const ResidualModel m;
  const Eigen::Vector2d obs(3.0, -4.0);
  const Eigen::Vector2d rigid(3.5, -4.2);
  const double epe = (rigid - obs).norm();
  CHECK(rho(m, rigid, obs) == fisk_pdf(epe, adaptive_params(m, obs.norm())));
  CHECK(rho(m, rigid, obs) == rho(m, obs + (obs - rigid), obs));
  CHECK(rho(m, obs, obs) == fisk_pdf(0.0, adaptive_params(m, obs.norm())));
}

TEST_CASE("outlier_density: definition, posterior 0.5 at the lambda level, invariance") {
  const ResidualModel m;  // lambda = 0.15
  const Eigen::Vector2d obs(6.0, 8.0);
  CHECK(outlier_density(m, obs) == fisk_pdf(1.5, adaptive_params(m, 10.0)));

  // A rigid hypothesis at EPE = lambda*|obs| is an indistinguishable outlier.
  const Eigen::Vector2d rigid = obs + Eigen::Vector2d(m.lambda * obs.norm(), 0.0);
  const double r = rho(m, rigid, obs);
  const double u = outlier_density(m, obs);
  CHECK(r == u);
  CHECK(r / (r + u) == doctest::Approx(0.5));

  // mu never reads the rigid argument: rho against wildly different rigid
  // hypotheses shares one and the same outlier level.
  CHECK(log_outlier_density(m, obs.norm()) ==
        doctest::Approx(std::log(outlier_density(m, obs))).epsilon(1e-9));
}

TEST_CASE("fit_residual_model: recovers planted constants from sampled residuals") {
  const double a1 = 0.02, a2 = 0.05, b1 = -0.001, b2 = 1.2;
  ResidualModel planted;
  planted.a1 = a1;
  planted.a2 = a2;
  planted.b1 = b1;
  planted.b2 = b2;

  std::mt19937_64 rng(999);
  std::uniform_real_distribution<double> umag(0.0, 100.0);
  std::vector<ResidualSample> samples;
  samples.reserve(100000);
  for (int i = 0; i < 100000; ++i) {
    const double mag = umag(rng);
    samples.push_back({mag, fisk_sample(rng, adaptive_params(planted, mag))});
  }
  const ResidualFit fit = fit_residual_model(samples, 10, 100.0);
  CHECK(fit.model.a1 == doctest::Approx(a1).epsilon(0.10));
  CHECK(fit.model.a2 == doctest::Approx(a2).epsilon(0.10));
  CHECK(fit.model.b1 == doctest::Approx(b1).epsilon(0.10));
  CHECK(fit.model.b2 == doctest::Approx(b2).epsilon(0.10));
}

TEST_CASE("fit_residual_model: identical residuals exercise the insufficient-data path") {
  std::vector<ResidualSample> samples;
  for (int i = 0; i < 5000; ++i) samples.push_back({double(i % 100), 0.25});
  CHECK_THROWS_AS(fit_residual_model(samples, 10, 100.0), InsufficientDataError);
}

TEST_CASE("regression stage: exact log-linear data reproduces constants to 1e-9") {
  const double a1 = 0.015, a2 = 0.07;
  std::vector<double> mags, logalphas;
  for (double mag = 5.0; mag <= 95.0; mag += 10.0) {
    mags.push_back(mag);
    logalphas.push_back(std::log(a1) + a2 * mag);
  }
  const auto [intercept, slope] = linear_fit(mags, logalphas);
  CHECK(std::exp(intercept) == doctest::Approx(a1).epsilon(1e-9));
  CHECK(slope == doctest::Approx(a2).epsilon(1e-9));
}

TEST_CASE("ks_statistic: single sample at the median and self-test at n=1e4") {
  const FiskParams ref{2.0, 1.5};
  const std::vector<double> single = {ref.alpha};
  CHECK(ks_statistic(single, ref) == doctest::Approx(0.5).epsilon(1e-12));

  std::mt19937_64 rng(4242);
  std::vector<double> samples(10000);
  for (auto& s : samples) s = fisk_sample(rng, ref);
  std::sort(samples.begin(), samples.end());
  CHECK(ks_statistic(samples, ref) < 0.02);

  // Half-normal samples against the Fisk reference fit clearly worse.
  std::normal_distribution<double> gauss(0.0, ref.alpha / 0.6745);
  std::vector<double> gsamples(10000);
  for (auto& s : gsamples) s = std::abs(gauss(rng));
  std::sort(gsamples.begin(), gsamples.end());
  CHECK(ks_statistic(gsamples, ref) > ks_statistic(samples, ref));
}
