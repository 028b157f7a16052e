#include "vaxmap/polya_gamma.hpp"

#include <cmath>
#include <numbers>

namespace vaxmap {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;

// n-th coefficient of the Jacobi alternating series at x.
double series_term(int n, double x) {
  const double k = n + 0.5;
  if (x > kTrunc) return kPi * k * std::exp(-0.5 * k * k * kPi * kPi * x);
  return std::pow(2.0 / (kPi * x), 1.5) * kPi * k * std::exp(-2.0 * k * k / x);
}

double log_normal_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// Probability of taking the exponential branch of the proposal.
double exponential_branch_mass(double z) {
  const double fz = kPi * kPi / 8.0 + 0.5 * z * z;
  const double root_t = std::sqrt(1.0 / kTrunc);
  const double b = root_t * (kTrunc * z - 1.0);
  const double a = -root_t * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

}  // namespace

double PolyaGammaSampler::truncated_inverse_gaussian(double z, Rng& rng) {
  const double mu = 1.0 / z;
  double x = kTrunc + 1.0;
  if (mu > kTrunc) {
    double alpha = 0.0;
    while (uniform01(rng) > alpha) {
      double e1 = exponential_(rng);
      double e2 = exponential_(rng);
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = exponential_(rng);
        e2 = exponential_(rng);
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    while (x > kTrunc) {
      const double n = normal_(rng);
      const double y = n * n;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (uniform01(rng) > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

double PolyaGammaSampler::draw_one(double z, Rng& rng) { return draw(1, z, rng); }

double PolyaGammaSampler::draw(int b, double z, Rng& rng) {
  z = 0.5 * std::abs(z);
  const double fz = kPi * kPi / 8.0 + 0.5 * z * z;
  const double mass = exponential_branch_mass(z);
  double sum = 0.0;
  for (int i = 0; i < b; ++i) {
    for (bool done = false; !done;) {
      double x;
      if (uniform01(rng) < mass)
        x = kTrunc + exponential_(rng) / fz;
      else
        x = truncated_inverse_gaussian(z, rng);

      double s = series_term(0, x);
      const double y = uniform01(rng) * s;
      for (int n = 1;; ++n) {
        if (n % 2 == 1) {
          s -= series_term(n, x);
          if (y <= s) {
            sum += 0.25 * x;
            done = true;
            break;
          }
        } else {
          s += series_term(n, x);
          if (y > s) break;
        }
      }
    }
  }
  return sum;
}

double PolyaGammaSampler::mean(double b, double z) {
  if (std::abs(z) < 1e-8) return b / 4.0;
  return b / (2.0 * z) * std::tanh(0.5 * z);
}

double PolyaGammaSampler::variance(double b, double z) {
  if (std::abs(z) < 1e-4) return b / 24.0;
  const double c = std::cosh(0.5 * z);
  return b / (4.0 * z * z * z) * (std::sinh(z) - z) / (c * c);
}

}  // namespace vaxmap
