#include "vaxmap/coverage_models.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap {

const char* to_string(ModelClass c) {
  switch (c) {
    case ModelClass::BinomialNN: return "BinomialNN";
    case ModelClass::BetaBinomialOD: return "BetaBinomialOD";
    case ModelClass::LonoBinomialOD: return "LonoBinomialOD";
    case ModelClass::BinomialTS: return "BinomialTS";
  }
  return "unknown";
}

ModelClass parse_model_class(const std::string& text) {
  if (text == "BinomialNN") return ModelClass::BinomialNN;
  if (text == "BetaBinomialOD") return ModelClass::BetaBinomialOD;
  if (text == "LonoBinomialOD") return ModelClass::LonoBinomialOD;
  if (text == "BinomialTS") return ModelClass::BinomialTS;
  fail(ErrorKind::Validation, "unknown model class '" + text +
                                  "' (expected BinomialNN, BetaBinomialOD, LonoBinomialOD or BinomialTS)");
}

void PriorSpec::validate() const {
  const bool ok = fixed_sd > 0.0 && log_rho_sd > 0.0 && log_sigma_s_sd > 0.0 && log_d_sd > 0.0 &&
                  log_nugget_sd > 0.0 && (!rho_median || *rho_median > 0.0);
  if (!ok) fail(ErrorKind::Validation, "prior standard deviations (and rho_median) must be positive");
}

double linear_predictor(const ParamVector& p, std::span<const double> x, bool urban, double s_value) {
  if (static_cast<Eigen::Index>(x.size()) != p.beta.size())
    fail(ErrorKind::Dimension, "covariate length " + std::to_string(x.size()) + " does not match beta length " +
                                   std::to_string(p.beta.size()));
  double eta = p.alpha;
  for (std::size_t k = 0; k < x.size(); ++k) eta += p.beta[static_cast<Eigen::Index>(k)] * x[k];
  if (p.gamma && urban) eta += *p.gamma;
  return eta + s_value;
}

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double log_expit(double eta) {
  if (eta >= 0.0) return -std::log1p(std::exp(-eta));
  return eta - std::log1p(std::exp(eta));
}

namespace {

constexpr int kFactorialTable = 4096;

double log_factorial(int k) {
  static const std::vector<double> table = [] {
    std::vector<double> t(kFactorialTable, 0.0);
    for (int i = 1; i < kFactorialTable; ++i) t[i] = boost::math::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  return k < kFactorialTable ? table[k] : boost::math::lgamma(static_cast<double>(k) + 1.0);
}

}  // namespace

double log_binomial_coefficient(int n, int y) {
  if (y == 0 || y == n) return 0.0;
  return log_factorial(n) - log_factorial(y) - log_factorial(n - y);
}

namespace {

void check_counts(int y, int n) {
  if (n < 0 || y < 0 || y > n)
    fail(ErrorKind::Domain, "invalid counts y=" + std::to_string(y) + ", n=" + std::to_string(n));
}

const double kLogFloor = std::log(kProbFloor);
const double kLogCeil = std::log1p(-kProbFloor);

double clamp_log(double lp) { return std::min(std::max(lp, kLogFloor), kLogCeil); }

}  // namespace

double loglik_binomial(int y, int n, double eta) {
  check_counts(y, n);
  if (std::isnan(eta)) fail(ErrorKind::Domain, "non-finite linear predictor");
  const double lp = clamp_log(log_expit(eta));
  const double lq = clamp_log(log_expit(-eta));
  double ll = log_binomial_coefficient(n, y);
  if (y > 0) ll += y * lp;
  if (n - y > 0) ll += (n - y) * lq;
  return ll;
}

namespace {

double betabinomial_core(int y, int n, double mu, double d) {
  const double a = mu * d;
  const double b = (1.0 - mu) * d;
  double ll = log_binomial_coefficient(n, y);
  for (int k = 0; k < y; ++k) ll += std::log(a + k);
  for (int k = 0; k < n - y; ++k) ll += std::log(b + k);
  for (int k = 0; k < n; ++k) ll -= std::log(d + k);
  return ll;
}

double clamp_mu(double eta) { return std::min(std::max(expit(eta), kProbFloor), 1.0 - kProbFloor); }

// d loglik / d mu at fixed d.
double betabinomial_dmu(int y, int n, double mu, double d) {
  const double a = mu * d;
  const double b = (1.0 - mu) * d;
  double s = 0.0;
  for (int k = 0; k < y; ++k) s += 1.0 / (a + k);
  for (int k = 0; k < n - y; ++k) s -= 1.0 / (b + k);
  return d * s;
}

}  // namespace

double loglik_betabinomial(int y, int n, double mu, double d) {
  check_counts(y, n);
  if (!(mu > 0.0 && mu < 1.0)) fail(ErrorKind::Domain, "Beta-Binomial mean must lie in (0, 1), got " + format_double(mu));
  if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::Domain, "Beta-Binomial dispersion d must be > 0, got " + format_double(d));
  return betabinomial_core(y, n, std::min(std::max(mu, kProbFloor), 1.0 - kProbFloor), d);
}

double loglik_betabinomial_eta(int y, int n, double eta, double d) {
  check_counts(y, n);
  if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::Domain, "Beta-Binomial dispersion d must be > 0, got " + format_double(d));
  if (std::isnan(eta)) fail(ErrorKind::Domain, "non-finite linear predictor");
  return betabinomial_core(y, n, clamp_mu(eta), d);
}

double betabinomial_score_eta(int y, int n, double eta, double d) {
  const double mu = clamp_mu(eta);
  return mu * (1.0 - mu) * betabinomial_dmu(y, n, mu, d);
}

double betabinomial_hessian_eta(int y, int n, double eta, double d) {
  const double mu = clamp_mu(eta);
  const double a = mu * d;
  const double b = (1.0 - mu) * d;
  double curv = 0.0;
  for (int k = 0; k < y; ++k) curv += 1.0 / ((a + k) * (a + k));
  for (int k = 0; k < n - y; ++k) curv += 1.0 / ((b + k) * (b + k));
  const double j = mu * (1.0 - mu);
  return -j * j * d * d * curv + j * (1.0 - 2.0 * mu) * betabinomial_dmu(y, n, mu, d);
}

double betabinomial_fisher_eta(int n, double eta, double d) {
  const double mu = clamp_mu(eta);
  double info = 0.0;
  for (int y = 0; y <= n; ++y) {
    const double p = std::exp(betabinomial_core(y, n, mu, d));
    const double s = betabinomial_dmu(y, n, mu, d);
    info += p * s * s;
  }
  const double j = mu * (1.0 - mu);
  return info * j * j;
}

double lono_h() { return 16.0 * std::sqrt(3.0) / (15.0 * std::numbers::pi); }

double lono_target(double eta, double sigma_delta) {
  if (!std::isfinite(eta) || !std::isfinite(sigma_delta) || sigma_delta < 0.0)
    fail(ErrorKind::Domain, "lono_target needs finite eta and sigma_delta >= 0");
  const double h = lono_h();
  return expit(eta / std::sqrt(1.0 + h * h * sigma_delta * sigma_delta));
}

double ts_target(double eta, double epsilon) { return expit(eta + epsilon); }

}  // namespace vaxmap
