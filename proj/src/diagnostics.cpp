#include "vaxmap/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap {

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

// Autocovariance (biased, divisor n) at lags 0..n-1.
std::vector<double> autocovariance(const std::vector<double>& v) {
  const std::size_t n = v.size();
  const double m = mean_of(v);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = v[i] - m;
  std::vector<double> acov(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
    acov[lag] = s / n;
  }
  return acov;
}

}  // namespace

double split_rhat(const ChainSamples& chains) {
  require(chains.size() >= 2, ErrorKind::Validation, "split R-hat needs at least two chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  require(half >= 2, ErrorKind::Validation, "split R-hat needs at least four draws per chain");
  std::vector<std::vector<double>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.begin(), c.begin() + half);
    parts.emplace_back(c.begin() + (n - half), c.begin() + n);
  }
  std::vector<double> means, vars;
  for (const auto& p : parts) {
    means.push_back(mean_of(p));
    vars.push_back(var_of(p));
  }
  const double w = mean_of(vars);
  const double b = half * var_of(means);
  const double var_plus = (half - 1.0) / half * w + b / half;
  if (w <= 0.0) return var_plus <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const ChainSamples& chains) {
  require(!chains.empty(), ErrorKind::Validation, "ESS needs at least one chain");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  require(n >= 4, ErrorKind::Validation, "ESS needs at least four draws per chain");
  const std::size_t m = chains.size();
  std::vector<std::vector<double>> acov;
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    std::vector<double> t(c.begin(), c.begin() + n);
    acov.push_back(autocovariance(t));
    means.push_back(mean_of(t));
    vars.push_back(acov.back()[0] * n / (n - 1.0));
  }
  const double w = mean_of(vars);
  double var_plus = w * (n - 1.0) / n;
  if (m > 1) var_plus += var_of(means);
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  std::vector<double> rho(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double a = 0.0;
    for (std::size_t j = 0; j < m; ++j) a += acov[j][t];
    a /= m;
    rho[t] = 1.0 - (w - a) / var_plus;
  }
  rho[0] = 1.0;
  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho[t] + rho[t + 1];
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
  return static_cast<double>(m * n) / tau;
}

double DiagnosticsReport::max_rhat() const {
  double r = 0.0;
  for (const auto& s : scalars)
    if (!std::isnan(s.rhat)) r = std::max(r, s.rhat);
  return r;
}

double DiagnosticsReport::min_ess() const {
  double e = std::numeric_limits<double>::infinity();
  for (const auto& s : scalars) e = std::min(e, s.ess);
  return e;
}

bool DiagnosticsReport::converged(double threshold) const {
  if (!rhat_available) return true;
  for (const auto& s : scalars)
    if (!(s.rhat <= threshold)) return false;
  return true;
}

std::string DiagnosticsReport::to_text() const {
  std::ostringstream os;
  os << "scalar,rhat,ess\n";
  for (const auto& s : scalars)
    os << s.name << ',' << (rhat_available ? format_double(s.rhat) : std::string("NA")) << ','
       << format_double(s.ess) << '\n';
  return os.str();
}

}  // namespace vaxmap
