#include "vaxmap/validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/parallel.hpp"
#include "vaxmap/presentation.hpp"
#include "vaxmap/quadrature.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {

namespace {

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// log of E[Binomial(y | n, expit(eta + sigma Z))], Z ~ N(0, 1), by
// Gauss-Hermite quadrature recentred at the integrand's mode.
double log_marginal_nugget(int y, int n, double eta, double sigma, const NormalQuadrature& rule,
                           std::vector<double>& terms) {
  auto h = [&](double z) { return -0.5 * z * z + loglik_binomial(y, n, eta + sigma * z); };
  double z = 0.0, curv = 1.0;
  for (int it = 0; it < 50; ++it) {
    const double p = expit(eta + sigma * z);
    const double grad = -z + sigma * (y - n * p);
    curv = 1.0 + sigma * sigma * n * p * (1.0 - p);
    const double step = grad / curv;
    z += step;
    if (std::abs(step) < 1e-12) break;
  }
  const double p = expit(eta + sigma * z);
  curv = 1.0 + sigma * sigma * n * p * (1.0 - p);
  const double s = 1.0 / std::sqrt(curv);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double x = rule.nodes[i];
    terms[i] = std::log(rule.weights[i]) + h(z + s * x) + 0.5 * x * x;
  }
  return std::log(s) + log_sum_exp(terms);
}

}  // namespace

RowMatrix pointwise_loglik(const PosteriorDraws& draws, const std::vector<ClusterObservation>& clusters) {
  require(draws.size() >= 1, ErrorKind::Validation, "posterior holds no draws");
  const std::size_t p = draws.spec.covariate_names.size();
  std::vector<Point> pts;
  for (const auto& c : clusters) {
    require(c.covariates.size() == p, ErrorKind::Dimension, "cluster '" + c.cluster_id + "' has the wrong covariate count");
    pts.push_back({c.lon, c.lat});
  }
  const Projector proj = project(draws.lattice, pts);
  // clusters x draws
  const Eigen::MatrixXd s = proj.matrix * draws.field.transpose();
  const ModelClass cls = draws.spec.model_class;
  const bool strata = draws.spec.include_strata;
  const Eigen::Index gamma_col = draws.fixed.cols() - 1;
  static const NormalQuadrature rule = gauss_hermite_normal(32);
  std::vector<double> terms(rule.nodes.size());

  RowMatrix ll(static_cast<Eigen::Index>(draws.size()), static_cast<Eigen::Index>(clusters.size()));
  for (Eigen::Index m = 0; m < ll.rows(); ++m) {
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto& obs = clusters[c];
      const auto col = static_cast<Eigen::Index>(c);
      double eta = draws.fixed(m, 0) + s(col, m);
      for (std::size_t k = 0; k < p; ++k) eta += draws.fixed(m, 1 + static_cast<Eigen::Index>(k)) * obs.covariates[k];
      if (strata && obs.urban) eta += draws.fixed(m, gamma_col);
      double v = 0.0;
      switch (cls) {
        case ModelClass::BinomialNN:
          v = loglik_binomial(obs.y, obs.n, eta);
          break;
        case ModelClass::BetaBinomialOD:
          v = loglik_betabinomial_eta(obs.y, obs.n, eta, draws.hyper(m, 2));
          break;
        case ModelClass::LonoBinomialOD:
        case ModelClass::BinomialTS: {
          v = log_marginal_nugget(obs.y, obs.n, eta, draws.hyper(m, 2), rule, terms);
          break;
        }
      }
      ll(m, col) = v;
    }
  }
  return ll;
}

WaicResult waic_from_loglik(const RowMatrix& ll, const std::vector<std::string>& ids) {
  require(ll.rows() >= 1 && ll.cols() >= 1, ErrorKind::Validation, "WAIC needs at least one draw and one cluster");
  const double m = static_cast<double>(ll.rows());
  WaicResult r;
  std::vector<double> col(static_cast<std::size_t>(ll.rows()));
  for (Eigen::Index c = 0; c < ll.cols(); ++c) {
    for (Eigen::Index j = 0; j < ll.rows(); ++j) {
      col[static_cast<std::size_t>(j)] = ll(j, c);
      if (!std::isfinite(ll(j, c))) {
        const std::string who = static_cast<std::size_t>(c) < ids.size() ? "'" + ids[static_cast<std::size_t>(c)] + "'"
                                                                         : std::to_string(c);
        fail(ErrorKind::Numeric, "non-finite pointwise log-likelihood for cluster " + who);
      }
    }
    r.lppd += log_sum_exp(col) - std::log(m);
    if (ll.rows() >= 2) {
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= m;
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      r.p_waic += ss / (m - 1.0);
    }
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

WaicResult waic(const PosteriorDraws& draws, const std::vector<ClusterObservation>& clusters) {
  std::vector<std::string> ids;
  for (const auto& c : clusters) ids.push_back(c.cluster_id);
  return waic_from_loglik(pointwise_loglik(draws, clusters), ids);
}

ErrorMetrics error_metrics(std::span<const double> predicted, std::span<const double> observed) {
  require(predicted.size() == observed.size(), ErrorKind::Dimension, "predictions and observations differ in length");
  ErrorMetrics e;
  e.count = predicted.size();
  if (e.count == 0) return e;
  double sum = 0.0, abs = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < e.count; ++i) {
    const double d = predicted[i] - observed[i];
    sum += d;
    abs += std::abs(d);
    sq += d * d;
  }
  const double n = static_cast<double>(e.count);
  e.bias = sum / n;
  e.mae = abs / n;
  e.rmse = std::sqrt(sq / n);
  return e;
}

bool ValidationReport::any_failed_convergence() const {
  return std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.status != FitStatus::Converged; });
}

ValidationReport loso_cv(const ModelSpec& spec, const std::vector<ClusterObservation>& data, const Lattice& lattice,
                         const PriorSpec& priors, const McmcConfig& mcmc, const CvOptions& options) {
  std::map<std::string, std::vector<std::size_t>> by_state;
  for (std::size_t i = 0; i < data.size(); ++i) by_state[data[i].state_id].push_back(i);
  require(by_state.size() >= 2, ErrorKind::Validation, "leave-one-state-out needs at least two states");

  ValidationReport report;
  report.spec = spec;
  report.folds.resize(by_state.size());
  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> states;
  for (const auto& kv : by_state) states.push_back(&kv);

  const int fold_threads = std::max(1, options.threads);
  parallel_for(states.size(), fold_threads, [&](std::size_t f) {
    const std::string& state = states[f]->first;
    std::vector<ClusterObservation> train, test;
    for (const auto& c : data) (c.state_id == state ? test : train).push_back(c);
    McmcConfig cfg = mcmc;
    cfg.seed = derive_seed(mcmc.seed, {f});
    cfg.threads = 1;
    const PosteriorDraws draws = fit(spec, train, lattice, priors, cfg);

    std::vector<Point> pts;
    std::vector<std::vector<double>> cov;
    std::vector<bool> urban;
    for (const auto& c : test) {
      pts.push_back({c.lon, c.lat});
      cov.push_back(c.covariates);
      urban.push_back(c.urban);
    }
    const RowMatrix target =
        predict_points(draws, pts, cov, urban, derive_seed(cfg.seed, {0x9D}), options.max_prediction_draws, 1);

    FoldResult& out = report.folds[f];
    out.state_id = state;
    out.status = draws.status;
    std::vector<double> row(static_cast<std::size_t>(target.cols()));
    for (std::size_t i = 0; i < test.size(); ++i) {
      for (Eigen::Index j = 0; j < target.cols(); ++j) row[static_cast<std::size_t>(j)] = target(static_cast<Eigen::Index>(i), j);
      std::sort(row.begin(), row.end());
      out.cluster_ids.push_back(test[i].cluster_id);
      out.predicted.push_back(quantile_sorted(row, 0.5));
      out.observed.push_back(test[i].observed_fraction());
    }
    out.metrics = error_metrics(out.predicted, out.observed);
  });

  std::vector<double> pred, obs;
  for (const auto& f : report.folds) {
    pred.insert(pred.end(), f.predicted.begin(), f.predicted.end());
    obs.insert(obs.end(), f.observed.begin(), f.observed.end());
  }
  report.pooled = error_metrics(pred, obs);
  return report;
}

void write_validation_csv(const std::filesystem::path& path, const ValidationReport& report) {
  CsvTable t;
  t.header = {"fold", "clusters", "bias", "mae", "rmse", "status"};
  for (const auto& f : report.folds)
    t.rows.push_back({f.state_id, std::to_string(f.metrics.count), format_double(f.metrics.bias),
                      format_double(f.metrics.mae), format_double(f.metrics.rmse), to_string(f.status)});
  t.rows.push_back({"pooled", std::to_string(report.pooled.count), format_double(report.pooled.bias),
                    format_double(report.pooled.mae), format_double(report.pooled.rmse),
                    report.any_failed_convergence() ? "flagged" : "converged"});
  write_csv(path, t);
}

std::string validation_summary(const ValidationReport& report) {
  std::ostringstream os;
  os << "model: " << to_string(report.spec.model_class) << (report.spec.include_strata ? " + strata" : "") << '\n';
  if (report.waic)
    os << "WAIC: " << format_double(report.waic->waic) << " (lppd " << format_double(report.waic->lppd)
       << ", p_waic " << format_double(report.waic->p_waic) << ")\n";
  os << "folds: " << report.folds.size() << ", held-out clusters: " << report.pooled.count << '\n';
  os << "bias: " << format_double(report.pooled.bias) << '\n';
  os << "MAE: " << format_double(report.pooled.mae) << '\n';
  os << "RMSE: " << format_double(report.pooled.rmse) << '\n';
  for (const auto& f : report.folds)
    if (f.status != FitStatus::Converged) os << "fold " << f.state_id << ": " << to_string(f.status) << '\n';
  return os.str();
}

}  // namespace vaxmap
