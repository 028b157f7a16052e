#include "vaxmap/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/parallel.hpp"
#include "vaxmap/polya_gamma.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

}  // namespace

void McmcConfig::validate() const {
  require(chains >= 1, ErrorKind::Validation, "chains must be >= 1");
  require(burn_in >= 0, ErrorKind::Validation, "burn-in must be >= 0");
  require(iterations > burn_in, ErrorKind::Validation, "iterations must exceed burn-in");
  require(thin >= 1, ErrorKind::Validation, "thin must be >= 1");
  require(draws_per_chain() >= 1, ErrorKind::Validation, "configuration retains no draws");
  require(threads >= 1, ErrorKind::Validation, "threads must be >= 1");
}

const char* to_string(FitStatus s) { return s == FitStatus::Converged ? "converged" : "failed_convergence"; }

PriorSpec resolve_priors(const PriorSpec& priors, const std::vector<ClusterObservation>& clusters) {
  priors.validate();
  PriorSpec out = priors;
  if (!out.rho_median) {
    require(!clusters.empty(), ErrorKind::Validation, "cannot derive a range prior without clusters");
    const double diameter = cluster_bbox(clusters).diameter();
    require(diameter > 0.0, ErrorKind::Validation, "clusters share one location; set the range prior explicitly");
    out.rho_median = diameter / 5.0;
  }
  return out;
}

// Everything the samplers need about one (spec, data, lattice) triple. The
// latent vector x stacks the N field nodes followed by the fixed effects
// (alpha, standardized betas, gamma).
struct PosteriorModel::Impl {
  ModelSpec spec;
  std::vector<ClusterObservation> clusters;
  Lattice lattice;
  Standardization standardization;
  SpdeOperator spde;
  bool nugget = false;
  int N = 0, pf = 0, D = 0, C = 0;
  std::vector<int> y, n;
  std::vector<double> half_kappa;  // y - n/2
  std::vector<std::vector<std::pair<int, double>>> rows;  // cluster -> (x index, coefficient)

  // Lower triangle of Q_x + A'WA with every position the samplers touch.
  SparseMatrix p_pattern;
  std::vector<int> q_to_p;  // Q nonzero -> P nonzero, -1 above the diagonal
  std::vector<int> fixed_diag;
  std::vector<std::vector<int>> pair_idx;  // per cluster, per ordered pair (a, b), -1 if above

  Impl(const ModelSpec& s, std::vector<ClusterObservation> data, const Lattice& lat)
      : spec(s), clusters(std::move(data)), lattice(lat), spde(lat) {
    std::sort(clusters.begin(), clusters.end(),
              [](const ClusterObservation& a, const ClusterObservation& b) { return a.cluster_id < b.cluster_id; });
    for (std::size_t i = 1; i < clusters.size(); ++i)
      require(clusters[i].cluster_id != clusters[i - 1].cluster_id, ErrorKind::Validation,
              "duplicate cluster_id '" + clusters[i].cluster_id + "'");
    nugget = has_cluster_nugget(spec.model_class);
    N = static_cast<int>(lattice.size());
    pf = static_cast<int>(spec.fixed_effect_count());
    D = N + pf;
    C = static_cast<int>(clusters.size());
    const std::size_t p = spec.covariate_names.size();

    standardization.mean.assign(p, 0.0);
    standardization.sd.assign(p, 1.0);
    for (const auto& c : clusters)
      require(c.covariates.size() == p, ErrorKind::Dimension,
              "cluster '" + c.cluster_id + "' has " + std::to_string(c.covariates.size()) + " covariates, model expects " +
                  std::to_string(p));
    if (C > 0) {
      for (std::size_t k = 0; k < p; ++k) {
        double m = 0.0;
        for (const auto& c : clusters) m += c.covariates[k];
        m /= C;
        double v = 0.0;
        for (const auto& c : clusters) v += (c.covariates[k] - m) * (c.covariates[k] - m);
        const double sd = std::sqrt(v / C);
        standardization.mean[k] = m;
        standardization.sd[k] = sd > 1e-12 ? sd : 1.0;
      }
    }

    std::vector<Point> pts;
    for (const auto& c : clusters) {
      require(lattice.contains(c.lon, c.lat), ErrorKind::OutOfDomain,
              "cluster '" + c.cluster_id + "' lies outside the lattice");
      pts.push_back({c.lon, c.lat});
    }
    const Projector proj = project(lattice, pts);
    rows.resize(C);
    for (int c = 0; c < C; ++c) {
      const auto& obs = clusters[c];
      y.push_back(obs.y);
      n.push_back(obs.n);
      half_kappa.push_back(obs.y - 0.5 * obs.n);
      for (SparseRowMatrix::InnerIterator it(proj.matrix, c); it; ++it)
        rows[c].emplace_back(static_cast<int>(it.col()), it.value());
      rows[c].emplace_back(N, 1.0);
      for (std::size_t k = 0; k < p; ++k) {
        const double z = (obs.covariates[k] - standardization.mean[k]) / standardization.sd[k];
        if (z != 0.0) rows[c].emplace_back(N + 1 + static_cast<int>(k), z);
      }
      if (spec.include_strata && obs.urban) rows[c].emplace_back(D - 1, 1.0);
    }
    build_pattern();
  }

  void build_pattern() {
    const SparseMatrix& q = spde.pattern();
    std::vector<Eigen::Triplet<double>> trip;
    for (int j = 0; j < q.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(q, j); it; ++it)
        if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), 1.0);
    for (int k = 0; k < pf; ++k) trip.emplace_back(N + k, N + k, 1.0);
    for (const auto& r : rows)
      for (const auto& [ia, va] : r)
        for (const auto& [ib, vb] : r)
          if (ia >= ib) trip.emplace_back(ia, ib, 1.0);
    p_pattern.resize(D, D);
    p_pattern.setFromTriplets(trip.begin(), trip.end());
    p_pattern.makeCompressed();

    auto find = [&](int i, int j) -> int {
      const int* inner = p_pattern.innerIndexPtr();
      const int lo = p_pattern.outerIndexPtr()[j], hi = p_pattern.outerIndexPtr()[j + 1];
      const int* pos = std::lower_bound(inner + lo, inner + hi, i);
      if (pos == inner + hi || *pos != i) fail(ErrorKind::Numeric, "precision pattern lookup failed");
      return static_cast<int>(pos - inner);
    };
    q_to_p.clear();
    for (int j = 0; j < q.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(q, j); it; ++it)
        q_to_p.push_back(it.row() >= it.col() ? find(static_cast<int>(it.row()), static_cast<int>(it.col())) : -1);
    fixed_diag.clear();
    for (int k = 0; k < pf; ++k) fixed_diag.push_back(find(N + k, N + k));
    pair_idx.assign(C, {});
    for (int c = 0; c < C; ++c)
      for (const auto& [ia, va] : rows[c])
        for (const auto& [ib, vb] : rows[c]) pair_idx[c].push_back(ia >= ib ? find(ia, ib) : -1);
  }

  double fixed_precision() const { return 1.0 / (spec.priors.fixed_sd * spec.priors.fixed_sd); }

  FieldHyperparams field_hyper(std::span<const double> theta) const {
    return {std::exp(theta[0]), std::exp(theta[1])};
  }

  // P = Q_x + A' diag(w) A (lower triangle). An empty `w` leaves out the data term.
  void fill_p(const SparseMatrix& q, std::span<const double> w, SparseMatrix& p) const {
    double* pv = p.valuePtr();
    std::fill(pv, pv + p.nonZeros(), 0.0);
    const double* qv = q.valuePtr();
    for (std::size_t k = 0; k < q_to_p.size(); ++k)
      if (q_to_p[k] >= 0) pv[q_to_p[k]] += qv[k];
    for (int idx : fixed_diag) pv[idx] += fixed_precision();
    if (w.empty()) return;
    for (int c = 0; c < C; ++c) {
      if (w[c] == 0.0) continue;
      const auto& r = rows[c];
      const auto& pi = pair_idx[c];
      std::size_t t = 0;
      for (const auto& ea : r)
        for (const auto& eb : r) {
          if (pi[t] >= 0) pv[pi[t]] += w[c] * ea.second * eb.second;
          ++t;
        }
    }
  }

  void eta(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    out.resize(C);
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (const auto& [i, v] : rows[c]) s += v * x[i];
      out[c] = s;
    }
  }

  // A' v
  void at_times(std::span<const double> v, Eigen::VectorXd& out) const {
    out.setZero(D);
    for (int c = 0; c < C; ++c)
      for (const auto& [i, val] : rows[c]) out[i] += val * v[c];
  }

  // x' Q_x x
  double prior_quad(const SparseMatrix& q, const Eigen::VectorXd& x) const {
    const auto f = x.head(N);
    double s = f.dot(q * f);
    s += x.tail(pf).squaredNorm() * fixed_precision();
    return s;
  }

  // log N(x; 0, Q_x^{-1}) given log|Q| of the field block.
  double log_prior_x(const SparseMatrix& q, double log_det_q, const Eigen::VectorXd& x) const {
    const double fixed_sd = spec.priors.fixed_sd;
    return 0.5 * log_det_q - 0.5 * prior_quad(q, x) - 0.5 * D * kLog2Pi - pf * std::log(fixed_sd);
  }

  double log_prior_theta(std::span<const double> theta) const {
    const auto& pr = spec.priors;
    double lp = normal_logpdf(theta[0], std::log(*pr.rho_median), pr.log_rho_sd) +
                normal_logpdf(theta[1], pr.log_sigma_s_mean, pr.log_sigma_s_sd);
    if (spec.model_class == ModelClass::BetaBinomialOD) lp += normal_logpdf(theta[2], pr.log_d_mean, pr.log_d_sd);
    if (nugget) lp += normal_logpdf(theta[2], pr.log_nugget_mean, pr.log_nugget_sd);
    return lp;
  }

  int theta_dim() const { return spec.model_class == ModelClass::BinomialNN ? 2 : 3; }

  double loglik(const Eigen::VectorXd& eta_v, std::span<const double> theta, std::span<const double> delta) const {
    double ll = 0.0;
    switch (spec.model_class) {
      case ModelClass::BinomialNN:
        for (int c = 0; c < C; ++c) ll += loglik_binomial(y[c], n[c], eta_v[c]);
        break;
      case ModelClass::BetaBinomialOD: {
        const double d = std::exp(theta[2]);
        for (int c = 0; c < C; ++c) ll += loglik_betabinomial_eta(y[c], n[c], eta_v[c], d);
        break;
      }
      case ModelClass::LonoBinomialOD:
      case ModelClass::BinomialTS: {
        const double sd = std::exp(theta[2]);
        for (int c = 0; c < C; ++c)
          ll += loglik_binomial(y[c], n[c], eta_v[c] + delta[c]) + normal_logpdf(delta[c], 0.0, sd);
        break;
      }
    }
    return ll;
  }

  // Full log joint density over (theta on the log scale, x, nuggets); the
  // field precision `q` must already hold Q(theta).
  double log_joint(std::span<const double> theta, const Eigen::VectorXd& x, std::span<const double> delta,
                   const SparseMatrix& q, bool use_likelihood) const {
    const FieldHyperparams h = field_hyper(theta);
    double lp = log_prior_theta(theta) + log_prior_x(q, spde.log_det(h), x);
    Eigen::VectorXd e;
    eta(x, e);
    if (use_likelihood) {
      lp += loglik(e, theta, delta);
    } else if (nugget) {
      const double sd = std::exp(theta[2]);
      for (int c = 0; c < C; ++c) lp += normal_logpdf(delta[c], 0.0, sd);
    }
    return lp;
  }

  std::vector<double> initial_theta(Rng& rng) const {
    std::vector<double> t(theta_dim());
    const auto& pr = spec.priors;
    t[0] = std::log(*pr.rho_median) + 0.2 * std_normal(rng);
    t[1] = pr.log_sigma_s_mean + 0.2 * std_normal(rng);
    if (spec.model_class == ModelClass::BetaBinomialOD) t[2] = pr.log_d_mean + 0.2 * std_normal(rng);
    if (nugget) t[2] = pr.log_nugget_mean + 0.2 * std_normal(rng);
    return t;
  }
};

PosteriorModel::PosteriorModel(const ModelSpec& spec, std::vector<ClusterObservation> clusters, const Lattice& lattice) {
  ModelSpec s = spec;
  s.priors = resolve_priors(spec.priors, clusters);
  impl_ = std::make_unique<Impl>(s, std::move(clusters), lattice);
}
PosteriorModel::~PosteriorModel() = default;
PosteriorModel::PosteriorModel(PosteriorModel&&) noexcept = default;

const ModelSpec& PosteriorModel::spec() const { return impl_->spec; }
const std::vector<ClusterObservation>& PosteriorModel::clusters() const { return impl_->clusters; }
const Standardization& PosteriorModel::standardization() const { return impl_->standardization; }

double PosteriorModel::log_posterior(const ParamVector& params, std::span<const double> nuggets) const {
  const Impl& m = *impl_;
  const std::size_t p = m.spec.covariate_names.size();
  require(static_cast<std::size_t>(params.beta.size()) == p, ErrorKind::Dimension, "beta length does not match the model");
  require(params.field.size() == m.N, ErrorKind::Dimension, "field length does not match the lattice");
  require(params.gamma.has_value() == m.spec.include_strata, ErrorKind::Dimension, "gamma presence does not match the model");
  Eigen::VectorXd x(m.D);
  x.head(m.N) = params.field;
  double alpha_std = params.alpha;
  for (std::size_t k = 0; k < p; ++k) {
    alpha_std += params.beta[k] * m.standardization.mean[k];
    x[m.N + 1 + k] = params.beta[k] * m.standardization.sd[k];
  }
  x[m.N] = alpha_std;
  if (m.spec.include_strata) x[m.D - 1] = *params.gamma;

  std::vector<double> theta{std::log(params.rho), std::log(params.sigma_s)};
  if (m.spec.model_class == ModelClass::BetaBinomialOD) {
    require(params.d.has_value() && *params.d > 0.0, ErrorKind::Domain, "Beta-Binomial model needs d > 0");
    theta.push_back(std::log(*params.d));
  }
  if (m.nugget) {
    require(params.sigma_nugget.has_value() && *params.sigma_nugget > 0.0, ErrorKind::Domain,
            "nugget model needs sigma_nugget > 0");
    require(nuggets.size() == static_cast<std::size_t>(m.C), ErrorKind::Dimension, "one nugget per cluster required");
    theta.push_back(std::log(*params.sigma_nugget));
  }
  const SparseMatrix q = m.spde.precision(m.field_hyper(theta));
  return m.log_joint(theta, x, nuggets, q, true);
}

namespace {

// Random-walk proposal for the log-hyperparameters: Robbins-Monro scale
// toward 30% acceptance plus an empirical covariance shape, both frozen once
// burn-in ends.
class AdaptiveWalk {
 public:
  AdaptiveWalk(int dim, double init_sd) : dim_(dim), shape_(Eigen::MatrixXd::Identity(dim, dim) * init_sd) {
    mean_.setZero(dim);
    m2_.setZero(dim, dim);
  }

  std::vector<double> propose(const std::vector<double>& cur, Rng& rng) const {
    Eigen::VectorXd z(dim_);
    for (int i = 0; i < dim_; ++i) z[i] = std_normal(rng);
    const Eigen::VectorXd step = std::exp(log_scale_) * (shape_ * z);
    std::vector<double> out(cur);
    for (int i = 0; i < dim_; ++i) out[i] += step[i];
    return out;
  }

  void update(const std::vector<double>& theta, double accept_prob, int iter, int burn_in) {
    if (iter >= burn_in) return;
    log_scale_ += (accept_prob - 0.3) / std::pow(1.0 + iter / 10.0, 0.6);
    log_scale_ = std::clamp(log_scale_, -8.0, 3.0);
    if (iter < burn_in / 4) return;
    ++count_;
    Eigen::Map<const Eigen::VectorXd> t(theta.data(), dim_);
    const Eigen::VectorXd delta = t - mean_;
    mean_ += delta / count_;
    m2_ += delta * (t - mean_).transpose();
    if (count_ >= 50 && count_ % 50 == 0) {
      Eigen::MatrixXd cov = m2_ / (count_ - 1.0);
      cov *= 2.38 * 2.38 / dim_;
      cov.diagonal().array() += 1e-8;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        if (!empirical_) log_scale_ = 0.0;
        empirical_ = true;
        shape_ = llt.matrixL();
      }
    }
  }

 private:
  int dim_;
  Eigen::MatrixXd shape_;
  double log_scale_ = 0.0;
  bool empirical_ = false;
  long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

struct ChainOutput {
  RowMatrix fixed;  // standardized scale
  RowMatrix theta;
  RowMatrix field;
  RowMatrix nuggets;
  double acceptance = 0.0;
};

ChainOutput allocate_output(const PosteriorModel::Impl& m, int draws) {
  ChainOutput out;
  out.fixed.resize(draws, m.pf);
  out.theta.resize(draws, m.theta_dim());
  out.field.resize(draws, m.N);
  if (m.nugget) out.nuggets.resize(draws, m.C);
  return out;
}

bool retained(const McmcConfig& cfg, int iter, int& slot) {
  if (iter < cfg.burn_in) return false;
  const int k = iter - cfg.burn_in + 1;
  if (k % cfg.thin != 0) return false;
  slot = k / cfg.thin - 1;
  return slot < cfg.draws_per_chain();
}

void store(ChainOutput& out, int slot, const PosteriorModel::Impl& m, const std::vector<double>& theta,
           const Eigen::VectorXd& x, const Eigen::VectorXd& delta) {
  out.fixed.row(slot) = x.tail(m.pf).transpose();
  out.field.row(slot) = x.head(m.N).transpose();
  for (std::size_t i = 0; i < theta.size(); ++i) out.theta(slot, static_cast<Eigen::Index>(i)) = theta[i];
  if (m.nugget) out.nuggets.row(slot) = delta.transpose();
}

Eigen::VectorXd normal_vector(int size, Rng& rng) {
  Eigen::VectorXd z(size);
  for (int i = 0; i < size; ++i) z[i] = std_normal(rng);
  return z;
}

// Polya-Gamma augmented Gibbs sampler for the binomial classes. Each sweep
// draws omega | (x, delta), then (theta, x, delta) | omega as one block:
// theta by random-walk Metropolis on its marginal with x and delta
// integrated out, x exactly from its Gaussian conditional, delta exactly.
ChainOutput run_polya_gamma_chain(const PosteriorModel::Impl& m, const McmcConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  PolyaGammaSampler pg;
  ChainOutput out = allocate_output(m, cfg.draws_per_chain());
  const bool lik = cfg.use_likelihood;

  std::vector<double> theta = m.initial_theta(rng);
  AdaptiveWalk walk(m.theta_dim(), 0.15);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m.D);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(m.C);
  Eigen::VectorXd e(m.C), b(m.D);
  std::vector<double> omega(m.C, 0.25), w(m.C, 0.0), wz(m.C, 0.0);

  SparseMatrix q = m.spde.pattern();
  std::array<SparseMatrix, 2> p{m.p_pattern, m.p_pattern};
  std::array<SparseCholesky, 2> chol;
  chol[0].analyze(m.p_pattern);
  chol[1].analyze(m.p_pattern);
  std::array<Eigen::VectorXd, 2> mean;
  int cur = 0;

  auto evaluate = [&](const std::vector<double>& th, int slot) -> double {
    const FieldHyperparams h = m.field_hyper(th);
    m.spde.fill_precision(h, q);
    double lm = m.log_prior_theta(th) + 0.5 * m.spde.log_det(h);
    if (lik) {
      const double s2 = m.nugget ? std::exp(2.0 * th[2]) : 0.0;
      for (int c = 0; c < m.C; ++c) {
        const double z = m.half_kappa[c] / omega[c];
        w[c] = m.nugget ? 1.0 / (1.0 / omega[c] + s2) : omega[c];
        wz[c] = w[c] * z;
        lm += 0.5 * std::log(w[c]) - 0.5 * w[c] * z * z;
      }
      m.fill_p(q, w, p[slot]);
    } else {
      std::fill(wz.begin(), wz.end(), 0.0);
      m.fill_p(q, {}, p[slot]);
    }
    if (!chol[slot].factorize(p[slot])) return kNegInf;
    m.at_times(wz, b);
    mean[slot] = chol[slot].solve(b);
    return lm - 0.5 * chol[slot].log_det() + 0.5 * b.dot(mean[slot]);
  };

  long accepted = 0, post_burn = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (lik) {
      m.eta(x, e);
      for (int c = 0; c < m.C; ++c) omega[c] = pg.draw(m.n[c], e[c] + delta[c], rng);
    }
    const double cur_lm = evaluate(theta, cur);
    if (!std::isfinite(cur_lm)) fail(ErrorKind::Numeric, "posterior precision lost positive definiteness");
    const std::vector<double> prop = walk.propose(theta, rng);
    const double prop_lm = evaluate(prop, 1 - cur);
    const double log_ratio = prop_lm - cur_lm;
    const bool accept = std::log(uniform01(rng)) < log_ratio;
    if (accept) {
      theta = prop;
      cur = 1 - cur;
    }
    walk.update(theta, std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0, iter, cfg.burn_in);
    if (iter >= cfg.burn_in) {
      ++post_burn;
      accepted += accept;
    }

    x = mean[cur] + chol[cur].whiten_inverse(normal_vector(m.D, rng));

    if (m.nugget) {
      const double inv_s2 = std::exp(-2.0 * theta[2]);
      m.eta(x, e);
      for (int c = 0; c < m.C; ++c) {
        const double prec = (lik ? omega[c] : 0.0) + inv_s2;
        const double mu = lik ? (m.half_kappa[c] - omega[c] * e[c]) / prec : 0.0;
        delta[c] = mu + std_normal(rng) / std::sqrt(prec);
      }
    }
    int slot = 0;
    if (retained(cfg, iter, slot)) store(out, slot, m, theta, x, delta);
  }
  out.acceptance = post_burn > 0 ? static_cast<double>(accepted) / post_burn : 0.0;
  return out;
}

// Beta-Binomial sampler: (theta, x) proposed jointly, theta by adaptive random
// walk and x through the Gaussian (Laplace) approximation of x | theta, y.
// x is carried in that approximation's whitened coordinates z and the joint
// move perturbs z by a Crank-Nicolson step, so the importance weight changes
// little between neighbouring theta. An independence refresh of x at fixed
// theta follows.
constexpr double kJointStep = 0.5;

ChainOutput run_laplace_chain(const PosteriorModel::Impl& m, const McmcConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ChainOutput out = allocate_output(m, cfg.draws_per_chain());
  const bool lik = cfg.use_likelihood;
  const std::vector<double> no_delta;

  std::array<SparseMatrix, 2> q{m.spde.pattern(), m.spde.pattern()};
  std::array<SparseMatrix, 2> p{m.p_pattern, m.p_pattern};
  std::array<SparseCholesky, 2> chol;
  chol[0].analyze(m.p_pattern);
  chol[1].analyze(m.p_pattern);
  std::array<Eigen::VectorXd, 2> mode;
  std::array<double, 2> half_log_det{0.0, 0.0};
  Eigen::VectorXd e(m.C), b(m.D);
  std::vector<double> grad(m.C), curv(m.C), rhs(m.C);

  auto objective = [&](const Eigen::VectorXd& x, double d, const SparseMatrix& qq) {
    double v = -0.5 * m.prior_quad(qq, x);
    if (lik) {
      m.eta(x, e);
      for (int c = 0; c < m.C; ++c) v += loglik_betabinomial_eta(m.y[c], m.n[c], e[c], d);
    }
    return v;
  };
  auto curvature = [&](const Eigen::VectorXd& x, double d) {
    m.eta(x, e);
    for (int c = 0; c < m.C; ++c) {
      grad[c] = lik ? betabinomial_score_eta(m.y[c], m.n[c], e[c], d) : 0.0;
      curv[c] = lik ? std::max(-betabinomial_hessian_eta(m.y[c], m.n[c], e[c], d), 1e-6) : 0.0;
      rhs[c] = curv[c] * e[c] + grad[c];
    }
  };

  // Gaussian approximation at theta, Newton from `start`; false on breakdown.
  auto laplace = [&](const std::vector<double>& th, const Eigen::VectorXd& start, int slot) -> bool {
    const FieldHyperparams h = m.field_hyper(th);
    const double d = std::exp(th[2]);
    m.spde.fill_precision(h, q[slot]);
    Eigen::VectorXd x = start;
    double obj = objective(x, d, q[slot]);
    // The precision of the last Newton step is kept as the proposal
    // precision; it is evaluated within one step of the mode.
    for (int it = 0; it < 50; ++it) {
      curvature(x, d);
      m.fill_p(q[slot], curv, p[slot]);
      if (!chol[slot].factorize(p[slot])) return false;
      m.at_times(rhs, b);
      Eigen::VectorXd next = chol[slot].solve(b);
      double next_obj = objective(next, d, q[slot]);
      for (int halve = 0; halve < 30 && !(next_obj >= obj - 1e-10); ++halve) {
        next = 0.5 * (x + next);
        next_obj = objective(next, d, q[slot]);
      }
      if (!std::isfinite(next_obj)) return false;
      const double change = (next - x).cwiseAbs().maxCoeff();
      x = std::move(next);
      obj = next_obj;
      if (change < 1e-3) break;
    }
    mode[slot] = std::move(x);
    half_log_det[slot] = 0.5 * chol[slot].log_det();
    return true;
  };
  // log pi(theta, x) - log pi_G(x | theta) for x = mode + whiten_inverse(xi).
  auto log_weight = [&](const std::vector<double>& th, const Eigen::VectorXd& x, double xi_sq, int slot) {
    const double log_g = -0.5 * m.D * kLog2Pi + half_log_det[slot] - 0.5 * xi_sq;
    return m.log_joint(th, x, no_delta, q[slot], lik) - log_g;
  };

  std::vector<double> theta = m.initial_theta(rng);
  AdaptiveWalk walk(m.theta_dim(), 0.1);
  int cur = 0;
  if (!laplace(theta, Eigen::VectorXd::Zero(m.D), cur))
    fail(ErrorKind::Numeric, "Gaussian approximation failed at the initial state");
  Eigen::VectorXd x = mode[cur];
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m.D);
  double lw = log_weight(theta, x, 0.0, cur);
  const double keep = std::sqrt(1.0 - kJointStep * kJointStep);

  long accepted = 0, post_burn = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<double> prop = walk.propose(theta, rng);
    const int other = 1 - cur;
    double log_ratio = kNegInf;
    Eigen::VectorXd xp;
    double lwp = kNegInf;
    const Eigen::VectorXd zp = keep * z + kJointStep * normal_vector(m.D, rng);
    if (laplace(prop, mode[cur], other)) {
      xp = mode[other] + chol[other].whiten_inverse(zp);
      lwp = log_weight(prop, xp, zp.squaredNorm(), other);
      log_ratio = lwp - lw;
    }
    const bool accept = std::log(uniform01(rng)) < log_ratio;
    if (accept) {
      theta = prop;
      x = std::move(xp);
      z = zp;
      lw = lwp;
      cur = other;
    }
    walk.update(theta, std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0, iter, cfg.burn_in);
    if (iter >= cfg.burn_in) {
      ++post_burn;
      accepted += accept;
    }

    const Eigen::VectorXd xi2 = normal_vector(m.D, rng);
    Eigen::VectorXd xr = mode[cur] + chol[cur].whiten_inverse(xi2);
    const double lwr = log_weight(theta, xr, xi2.squaredNorm(), cur);
    if (std::log(uniform01(rng)) < lwr - lw) {
      x = std::move(xr);
      z = xi2;
      lw = lwr;
    }
    int slot = 0;
    if (retained(cfg, iter, slot)) store(out, slot, m, theta, x, Eigen::VectorXd());
  }
  out.acceptance = post_burn > 0 ? static_cast<double>(accepted) / post_burn : 0.0;
  return out;
}

void append_json_escaped(std::ostringstream& os, const std::string& s) {
  os << '"';
  for (char ch : s) {
    if (ch == '"' || ch == '\\') os << '\\';
    os << ch;
  }
  os << '"';
}

}  // namespace

std::string data_digest(const std::vector<ClusterObservation>& clusters, const std::vector<std::string>& covariate_names) {
  std::ostringstream os;
  for (const auto& name : covariate_names) append_json_escaped(os, name);
  os << '\n';
  for (const auto& c : clusters) {
    append_json_escaped(os, c.cluster_id);
    os << ',' << format_double(c.lon) << ',' << format_double(c.lat) << ',';
    append_json_escaped(os, c.state_id);
    os << ',';
    append_json_escaped(os, c.lga_id);
    os << ',' << c.urban << ',' << c.n << ',' << c.y;
    for (double v : c.covariates) os << ',' << format_double(v);
    os << '\n';
  }
  return sha256_hex(os.str());
}

ParamVector PosteriorDraws::param(std::size_t m) const {
  require(m < size(), ErrorKind::Dimension, "draw index out of range");
  const auto row = static_cast<Eigen::Index>(m);
  const std::size_t p = spec.covariate_names.size();
  ParamVector pv;
  pv.alpha = fixed(row, 0);
  pv.beta.resize(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) pv.beta[static_cast<Eigen::Index>(k)] = fixed(row, 1 + static_cast<Eigen::Index>(k));
  if (spec.include_strata) pv.gamma = fixed(row, fixed.cols() - 1);
  pv.field = field.row(row).transpose();
  pv.rho = hyper(row, 0);
  pv.sigma_s = hyper(row, 1);
  if (spec.model_class == ModelClass::BetaBinomialOD) pv.d = hyper(row, 2);
  if (has_cluster_nugget(spec.model_class)) pv.sigma_nugget = hyper(row, 2);
  return pv;
}

std::vector<std::string> PosteriorDraws::hyper_names() const {
  std::vector<std::string> names{"rho", "sigma_s"};
  if (spec.model_class == ModelClass::BetaBinomialOD) names.push_back("d");
  if (has_cluster_nugget(spec.model_class)) names.push_back("sigma_nugget");
  return names;
}

DiagnosticsReport diagnostics(const PosteriorDraws& draws) {
  DiagnosticsReport rep;
  const int chains = draws.chains();
  const int per = draws.draws_per_chain;
  require(chains >= 1 && per >= 1, ErrorKind::Validation, "diagnostics need at least one draw");
  rep.rhat_available = chains >= 2 && per >= 4;

  auto add = [&](const std::string& name, auto&& value_at) {
    ChainSamples s(chains, std::vector<double>(per));
    for (int c = 0; c < chains; ++c)
      for (int i = 0; i < per; ++i) s[c][i] = value_at(static_cast<Eigen::Index>(c * per + i));
    MonitoredScalar ms;
    ms.name = name;
    ms.rhat = rep.rhat_available ? split_rhat(s) : std::numeric_limits<double>::quiet_NaN();
    ms.ess = per >= 4 ? effective_sample_size(s) : static_cast<double>(chains * per);
    rep.scalars.push_back(ms);
  };
  add("alpha", [&](Eigen::Index r) { return draws.fixed(r, 0); });
  if (draws.spec.include_strata) add("gamma", [&](Eigen::Index r) { return draws.fixed(r, draws.fixed.cols() - 1); });
  const auto names = draws.hyper_names();
  for (std::size_t j = 0; j < names.size(); ++j)
    add("log_" + names[j], [&](Eigen::Index r) { return std::log(draws.hyper(r, static_cast<Eigen::Index>(j))); });

  const std::size_t nodes = draws.lattice.size();
  std::vector<std::size_t> all(nodes);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(derive_seed(draws.mcmc.seed, {0xF1E1DULL}));
  const std::size_t pick = std::min<std::size_t>(5, nodes);
  for (std::size_t i = 0; i < pick; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, nodes - 1);
    std::swap(all[i], all[u(rng)]);
  }
  rep.field_nodes.assign(all.begin(), all.begin() + pick);
  std::sort(rep.field_nodes.begin(), rep.field_nodes.end());
  for (std::size_t node : rep.field_nodes)
    add("field[" + std::to_string(node) + "]", [&](Eigen::Index r) { return draws.field(r, static_cast<Eigen::Index>(node)); });
  rep.acceptance = draws.diagnostics.acceptance;
  return rep;
}

PosteriorDraws fit(const ModelSpec& spec, const std::vector<ClusterObservation>& data, const Lattice& lattice,
                   const PriorSpec& priors, const McmcConfig& mcmc) {
  mcmc.validate();
  require(data.size() >= 2, ErrorKind::Validation, "fit needs at least two clusters");
  ModelSpec s = spec;
  s.priors = resolve_priors(priors, data);
  const PosteriorModel model(s, data, lattice);
  const auto& m = model.impl();

  PosteriorDraws out;
  out.spec = m.spec;
  out.mcmc = mcmc;
  out.lattice = lattice;
  for (const auto& c : m.clusters) out.cluster_ids.push_back(c.cluster_id);
  out.standardization = m.standardization;
  out.data_digest = data_digest(m.clusters, m.spec.covariate_names);
  out.draws_per_chain = mcmc.draws_per_chain();
  for (int c = 0; c < mcmc.chains; ++c) out.chain_seeds.push_back(derive_seed(mcmc.seed, {static_cast<std::uint64_t>(c)}));

  std::vector<ChainOutput> chains(static_cast<std::size_t>(mcmc.chains));
  parallel_for(chains.size(), mcmc.threads, [&](std::size_t c) {
    chains[c] = m.spec.model_class == ModelClass::BetaBinomialOD ? run_laplace_chain(m, mcmc, out.chain_seeds[c])
                                                                  : run_polya_gamma_chain(m, mcmc, out.chain_seeds[c]);
  });

  const Eigen::Index per = out.draws_per_chain;
  const Eigen::Index total = per * mcmc.chains;
  const Eigen::Index p = static_cast<Eigen::Index>(m.spec.covariate_names.size());
  out.fixed.resize(total, m.pf);
  out.hyper.resize(total, m.theta_dim());
  out.field.resize(total, m.N);
  if (m.nugget) out.nuggets.resize(total, m.C);
  for (int c = 0; c < mcmc.chains; ++c) {
    const auto& ch = chains[static_cast<std::size_t>(c)];
    const Eigen::Index r0 = c * per;
    out.field.middleRows(r0, per) = ch.field;
    out.hyper.middleRows(r0, per) = ch.theta.array().exp().matrix();
    if (m.nugget) out.nuggets.middleRows(r0, per) = ch.nuggets;
    for (Eigen::Index i = 0; i < per; ++i) {
      double alpha = ch.fixed(i, 0);
      for (Eigen::Index k = 0; k < p; ++k) {
        const double sd = m.standardization.sd[static_cast<std::size_t>(k)];
        const double mu = m.standardization.mean[static_cast<std::size_t>(k)];
        out.fixed(r0 + i, 1 + k) = ch.fixed(i, 1 + k) / sd;
        alpha -= ch.fixed(i, 1 + k) * mu / sd;
      }
      out.fixed(r0 + i, 0) = alpha;
      if (m.spec.include_strata) out.fixed(r0 + i, m.pf - 1) = ch.fixed(i, m.pf - 1);
    }
    out.diagnostics.acceptance.push_back(ch.acceptance);
  }
  out.diagnostics = diagnostics(out);
  out.status = out.diagnostics.converged(1.1) ? FitStatus::Converged : FitStatus::FailedConvergence;
  return out;
}

}  // namespace vaxmap
