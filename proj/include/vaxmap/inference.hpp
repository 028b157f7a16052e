#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vaxmap/coverage_models.hpp"
#include "vaxmap/diagnostics.hpp"
#include "vaxmap/spatial_field.hpp"
#include "vaxmap/survey_data.hpp"

namespace vaxmap {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct McmcConfig {
  int chains = 4;
  int iterations = 5000;  // per chain, burn-in included
  int burn_in = 2000;
  int thin = 3;
  std::uint64_t seed = 1;
  // Off: sample the prior (the likelihood contributes nothing).
  bool use_likelihood = true;
  // Worker cap for running chains concurrently; results do not depend on it.
  int threads = 1;

  void validate() const;
  int draws_per_chain() const { return (iterations - burn_in) / thin; }
};

enum class FitStatus { Converged, FailedConvergence };
const char* to_string(FitStatus s);

// Covariate centring/scaling applied inside the sampler.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;
};

/// Retained joint draws. Row m of every matrix belongs to the same joint
/// draw; rows are grouped by chain in chain order. Fixed effects are on the
/// original covariate scale: columns alpha, beta_1..beta_p, [gamma].
/// `hyper` columns: rho, sigma_s, then d or sigma_nugget when present.
struct PosteriorDraws {
  ModelSpec spec;  // priors resolved (rho_median set)
  McmcConfig mcmc;
  Lattice lattice;
  std::vector<std::string> cluster_ids;  // canonical (sorted) order
  Standardization standardization;
  std::string data_digest;
  std::vector<std::uint64_t> chain_seeds;
  int draws_per_chain = 0;

  RowMatrix fixed;
  RowMatrix hyper;
  RowMatrix field;
  RowMatrix nuggets;  // draws x clusters, nugget classes only

  DiagnosticsReport diagnostics;
  FitStatus status = FitStatus::Converged;

  std::size_t size() const { return static_cast<std::size_t>(fixed.rows()); }
  int chains() const { return static_cast<int>(chain_seeds.size()); }
  ParamVector param(std::size_t m) const;
  std::vector<std::string> hyper_names() const;
};

/// The target density of a fit: likelihood of the model class times the
/// priors, over (fixed effects, field, hyperparameters, cluster nuggets).
class PosteriorModel {
 public:
  PosteriorModel(const ModelSpec& spec, std::vector<ClusterObservation> clusters, const Lattice& lattice);
  ~PosteriorModel();
  PosteriorModel(PosteriorModel&&) noexcept;

  const ModelSpec& spec() const;
  const std::vector<ClusterObservation>& clusters() const;  // canonical order
  const Standardization& standardization() const;

  /// Unnormalized log posterior at an original-scale parameter vector.
  /// `nuggets` (canonical cluster order) is required for nugget classes and
  /// ignored otherwise.
  double log_posterior(const ParamVector& params, std::span<const double> nuggets = {}) const;

  struct Impl;
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Resolves defaults that depend on the data (rho_median = diameter / 5).
PriorSpec resolve_priors(const PriorSpec& priors, const std::vector<ClusterObservation>& clusters);

/// Draws from the joint posterior. Clusters are put in canonical order
/// (sorted by cluster_id) first, so row order of `data` is irrelevant.
/// A fit whose R-hat exceeds 1.1 on any monitored scalar still returns, with
/// status FailedConvergence.
PosteriorDraws fit(const ModelSpec& spec, const std::vector<ClusterObservation>& data, const Lattice& lattice,
                   const PriorSpec& priors, const McmcConfig& mcmc);

/// Split-R-hat and ESS for alpha, gamma, log rho, log sigma_s, log d or
/// log sigma_nugget, and five field nodes picked from the base seed.
DiagnosticsReport diagnostics(const PosteriorDraws& draws);

// Fitted-model archive, magic "VAXFIT1".
void write_fit(const std::filesystem::path& path, const PosteriorDraws& draws);
PosteriorDraws read_fit(const std::filesystem::path& path);

std::string data_digest(const std::vector<ClusterObservation>& canonical_clusters,
                        const std::vector<std::string>& covariate_names);

}  // namespace vaxmap
