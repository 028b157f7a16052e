#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaxmap/inference.hpp"
#include "vaxmap/prediction.hpp"

namespace vaxmap {

/// ll(m, c): log-likelihood of cluster c under draw m, in the order of
/// `clusters`. Nugget classes integrate the nugget out with 32-point
/// Gauss-Hermite quadrature centred at the integrand's mode.
RowMatrix pointwise_loglik(const PosteriorDraws& draws, const std::vector<ClusterObservation>& clusters);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};

/// WAIC = -2 (lppd - p_waic). p_waic sums per-cluster sample variances
/// (divisor M - 1, zero for a single draw). `cluster_ids` only labels errors.
WaicResult waic_from_loglik(const RowMatrix& loglik, const std::vector<std::string>& cluster_ids = {});
WaicResult waic(const PosteriorDraws& draws, const std::vector<ClusterObservation>& clusters);

struct ErrorMetrics {
  double bias = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

// e = predicted - observed, unweighted.
ErrorMetrics error_metrics(std::span<const double> predicted, std::span<const double> observed);

struct FoldResult {
  std::string state_id;
  std::vector<std::string> cluster_ids;
  std::vector<double> predicted;  // posterior median of the class target
  std::vector<double> observed;   // y / n
  FitStatus status = FitStatus::Converged;
  ErrorMetrics metrics;
};

struct ValidationReport {
  ModelSpec spec;
  std::optional<WaicResult> waic;
  std::vector<FoldResult> folds;  // sorted by state id
  ErrorMetrics pooled;

  bool any_failed_convergence() const;
};

struct CvOptions {
  std::size_t max_prediction_draws = kDefaultPredictionDraws;
  // Folds run concurrently on this many workers; each fold fits serially.
  int threads = 1;
};

/// Leave-one-state-out: fold f holds out every cluster of the f-th state
/// (sorted by id), fits on the rest with seed derived from (mcmc.seed, f),
/// and predicts the held-out clusters. Metrics pool every held-out cluster.
ValidationReport loso_cv(const ModelSpec& spec, const std::vector<ClusterObservation>& data, const Lattice& lattice,
                         const PriorSpec& priors, const McmcConfig& mcmc, const CvOptions& options = {});

// Per-fold rows plus a final "pooled" row.
void write_validation_csv(const std::filesystem::path& path, const ValidationReport& report);
std::string validation_summary(const ValidationReport& report);

}  // namespace vaxmap
