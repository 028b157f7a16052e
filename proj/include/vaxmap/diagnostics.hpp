#pragma once

#include <string>
#include <vector>

namespace vaxmap {

using ChainSamples = std::vector<std::vector<double>>;  // [chain][iteration]

// Split-R-hat (each chain halved). Needs >= 2 chains of >= 4 draws.
double split_rhat(const ChainSamples& chains);

// Multi-chain effective sample size with Geyer's initial monotone sequence.
double effective_sample_size(const ChainSamples& chains);

struct MonitoredScalar {
  std::string name;
  double rhat = 0.0;  // NaN when R-hat is unavailable
  double ess = 0.0;
};

struct DiagnosticsReport {
  bool rhat_available = false;
  std::vector<MonitoredScalar> scalars;
  std::vector<std::size_t> field_nodes;
  std::vector<double> acceptance;  // hyperparameter acceptance rate per chain

  double max_rhat() const;
  double min_ess() const;
  // True when every available R-hat is <= threshold.
  bool converged(double threshold = 1.1) const;
  std::string to_text() const;
};

}  // namespace vaxmap
