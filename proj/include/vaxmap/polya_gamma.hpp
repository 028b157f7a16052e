#pragma once

#include "vaxmap/rng.hpp"

namespace vaxmap {

/// Exact draws from the Polya-Gamma distribution PG(b, z) for integer b,
/// via the alternating-series rejection sampler of Polson, Scott and Windle
/// (sum of b independent PG(1, z) draws).
class PolyaGammaSampler {
 public:
  double draw(int b, double z, Rng& rng);
  double draw_one(double z, Rng& rng);

  static double mean(double b, double z);
  static double variance(double b, double z);

 private:
  double truncated_inverse_gaussian(double z, Rng& rng);
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
};

}  // namespace vaxmap
