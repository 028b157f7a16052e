#pragma once

#include <vector>

namespace vaxmap {

// Nodes and weights for integrals against a standard normal density:
//   E[f(Z)] ~= sum_i weight[i] * f(node[i]),  Z ~ N(0, 1).
struct NormalQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule with `n` points (Golub-Welsch), rescaled to N(0, 1).
NormalQuadrature gauss_hermite_normal(int n);

}  // namespace vaxmap
