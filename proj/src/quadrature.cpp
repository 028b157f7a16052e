#include "vaxmap/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "vaxmap/error.hpp"

namespace vaxmap {

NormalQuadrature gauss_hermite_normal(int n) {
  require(n >= 1, ErrorKind::Domain, "quadrature needs at least one node");
  // Jacobi matrix of the probabilists' Hermite polynomials: off-diagonal sqrt(k).
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  NormalQuadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    q.nodes[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    q.weights[i] = v * v;
    total += q.weights[i];
  }
  for (double& w : q.weights) w /= total;
  return q;
}

}  // namespace vaxmap
