#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vaxmap/survey_data.hpp"

namespace vaxmap {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr std::size_t kDefaultMaxNodes = 50000;
inline constexpr double kDefaultSpacing = 0.25;

/// Regular lattice of GMRF nodes. Node (col, row) sits at
/// (x0 + col*spacing, y0 + row*spacing); row 0 is the southern edge and the
/// node index is row*ncols + col.
struct Lattice {
  double x0 = 0.0;
  double y0 = 0.0;
  double spacing = 1.0;
  int ncols = 1;
  int nrows = 1;

  std::size_t size() const { return static_cast<std::size_t>(ncols) * nrows; }
  std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * ncols + col; }
  double node_x(int col) const { return x0 + col * spacing; }
  double node_y(int row) const { return y0 + row * spacing; }
  double xmax() const { return node_x(ncols - 1); }
  double ymax() const { return node_y(nrows - 1); }
  bool contains(double x, double y) const;

  bool operator==(const Lattice&) const = default;
};

/// Lattice covering `data_bbox` expanded by `padding` on every side.
Lattice build_lattice(const BoundingBox& data_bbox, double spacing, double padding,
                      std::size_t max_nodes = kDefaultMaxNodes);

struct FieldHyperparams {
  double rho = 1.0;      // spatial range, degrees
  double sigma_s = 1.0;  // marginal SD, logit scale
};

// Matern nu = 1 in two dimensions: kappa = sqrt(8) / rho.
double kappa_from_range(double rho);

// Closed-form Matern (nu = 1) correlation at distance d for range rho.
double matern_correlation(double distance, double rho);

/// Precision of the alpha = 2 SPDE on the lattice:
///   Q = tau^2 h^2 (kappa^2 I + L)^2,  tau^2 = 1 / (4 pi kappa^2 sigma_s^2),
/// where L is the 5-point Laplacian with reflecting (Neumann) boundary.
/// Interior rows carry the 13-point stencil.
SparseMatrix spde_precision(const Lattice& lattice, const FieldHyperparams& hyper);

/// Reusable pieces of the SPDE precision for repeated evaluation at varying
/// hyperparameters: Q(theta) is a linear combination of I, L and L^2 over one
/// fixed sparsity pattern, and log|Q| has a closed form through the
/// Neumann-Laplacian eigenvalues.
class SpdeOperator {
 public:
  explicit SpdeOperator(const Lattice& lattice);

  const Lattice& lattice() const { return lattice_; }
  std::size_t size() const { return lattice_.size(); }

  // Pattern shared by every precision this operator produces.
  const SparseMatrix& pattern() const { return pattern_; }

  // Writes Q(hyper) into `q`, which must have pattern(); values only.
  void fill_precision(const FieldHyperparams& hyper, SparseMatrix& q) const;
  SparseMatrix precision(const FieldHyperparams& hyper) const;

  double log_det(const FieldHyperparams& hyper) const;

 private:
  Lattice lattice_;
  SparseMatrix pattern_;
  std::vector<double> identity_vals_;
  std::vector<double> laplacian_vals_;
  std::vector<double> laplacian_sq_vals_;
  std::vector<double> eig_x_;
  std::vector<double> eig_y_;
};

/// Sparse row-stochastic map from query points to lattice nodes (bilinear,
/// at most four nonzeros per row; exact zeros are dropped).
struct Projector {
  SparseRowMatrix matrix;

  std::size_t points() const { return static_cast<std::size_t>(matrix.rows()); }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& field) const { return matrix * field; }
};

using Point = std::array<double, 2>;

Projector project(const Lattice& lattice, std::span<const Point> points);

/// Sparse LL^T with a fill-reducing ordering. Wraps the factorization so a
/// fixed pattern is analysed once and refactorized numerically.
class SparseCholesky {
 public:
  void analyze(const SparseMatrix& a);
  // Returns false if the matrix is not numerically SPD.
  bool factorize(const SparseMatrix& a);
  void compute(const SparseMatrix& a);  // analyze + factorize, throws on failure

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  // x = A^{-1/2}-type transform: returns x with Cov(x) = A^{-1} when z ~ N(0, I).
  Eigen::VectorXd whiten_inverse(const Eigen::VectorXd& z) const;
  double log_det() const;
  Eigen::Index size() const { return n_; }

 private:
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  Eigen::Index n_ = 0;
  bool analyzed_ = false;
};

/// Exact draw from N(0, Q^{-1}); deterministic in `seed`.
Eigen::VectorXd sample_field(const SparseMatrix& precision, std::uint64_t seed);

}  // namespace vaxmap
