#include "vaxmap/spatial_field.hpp"

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {

namespace {

// Node count along one axis needed to span [lo, hi] from lo.
int axis_count(double lo, double hi, double spacing) {
  const double steps = (hi - lo) / spacing;
  return static_cast<int>(std::ceil(steps - 1e-9)) + 1;
}

void check_hyper(const FieldHyperparams& h) {
  if (!(h.rho > 0.0) || !std::isfinite(h.rho) || !(h.sigma_s > 0.0) || !std::isfinite(h.sigma_s))
    fail(ErrorKind::Domain, "field hyperparameters must be positive and finite (rho=" + format_double(h.rho) +
                                ", sigma_s=" + format_double(h.sigma_s) + ")");
}

SparseMatrix neumann_laplacian(const Lattice& lat) {
  const double inv_h2 = 1.0 / (lat.spacing * lat.spacing);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(lat.size() * 5);
  for (int r = 0; r < lat.nrows; ++r) {
    for (int c = 0; c < lat.ncols; ++c) {
      const auto i = static_cast<int>(lat.index(c, r));
      int degree = 0;
      auto link = [&](int cc, int rr) {
        if (cc < 0 || rr < 0 || cc >= lat.ncols || rr >= lat.nrows) return;
        trip.emplace_back(i, static_cast<int>(lat.index(cc, rr)), -inv_h2);
        ++degree;
      };
      link(c - 1, r);
      link(c + 1, r);
      link(c, r - 1);
      link(c, r + 1);
      trip.emplace_back(i, i, degree * inv_h2);
    }
  }
  const auto n = static_cast<Eigen::Index>(lat.size());
  SparseMatrix l(n, n);
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

// Eigenvalues of the 1-D reflecting second-difference operator.
std::vector<double> path_eigenvalues(int n, double spacing) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double inv_h2 = 1.0 / (spacing * spacing);
  for (int k = 0; k < n; ++k) out[k] = (2.0 - 2.0 * std::cos(std::numbers::pi * k / n)) * inv_h2;
  return out;
}

// Values of `m` laid onto `pattern` (m's pattern must be a subset).
std::vector<double> values_on(const SparseMatrix& pattern, const SparseMatrix& m) {
  std::vector<double> out(static_cast<std::size_t>(pattern.nonZeros()), 0.0);
  for (Eigen::Index col = 0; col < pattern.outerSize(); ++col) {
    SparseMatrix::InnerIterator pit(pattern, col);
    for (SparseMatrix::InnerIterator mit(m, col); mit; ++mit) {
      while (pit && pit.row() < mit.row()) ++pit;
      out[static_cast<std::size_t>(&pit.value() - pattern.valuePtr())] = mit.value();
    }
  }
  return out;
}

}  // namespace

bool Lattice::contains(double x, double y) const {
  const double tol = 1e-9 * spacing;
  return x >= x0 - tol && x <= xmax() + tol && y >= y0 - tol && y <= ymax() + tol;
}

Lattice build_lattice(const BoundingBox& bbox, double spacing, double padding, std::size_t max_nodes) {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) fail(ErrorKind::Domain, "lattice spacing must be > 0");
  if (!(padding >= 0.0) || !std::isfinite(padding)) fail(ErrorKind::Domain, "lattice padding must be >= 0");
  if (!(bbox.xmax >= bbox.xmin) || !(bbox.ymax >= bbox.ymin)) fail(ErrorKind::Domain, "invalid bounding box");
  Lattice lat;
  lat.x0 = bbox.xmin - padding;
  lat.y0 = bbox.ymin - padding;
  lat.spacing = spacing;
  const double nc = std::ceil((bbox.xmax + padding - lat.x0) / spacing - 1e-9) + 1.0;
  const double nr = std::ceil((bbox.ymax + padding - lat.y0) / spacing - 1e-9) + 1.0;
  if (nc * nr > static_cast<double>(max_nodes))
    fail(ErrorKind::Resource, "lattice of " + format_double(nc) + " x " + format_double(nr) + " nodes exceeds the cap of " +
                                  std::to_string(max_nodes) + "; use a coarser spacing");
  lat.ncols = axis_count(lat.x0, bbox.xmax + padding, spacing);
  lat.nrows = axis_count(lat.y0, bbox.ymax + padding, spacing);
  return lat;
}

double kappa_from_range(double rho) { return std::sqrt(8.0) / rho; }

double matern_correlation(double distance, double rho) {
  if (distance <= 0.0) return 1.0;
  const double u = kappa_from_range(rho) * distance;
  return u * boost::math::cyl_bessel_k(1, u);
}

SpdeOperator::SpdeOperator(const Lattice& lattice) : lattice_(lattice) {
  const auto n = static_cast<Eigen::Index>(lattice.size());
  SparseMatrix l = neumann_laplacian(lattice);
  SparseMatrix l2 = (l * l).pruned();
  SparseMatrix id(n, n);
  id.setIdentity();
  pattern_ = l2 + l + id;
  pattern_.makeCompressed();
  identity_vals_ = values_on(pattern_, id);
  laplacian_vals_ = values_on(pattern_, l);
  laplacian_sq_vals_ = values_on(pattern_, l2);
  eig_x_ = path_eigenvalues(lattice.ncols, lattice.spacing);
  eig_y_ = path_eigenvalues(lattice.nrows, lattice.spacing);
}

void SpdeOperator::fill_precision(const FieldHyperparams& hyper, SparseMatrix& q) const {
  check_hyper(hyper);
  const double kappa = kappa_from_range(hyper.rho);
  const double k2 = kappa * kappa;
  const double h2 = lattice_.spacing * lattice_.spacing;
  const double scale = h2 / (4.0 * std::numbers::pi * k2 * hyper.sigma_s * hyper.sigma_s);
  double* v = q.valuePtr();
  const std::size_t nnz = identity_vals_.size();
  for (std::size_t i = 0; i < nnz; ++i)
    v[i] = scale * (k2 * k2 * identity_vals_[i] + 2.0 * k2 * laplacian_vals_[i] + laplacian_sq_vals_[i]);
}

SparseMatrix SpdeOperator::precision(const FieldHyperparams& hyper) const {
  SparseMatrix q = pattern_;
  fill_precision(hyper, q);
  return q;
}

double SpdeOperator::log_det(const FieldHyperparams& hyper) const {
  check_hyper(hyper);
  const double kappa = kappa_from_range(hyper.rho);
  const double k2 = kappa * kappa;
  const double h2 = lattice_.spacing * lattice_.spacing;
  const double scale = h2 / (4.0 * std::numbers::pi * k2 * hyper.sigma_s * hyper.sigma_s);
  double acc = 0.0;
  for (double ey : eig_y_)
    for (double ex : eig_x_) acc += std::log(k2 + ex + ey);
  return static_cast<double>(size()) * std::log(scale) + 2.0 * acc;
}

SparseMatrix spde_precision(const Lattice& lattice, const FieldHyperparams& hyper) {
  check_hyper(hyper);
  return SpdeOperator(lattice).precision(hyper);
}

Projector project(const Lattice& lat, std::span<const Point> points) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(points.size() * 4);
  const double tol = 1e-9;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double fx = (points[i][0] - lat.x0) / lat.spacing;
    const double fy = (points[i][1] - lat.y0) / lat.spacing;
    if (!std::isfinite(fx) || !std::isfinite(fy) || fx < -tol || fy < -tol || fx > lat.ncols - 1 + tol ||
        fy > lat.nrows - 1 + tol)
      fail(ErrorKind::OutOfDomain, "point " + std::to_string(i) + " (" + format_double(points[i][0]) + ", " +
                                       format_double(points[i][1]) + ") lies outside the lattice");
    auto split = [](double f, int count, int& cell, double& t) {
      f = std::clamp(f, 0.0, static_cast<double>(count - 1));
      cell = std::min(static_cast<int>(std::floor(f)), std::max(count - 2, 0));
      t = f - cell;
      if (count == 1) t = 0.0;
    };
    int c = 0, r = 0;
    double tx = 0.0, ty = 0.0;
    split(fx, lat.ncols, c, tx);
    split(fy, lat.nrows, r, ty);
    const auto row = static_cast<int>(i);
    auto add = [&](int cc, int rr, double w) {
      if (w > 0.0) trip.emplace_back(row, static_cast<int>(lat.index(cc, rr)), w);
    };
    add(c, r, (1.0 - tx) * (1.0 - ty));
    if (lat.ncols > 1) add(c + 1, r, tx * (1.0 - ty));
    if (lat.nrows > 1) add(c, r + 1, (1.0 - tx) * ty);
    if (lat.ncols > 1 && lat.nrows > 1) add(c + 1, r + 1, tx * ty);
  }
  Projector p;
  p.matrix.resize(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(lat.size()));
  p.matrix.setFromTriplets(trip.begin(), trip.end());
  p.matrix.makeCompressed();
  return p;
}

void SparseCholesky::analyze(const SparseMatrix& a) {
  llt_.analyzePattern(a);
  n_ = a.rows();
  analyzed_ = true;
}

bool SparseCholesky::factorize(const SparseMatrix& a) {
  if (!analyzed_ || a.rows() != n_) analyze(a);
  llt_.factorize(a);
  return llt_.info() == Eigen::Success;
}

void SparseCholesky::compute(const SparseMatrix& a) {
  analyze(a);
  if (!factorize(a)) fail(ErrorKind::Numeric, "sparse Cholesky factorization failed (matrix not positive definite)");
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }

Eigen::VectorXd SparseCholesky::whiten_inverse(const Eigen::VectorXd& z) const {
  // P A P^T = L L^T, so x = P^T L^{-T} z has covariance A^{-1}.
  Eigen::VectorXd u = llt_.matrixU().solve(z);
  return llt_.permutationPinv() * u;
}

double SparseCholesky::log_det() const {
  // The diagonal of L sits first in each compressed column.
  const auto& l = llt_.matrixL().nestedExpression();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < l.outerSize(); ++j) acc += std::log(l.valuePtr()[l.outerIndexPtr()[j]]);
  return 2.0 * acc;
}

Eigen::VectorXd sample_field(const SparseMatrix& precision, std::uint64_t seed) {
  SparseCholesky chol;
  chol.compute(precision);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(precision.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return chol.whiten_inverse(z);
}

}  // namespace vaxmap
