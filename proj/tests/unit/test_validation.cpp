#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "support.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/validation.hpp"

namespace vaxmap {
namespace {

using testing::quick_mcmc;
using testing::small_problem;
using testing::TempDir;

TEST(Waic, SingleClusterSingleDraw) {
  RowMatrix ll(1, 1);
  ll << -2.3;
  const auto w = waic_from_loglik(ll);
  EXPECT_DOUBLE_EQ(w.p_waic, 0.0);
  EXPECT_DOUBLE_EQ(w.waic, 4.6);
}

TEST(Waic, MatchesBruteForce) {
  RowMatrix ll(5, 3);
  ll << -1.2, -3.4, -0.7,  //
      -1.5, -2.9, -0.9,    //
      -0.8, -3.8, -0.6,    //
      -1.1, -3.1, -1.4,    //
      -1.9, -2.6, -0.5;
  double lppd = 0.0, pw = 0.0;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, mean = 0.0;
    for (int m = 0; m < 5; ++m) {
      s += std::exp(ll(m, c));
      mean += ll(m, c);
    }
    lppd += std::log(s / 5.0);
    mean /= 5.0;
    double v = 0.0;
    for (int m = 0; m < 5; ++m) v += (ll(m, c) - mean) * (ll(m, c) - mean);
    pw += v / 4.0;
  }
  const auto w = waic_from_loglik(ll);
  EXPECT_NEAR(w.lppd, lppd, 1e-12);
  EXPECT_NEAR(w.p_waic, pw, 1e-12);
  EXPECT_NEAR(w.waic, -2.0 * (lppd - pw), 1e-8);
}

TEST(Waic, StableForVeryNegativeLogLik) {
  RowMatrix ll(2, 1);
  ll << -2000.0, -2001.0;
  const auto w = waic_from_loglik(ll);
  EXPECT_TRUE(std::isfinite(w.waic));
  EXPECT_NEAR(w.lppd, -2000.0 + std::log((1.0 + std::exp(-1.0)) / 2.0), 1e-9);
}

TEST(Waic, NonFiniteNamesCluster) {
  RowMatrix ll(2, 2);
  ll << -1.0, -1.0, -1.0, std::nan("");
  EXPECT_VAXMAP_ERROR(waic_from_loglik(ll, {"c1", "c2"}), ErrorKind::Numeric, "'c2'");
}

PosteriorDraws point_draws(ModelClass cls) {
  PosteriorDraws d;
  d.spec.model_class = cls;
  d.lattice.spacing = 1.0;
  d.lattice.ncols = d.lattice.nrows = 2;
  d.fixed.resize(3, 1);
  d.fixed << -0.3, 0.4, 1.1;
  d.field = RowMatrix::Zero(3, 4);
  d.field.col(3) << 0.2, -0.2, 0.5;
  d.hyper.resize(3, cls == ModelClass::BinomialNN ? 2 : 3);
  d.hyper.setConstant(1.0);
  if (d.hyper.cols() == 3) d.hyper.col(2) << 0.5, 1.0, 2.0;
  return d;
}

std::vector<ClusterObservation> two_clusters() {
  std::vector<ClusterObservation> c(2);
  c[0].cluster_id = "a";
  c[0].lon = 0.5;
  c[0].lat = 0.5;
  c[0].n = 8;
  c[0].y = 6;
  c[1].cluster_id = "b";
  c[1].lon = 1.0;
  c[1].lat = 1.0;
  c[1].n = 3;
  c[1].y = 0;
  return c;
}

TEST(PointwiseLoglik, BinomialDirect) {
  const auto d = point_draws(ModelClass::BinomialNN);
  const auto ll = pointwise_loglik(d, two_clusters());
  for (int m = 0; m < 3; ++m) {
    EXPECT_NEAR(ll(m, 0), loglik_binomial(6, 8, d.fixed(m, 0) + 0.25 * d.field(m, 3)), 1e-13);
    EXPECT_NEAR(ll(m, 1), loglik_binomial(0, 3, d.fixed(m, 0) + d.field(m, 3)), 1e-13);
  }
}

TEST(PointwiseLoglik, NuggetIntegratedOut) {
  for (ModelClass cls : {ModelClass::LonoBinomialOD, ModelClass::BinomialTS}) {
    const auto d = point_draws(cls);
    const auto ll = pointwise_loglik(d, two_clusters());
    for (int m = 0; m < 3; ++m) {
      const double eta = d.fixed(m, 0) + 0.25 * d.field(m, 3), s = d.hyper(m, 2);
      // Riemann sum over the nugget density.
      double acc = 0.0;
      const double h = 1e-3;
      for (double z = -10.0; z <= 10.0; z += h)
        acc += std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * std::exp(loglik_binomial(6, 8, eta + s * z)) * h;
      EXPECT_NEAR(ll(m, 0), std::log(acc), 1e-6) << to_string(cls);
    }
  }
}

TEST(PointwiseLoglik, BetaBinomialUsesDispersion) {
  const auto d = point_draws(ModelClass::BetaBinomialOD);
  const auto ll = pointwise_loglik(d, two_clusters());
  EXPECT_NEAR(ll(2, 1), loglik_betabinomial_eta(0, 3, d.fixed(2, 0) + d.field(2, 3), 2.0), 1e-13);
}

TEST(ErrorMetrics, HandBuiltIdentities) {
  const std::vector<double> obs{0.4, 0.6};
  const auto e = error_metrics(std::vector<double>{0.5, 0.5}, obs);
  EXPECT_NEAR(e.bias, 0.0, 1e-17);
  EXPECT_NEAR(e.mae, 0.1, 1e-15);
  EXPECT_NEAR(e.rmse, 0.1, 1e-15);
  const auto z = error_metrics(obs, obs);
  EXPECT_EQ(z.bias, 0.0);
  EXPECT_EQ(z.mae, 0.0);
  EXPECT_EQ(z.rmse, 0.0);
  EXPECT_VAXMAP_ERROR(error_metrics(obs, std::vector<double>{0.1}), ErrorKind::Dimension, "length");
}

TEST(ErrorMetrics, OrderingHolds) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(20), o(20);
    for (int i = 0; i < 20; ++i) {
      p[i] = u(rng);
      o[i] = u(rng);
    }
    const auto e = error_metrics(p, o);
    EXPECT_GE(e.rmse, e.mae - 1e-15);
    EXPECT_GE(e.mae, std::abs(e.bias) - 1e-15);
  }
}

TEST(LosoCv, FoldsCoverEveryStateDeterministically) {
  const auto prob = small_problem(ModelClass::BinomialNN, 31, 2, 3);
  ModelSpec spec;
  spec.include_strata = true;
  spec.covariate_names = {"x1"};
  CvOptions opt;
  opt.max_prediction_draws = 100;
  const auto a = loso_cv(spec, prob.clusters, prob.lattice, {}, quick_mcmc(), opt);
  opt.threads = 2;
  const auto b = loso_cv(spec, prob.clusters, prob.lattice, {}, quick_mcmc(), opt);
  ASSERT_EQ(a.folds.size(), 4u);
  EXPECT_EQ(a.folds[0].state_id, "S1");
  EXPECT_EQ(a.pooled.count, prob.clusters.size());
  EXPECT_GE(a.pooled.rmse, a.pooled.mae);
  EXPECT_GE(a.pooled.mae, std::abs(a.pooled.bias));
  EXPECT_LT(a.pooled.mae, 0.5);
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    EXPECT_EQ(a.folds[f].predicted, b.folds[f].predicted);
    for (double v : a.folds[f].predicted) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
  TempDir dir;
  write_validation_csv(dir / "v.csv", a);
  const auto t = read_csv(dir / "v.csv");
  ASSERT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows.back()[0], "pooled");
  EXPECT_NE(validation_summary(a).find("MAE"), std::string::npos);
}

TEST(LosoCv, NeedsTwoStates) {
  auto prob = small_problem(ModelClass::BinomialNN, 31, 2, 3);
  for (auto& c : prob.clusters) c.state_id = "S1";
  ModelSpec spec;
  spec.covariate_names = {"x1"};
  EXPECT_VAXMAP_ERROR(loso_cv(spec, prob.clusters, prob.lattice, {}, quick_mcmc()), ErrorKind::Validation,
                      "two states");
}

}  // namespace
}  // namespace vaxmap
