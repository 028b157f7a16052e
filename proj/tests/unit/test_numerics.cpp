#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "vaxmap/diagnostics.hpp"
#include "vaxmap/parallel.hpp"
#include "vaxmap/polya_gamma.hpp"
#include "vaxmap/quadrature.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {
namespace {

TEST(GaussHermite, ThreePointRule) {
  const auto q = gauss_hermite_normal(3);
  ASSERT_EQ(q.nodes.size(), 3u);
  EXPECT_NEAR(q.nodes[0], -std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(q.nodes[1], 0.0, 1e-12);
  EXPECT_NEAR(q.weights[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(q.weights[1], 2.0 / 3.0, 1e-12);
}

TEST(GaussHermite, NormalMomentsExact) {
  for (int n : {8, 32, 64}) {
    const auto q = gauss_hermite_normal(n);
    // E[Z^(2k)] = (2k - 1)!!
    double dfact = 1.0;
    for (int k = 0; k <= 6; ++k) {
      if (k > 0) dfact *= 2.0 * k - 1.0;
      double m = 0.0, odd = 0.0;
      for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        m += q.weights[i] * std::pow(q.nodes[i], 2 * k);
        odd += q.weights[i] * std::pow(q.nodes[i], 2 * k + 1);
      }
      EXPECT_NEAR(m, dfact, 1e-9 * dfact) << "n=" << n << " k=" << k;
      EXPECT_NEAR(odd, 0.0, 1e-9 * dfact);
    }
  }
  EXPECT_VAXMAP_ERROR(gauss_hermite_normal(0), ErrorKind::Domain, "node");
}

TEST(PolyaGamma, MomentFormulas) {
  EXPECT_NEAR(PolyaGammaSampler::mean(1.0, 0.0), 0.25, 1e-14);
  EXPECT_NEAR(PolyaGammaSampler::variance(1.0, 0.0), 1.0 / 24.0, 1e-12);
  const double z = 1.5;
  EXPECT_NEAR(PolyaGammaSampler::mean(3.0, z), 3.0 / (2.0 * z) * std::tanh(z / 2.0), 1e-14);
}

TEST(PolyaGamma, SampleMomentsMatch) {
  PolyaGammaSampler pg;
  Rng rng(99);
  for (auto [b, z] : {std::pair{1, 0.0}, std::pair{1, 2.5}, std::pair{6, -0.7}, std::pair{2, 12.0}}) {
    const int draws = 40000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double w = pg.draw(b, z, rng);
      ASSERT_GT(w, 0.0);
      s += w;
      s2 += w * w;
    }
    const double mean = s / draws, var = s2 / draws - mean * mean;
    const double m0 = PolyaGammaSampler::mean(b, z), v0 = PolyaGammaSampler::variance(b, z);
    EXPECT_NEAR(mean, m0, 5.0 * std::sqrt(v0 / draws)) << "b=" << b << " z=" << z;
    EXPECT_NEAR(var, v0, 0.1 * v0) << "b=" << b << " z=" << z;
  }
}

ChainSamples normal_chains(int chains, int n, double phi, std::uint64_t seed, double shift = 0.0) {
  ChainSamples out(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
    double x = std_normal(rng);
    for (int i = 0; i < n; ++i) {
      x = phi * x + std::sqrt(1.0 - phi * phi) * std_normal(rng);
      out[static_cast<std::size_t>(c)].push_back(x + c * shift);
    }
  }
  return out;
}

TEST(Diagnostics, RhatNearOneForMixedChains) {
  EXPECT_NEAR(split_rhat(normal_chains(4, 2000, 0.0, 1)), 1.0, 0.01);
  EXPECT_GT(split_rhat(normal_chains(4, 2000, 0.0, 1, 2.0)), 1.5);
}

TEST(Diagnostics, EssMatchesAutoregressiveTheory) {
  const int n = 20000;
  EXPECT_NEAR(effective_sample_size(normal_chains(4, n, 0.0, 3)) / (4.0 * n), 1.0, 0.1);
  const double phi = 0.8;
  const double expected = 4.0 * n * (1 - phi) / (1 + phi);
  EXPECT_NEAR(effective_sample_size(normal_chains(4, n, phi, 4)) / expected, 1.0, 0.15);
}

TEST(Diagnostics, ShortInputsRejected) {
  EXPECT_VAXMAP_ERROR(split_rhat(normal_chains(1, 100, 0.0, 1)), ErrorKind::Validation, "two chains");
  EXPECT_VAXMAP_ERROR(split_rhat(normal_chains(2, 3, 0.0, 1)), ErrorKind::Validation, "four draws");
}

TEST(Diagnostics, ReportThresholds) {
  DiagnosticsReport r;
  r.rhat_available = true;
  r.scalars = {{"alpha", 1.02, 400.0}, {"gamma", 1.2, 50.0}};
  EXPECT_DOUBLE_EQ(r.max_rhat(), 1.2);
  EXPECT_DOUBLE_EQ(r.min_ess(), 50.0);
  EXPECT_FALSE(r.converged());
  EXPECT_TRUE(r.converged(1.25));
  EXPECT_NE(r.to_text().find("gamma"), std::string::npos);
}

TEST(Rng, DerivedStreamsIndependentOfOrder) {
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
  EXPECT_NE(derive_seed(7, {0}), derive_seed(8, {0}));
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(r);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(ParallelFor, ResultsIndependentOfThreads) {
  for (int threads : {1, 3, 8}) {
    std::vector<double> out(100);
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::sqrt(static_cast<double>(i)));
  }
  EXPECT_THROW(parallel_for(10, 4,
                            [](std::size_t i) {
                              if (i == 3) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

}  // namespace
}  // namespace vaxmap
