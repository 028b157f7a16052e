#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "support.hpp"
#include "vaxmap/rng.hpp"
#include "vaxmap/simulator.hpp"

namespace vaxmap {
namespace {

GeometrySpec tiny_geometry(int side, int states) {
  GeometrySpec g;
  g.ncols = g.nrows = side;
  g.xllcorner = g.yllcorner = 0.0;
  g.cellsize = 0.2;
  g.states = states;
  g.lgas_per_state = 1;
  g.covariate_names = {"x1"};
  return g;
}

TruthParams flat_truth() {
  TruthParams t;
  t.alpha = 0.0;
  t.beta = {0.0};
  t.gamma = 0.0;
  t.sigma_s = 0.0;
  t.rho = 1.0;
  return t;
}

TEST(SimulateTruth, FlatTruthIsOneHalf) {
  const auto t = simulate_truth(tiny_geometry(10, 3), flat_truth(), 1);
  for (double p : t.p_true) EXPECT_EQ(p, 0.5);
}

TEST(SimulateTruth, UrbanShiftIsExact) {
  auto params = flat_truth();
  params.gamma = 0.35;
  const auto t = simulate_truth(tiny_geometry(10, 3), params, 2);
  int urban = 0;
  for (std::size_t g = 0; g < t.eta.size(); ++g) {
    EXPECT_EQ(t.eta[g], t.grid.cells[g].urban ? 0.35 : 0.0);
    urban += t.grid.cells[g].urban;
  }
  EXPECT_GT(urban, 0);
}

TEST(SimulateTruth, DeterministicInSeed) {
  TruthParams p = flat_truth();
  p.model_class = ModelClass::BinomialTS;
  p.sigma_s = 1.0;
  p.sigma_nugget = 0.5;
  const auto a = simulate_truth(tiny_geometry(10, 3), p, 9);
  const auto b = simulate_truth(tiny_geometry(10, 3), p, 9);
  const auto c = simulate_truth(tiny_geometry(10, 3), p, 10);
  EXPECT_EQ(a.p_true, b.p_true);
  EXPECT_EQ(a.epsilon, b.epsilon);
  EXPECT_NE(a.p_true, c.p_true);
  for (double v : a.p_true) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(SimulateTruth, ClassParameterMismatchIsSpecError) {
  TruthParams p = flat_truth();
  p.model_class = ModelClass::LonoBinomialOD;
  p.sigma_nugget = 0.7;
  p.d = 2.0;
  EXPECT_VAXMAP_ERROR(simulate_truth(tiny_geometry(5, 1), p, 1), ErrorKind::Spec, "d is not a parameter");
  p.d.reset();
  p.sigma_nugget.reset();
  EXPECT_VAXMAP_ERROR(simulate_truth(tiny_geometry(5, 1), p, 1), ErrorKind::Spec, "needs sigma_nugget");
  p = flat_truth();
  p.beta = {};
  EXPECT_VAXMAP_ERROR(simulate_truth(tiny_geometry(5, 1), p, 1), ErrorKind::Spec, "betas");
}

TEST(SimulateTruth, LonoTargetIsMarginalMean) {
  TruthParams p = flat_truth();
  p.model_class = ModelClass::LonoBinomialOD;
  p.alpha = 1.2;
  p.sigma_nugget = 0.73;
  const auto t = simulate_truth(tiny_geometry(4, 1), p, 3);
  EXPECT_NEAR(t.p_true[0], logit_normal_mean(1.2, 0.73), 1e-15);
  EXPECT_LT(t.p_true[0], expit(1.2));
}

// Semivariogram of the simulated logit surface against the Matern model.
TEST(SimulateTruth, VariogramMatchesMatern) {
  GeometrySpec g = tiny_geometry(30, 1);
  g.cellsize = 0.1;
  TruthParams p = flat_truth();
  p.sigma_s = 0.8;
  p.rho = 1.0;
  p.field_spacing = 0.1;
  const int reps = 30;
  std::map<int, std::pair<double, int>> gamma_by_lag;  // lag in cells -> (sum, count)
  double var = 0.0;
  int var_n = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto t = simulate_truth(g, p, 100 + static_cast<std::uint64_t>(rep));
    for (std::size_t i = 0; i < t.eta.size(); ++i) {
      var += t.eta[i] * t.eta[i];
      ++var_n;
      const auto& a = t.grid.cells[i];
      for (int lag : {2, 5, 10}) {
        if (a.col + lag >= g.ncols) continue;
        const std::size_t j = i + static_cast<std::size_t>(lag);
        gamma_by_lag[lag].first += 0.5 * std::pow(t.eta[i] - t.eta[j], 2);
        ++gamma_by_lag[lag].second;
      }
    }
  }
  EXPECT_NEAR(std::sqrt(var / var_n), 0.8, 0.12);
  for (const auto& [lag, acc] : gamma_by_lag) {
    const double model = 0.64 * (1.0 - matern_correlation(lag * 0.1, 1.0));
    EXPECT_NEAR(acc.first / acc.second, model, 0.2 * model + 0.02) << "lag " << lag;
  }
}

TEST(PpsSystematic, SingleUnitCertain) {
  EXPECT_EQ(pps_systematic({3.0}, 1, 1), (std::vector<std::size_t>{0}));
}

TEST(PpsSystematic, SelectionFrequenciesMatchSizes) {
  std::vector<int> hits(3, 0);
  const int reps = 5000;
  for (int r = 0; r < reps; ++r) ++hits[pps_systematic({1.0, 2.0, 7.0}, 1, derive_seed(5, {static_cast<std::uint64_t>(r)}))[0]];
  EXPECT_NEAR(hits[0] / double(reps), 0.1, 0.02);
  EXPECT_NEAR(hits[1] / double(reps), 0.2, 0.02);
  EXPECT_NEAR(hits[2] / double(reps), 0.7, 0.02);
}

TEST(PpsSystematic, InclusionProbabilitiesWithoutReplacement) {
  const std::vector<double> sizes{1, 2, 3, 4};
  std::vector<int> hits(4, 0);
  const int reps = 5000;
  for (int r = 0; r < reps; ++r) {
    const auto s = pps_systematic(sizes, 2, derive_seed(6, {static_cast<std::uint64_t>(r)}));
    ASSERT_EQ(s.size(), 2u);
    ASSERT_NE(s[0], s[1]);
    for (auto i : s) ++hits[i];
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(hits[i] / double(reps), 2.0 * sizes[i] / 10.0, 0.025);
}

TEST(PpsSystematic, CertaintyUnitsAndInfeasible) {
  const auto s = pps_systematic({10.0, 1.0, 1.0, 0.0}, 2, 3);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 0u);
  EXPECT_EQ(pps_systematic({1.0, 1.0}, 2, 3), (std::vector<std::size_t>{0, 1}));
  EXPECT_VAXMAP_ERROR(pps_systematic({1.0, 0.0}, 2, 3), ErrorKind::DesignInfeasible, "positive size");
}

TEST(DrawSurvey, TwoPsusPerStratumOverDeskGrid) {
  const auto truth = simulate_truth(GeometrySpec{}, [] {
    TruthParams t;
    t.beta = {0.5};
    return t;
  }(), 4);
  std::set<std::pair<std::string, bool>> strata;
  for (const auto& c : truth.grid.cells) strata.emplace(c.state_id, c.urban);
  ASSERT_EQ(strata.size(), 74u);
  const auto clusters = draw_survey(truth, {}, 8);
  EXPECT_EQ(clusters.size(), 148u);
  std::set<std::string> ids;
  for (const auto& c : clusters) {
    EXPECT_GE(c.n, 1);
    EXPECT_LE(c.n, 60);
    EXPECT_LE(c.y, c.n);
    ids.insert(c.cluster_id);
  }
  EXPECT_EQ(ids.size(), clusters.size());
  EXPECT_EQ(clusters.front().cluster_id, "c00001");
}

TEST(DrawSurvey, InfeasibleStratumNamed) {
  const auto truth = simulate_truth(tiny_geometry(6, 2), flat_truth(), 1);
  SurveyDesign d;
  d.urban_psus = 50;
  EXPECT_VAXMAP_ERROR(draw_survey(truth, d, 1), ErrorKind::DesignInfeasible, "/urban");
}

TEST(DrawSurvey, DeterministicInSeed) {
  const auto truth = simulate_truth(tiny_geometry(10, 3), flat_truth(), 1);
  const auto a = draw_survey(truth, {}, 4), b = draw_survey(truth, {}, 4), c = draw_survey(truth, {}, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].lon, b[i].lon);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].n, b[i].n);
  }
  bool differs = a.size() != c.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].y != c[i].y || a[i].lon != c[i].lon;
  EXPECT_TRUE(differs);
}

class ObservedFractionConverges : public ::testing::TestWithParam<ModelClass> {};

// Every cell of a rural-only single-state grid is sampled each replicate.
TEST_P(ObservedFractionConverges, ToTarget) {
  GeometrySpec g = tiny_geometry(3, 1);
  g.urban_fraction = 0.0;
  TruthParams p = flat_truth();
  p.model_class = GetParam();
  p.alpha = 0.9;
  p.sigma_s = 0.5;
  if (p.model_class == ModelClass::BetaBinomialOD) p.d = 2.0;
  if (has_cluster_nugget(p.model_class)) p.sigma_nugget = 1.0;
  const auto truth = simulate_truth(g, p, 12);
  SurveyDesign d;
  d.urban_psus = 0;
  d.rural_psus = 9;
  std::vector<double> ys(9, 0.0), ns(9, 0.0);
  const int reps = 3000;
  for (int r = 0; r < reps; ++r) {
    const auto clusters = draw_survey(truth, d, 1000 + static_cast<std::uint64_t>(r));
    ASSERT_EQ(clusters.size(), 9u);
    for (const auto& c : clusters) {
      const auto cell = static_cast<std::size_t>(std::lround((c.lon - 0.1) / 0.2) + 3 * std::lround((0.5 - c.lat) / 0.2));
      ys[cell] += c.y;
      ns[cell] += c.n;
    }
  }
  for (std::size_t g2 = 0; g2 < 9; ++g2) {
    const double p0 = truth.p_true[g2];
    // Overdispersion at d = 2 or sigma = 1 roughly quadruples the binomial variance.
    const double se = std::sqrt(p0 * (1 - p0) / ns[g2]) * 2.0;
    EXPECT_NEAR(ys[g2] / ns[g2], p0, 4.0 * se) << to_string(p.model_class) << " cell " << g2;
  }
}

INSTANTIATE_TEST_SUITE_P(AllClasses, ObservedFractionConverges,
                         ::testing::Values(ModelClass::BinomialNN, ModelClass::BetaBinomialOD,
                                           ModelClass::LonoBinomialOD, ModelClass::BinomialTS),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(SimulateGeometry, StatesAndUrbanCentres) {
  const auto grid = simulate_geometry(tiny_geometry(20, 5), 3);
  std::map<std::string, std::pair<int, int>> counts;  // state -> (cells, urban)
  for (const auto& c : grid.cells) {
    ++counts[c.state_id].first;
    counts[c.state_id].second += c.urban;
    EXPECT_EQ(c.lga_id.rfind(c.state_id, 0), 0u);
  }
  EXPECT_EQ(counts.size(), 5u);
  for (const auto& [s, n] : counts) EXPECT_EQ(n.second, static_cast<int>(std::lround(0.2 * n.first))) << s;
}

}  // namespace
}  // namespace vaxmap
