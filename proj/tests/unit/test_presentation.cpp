#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "support.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/presentation.hpp"

namespace vaxmap {
namespace {

using testing::TempDir;

CoverageDraws make_draws(std::vector<std::string> ids, std::vector<std::vector<double>> rows) {
  CoverageDraws d;
  d.level = AreaLevel::State;
  d.unit_ids = std::move(ids);
  d.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t u = 0; u < rows.size(); ++u)
    for (std::size_t m = 0; m < rows[u].size(); ++m)
      d.values(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(m)) = rows[u][m];
  return d;
}

CoverageDraws random_draws(std::size_t units, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for (std::size_t u = 0; u < units; ++u) {
    ids.push_back("u" + std::to_string(u));
    const double centre = 2.0 * z(rng);
    std::vector<double> r;
    for (std::size_t m = 0; m < draws; ++m) r.push_back(1.0 / (1.0 + std::exp(-(centre + 0.8 * z(rng)))));
    rows.push_back(r);
  }
  return make_draws(ids, rows);
}

TEST(Quantile, TypeSevenInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.9), 3.7);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
  EXPECT_VAXMAP_ERROR(quantile_sorted(std::vector<double>{}, 0.5), ErrorKind::Validation, "empty");
}

TEST(Summarize, HandComputed) {
  const auto d = make_draws({"a", "b"}, {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.0, 0.0, 0.0, 0.0, 0.0}});
  const auto s = summarize(d, 0.5);
  EXPECT_DOUBLE_EQ(s[0].median, 0.3);
  EXPECT_NEAR(s[0].mean, 0.3, 1e-15);
  EXPECT_NEAR(s[0].sd, std::sqrt(0.025), 1e-15);
  EXPECT_NEAR(s[0].lower, 0.2, 1e-15);
  EXPECT_NEAR(s[0].upper, 0.4, 1e-15);
  EXPECT_NEAR(s[0].ci_width, 0.2, 1e-15);
  ASSERT_TRUE(s[0].cv.has_value());
  EXPECT_NEAR(*s[0].cv, std::sqrt(0.025) / 0.3, 1e-14);
  EXPECT_FALSE(s[1].cv.has_value());
  EXPECT_VAXMAP_ERROR(summarize(d, 1.0), ErrorKind::Validation, "credible level");
}

TEST(Summarize, CsvWritesNaForMissingCv) {
  const auto d = make_draws({"a"}, {{0.0, 0.0}});
  TempDir dir;
  write_summary_csv(dir / "s.csv", summarize(d));
  const auto t = read_csv(dir / "s.csv");
  EXPECT_EQ(t.rows[0][static_cast<std::size_t>(t.column("cv"))], "NA");
}

TEST(Exceedance, InclusiveAndMonotone) {
  const auto d = make_draws({"a"}, {{0.2, 0.5, 0.8, 0.8}});
  EXPECT_DOUBLE_EQ(exceedance(d, 0.8)[0], 0.5);
  EXPECT_DOUBLE_EQ(exceedance(d, 0.0)[0], 1.0);
  const auto r = random_draws(20, 200, 4);
  for (double t = 0.0; t < 0.9; t += 0.05) {
    const auto lo = exceedance(r, t), hi = exceedance(r, t + 0.05);
    for (std::size_t u = 0; u < lo.size(); ++u) EXPECT_GE(lo[u], hi[u]);
  }
}

TEST(RankDistribution, ProbabilitiesAndExpectedRanks) {
  const auto d = random_draws(7, 300, 5);
  const auto r = rank_distribution(d);
  double er_sum = 0.0;
  for (std::size_t u = 0; u < 7; ++u) {
    EXPECT_NEAR(r.probs.row(static_cast<Eigen::Index>(u)).sum(), 1.0, 1e-12);
    EXPECT_NEAR(r.probs.col(static_cast<Eigen::Index>(u)).sum(), 1.0, 1e-12);
    er_sum += r.expected_rank[u];
  }
  EXPECT_NEAR(er_sum, 7.0 * 8.0 / 2.0, 1e-9);
}

TEST(RankDistribution, TiesBrokenByUnitId) {
  const auto d = make_draws({"z", "a", "m"}, {{0.5}, {0.5}, {0.1}});
  const auto r = rank_distribution(d);
  EXPECT_EQ(r.probs(2, 0), 1.0);  // m lowest
  EXPECT_EQ(r.probs(1, 1), 1.0);  // a before z
  EXPECT_EQ(r.probs(0, 2), 1.0);
  EXPECT_VAXMAP_ERROR(rank_distribution(make_draws({"a"}, {{0.1}})), ErrorKind::Validation, "two units");
}

TEST(Partition, IntervalMembership) {
  const auto p = Partition::from_thresholds({0.2, 0.5, 0.8});
  EXPECT_EQ(p.intervals(), 4);
  EXPECT_EQ(p.interval_of(0.0), 0);
  EXPECT_EQ(p.interval_of(0.19999), 0);
  EXPECT_EQ(p.interval_of(0.2), 1);
  EXPECT_EQ(p.interval_of(0.5), 2);
  EXPECT_EQ(p.interval_of(0.8), 3);
  EXPECT_EQ(p.interval_of(1.0), 3);
  EXPECT_EQ(p.interval_of(-0.1), 0);
  EXPECT_EQ(p.interval_of(1.5), 3);
}

TEST(Partition, NonIncreasingRejected) {
  EXPECT_VAXMAP_ERROR(Partition::from_thresholds({0.5, 0.5}), ErrorKind::DegeneratePartition, "strictly increasing");
  EXPECT_VAXMAP_ERROR(Partition::from_thresholds({0.0}), ErrorKind::DegeneratePartition, "strictly increasing");
  EXPECT_VAXMAP_ERROR((Partition{{0.0, 0.9}}.validate()), ErrorKind::DegeneratePartition, "endpoints");
}

// TCP of each unit by direct counting over intervals.
TEST(Classify, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = random_draws(9, 50 + seed, seed);
    const auto p = Partition::from_thresholds({0.2, 0.5, 0.8});
    const auto map = classify(d, p);
    double total = 0.0;
    for (std::size_t u = 0; u < d.units(); ++u) {
      std::vector<int> counts(4, 0);
      for (std::size_t m = 0; m < d.draws(); ++m) {
        const double v = d.values(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(m));
        int k = 0;
        if (v >= 0.2) k = 1;
        if (v >= 0.5) k = 2;
        if (v >= 0.8) k = 3;
        ++counts[static_cast<std::size_t>(k)];
      }
      const int best = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      EXPECT_EQ(map.assignment[u], best);
      const double tcp = static_cast<double>(counts[static_cast<std::size_t>(best)]) / static_cast<double>(d.draws());
      EXPECT_EQ(map.tcp[u], tcp);
      total += tcp;
    }
    EXPECT_EQ(map.atcp, total / static_cast<double>(d.units()));
  }
}

TEST(Classify, SingleIntervalIsCertain) {
  const auto map = classify(random_draws(5, 40, 1), Partition{{0.0, 1.0}});
  EXPECT_EQ(map.atcp, 1.0);
}

TEST(Classify, RefinementNeverRaisesTcp) {
  const auto d = random_draws(30, 200, 8);
  const auto coarse = classify(d, Partition::from_thresholds({0.5}));
  const auto fine = classify(d, Partition::from_thresholds({0.25, 0.5, 0.75}));
  for (std::size_t u = 0; u < d.units(); ++u) EXPECT_GE(coarse.tcp[u], fine.tcp[u]);
  EXPECT_GE(coarse.atcp, fine.atcp);
}

TEST(QuantilePartition, PooledQuantiles) {
  const std::vector<double> pooled{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto p = quantile_partition(pooled, 2);
  EXPECT_EQ(p.breaks, (std::vector<double>{0.0, 0.3, 1.0}));
  EXPECT_EQ(quantile_partition(pooled, 1).breaks, (std::vector<double>{0.0, 1.0}));
  EXPECT_VAXMAP_ERROR(quantile_partition(std::vector<double>{0.4, 0.4, 0.4}, 3), ErrorKind::DegeneratePartition,
                      "strictly increasing");
}

TEST(SelectGranularity, FallsBackToOneWithNotice) {
  const auto d = random_draws(10, 100, 2);
  const auto g = select_granularity(d, 1.0, 5);
  EXPECT_EQ(g.k, 1);
  EXPECT_EQ(g.map.atcp, 1.0);
  EXPECT_FALSE(g.notice.empty());
  EXPECT_EQ(g.atcp_by_k.front().first, 5);
  const auto easy = select_granularity(d, 0.01, 5);
  EXPECT_EQ(easy.k, 5);
  EXPECT_TRUE(easy.notice.empty());
}

TEST(SelectGranularity, SkipsDegeneratePartitions) {
  // Every draw equal: K = 4 and 3 repeat a breakpoint, K = 2 is still valid.
  const auto d = make_draws({"a", "b"}, {{0.6, 0.6}, {0.6, 0.6}});
  const auto g = select_granularity(d, 0.5, 4);
  EXPECT_EQ(g.k, 2);
  ASSERT_EQ(g.atcp_by_k.size(), 1u);
  EXPECT_EQ(g.atcp_by_k[0].first, 2);
}

TEST(Palette, ReadAndRamp) {
  TempDir dir;
  testing::write_file(dir / "p.csv", "interval_index,r,g,b\n2,0,255,0\n1,255,0,0\n");
  const auto p = Palette::read(dir / "p.csv");
  ASSERT_EQ(p.colors.size(), 2u);
  EXPECT_EQ(p.colors[0], (Rgb{255, 0, 0}));
  testing::write_file(dir / "bad.csv", "interval_index,r,g,b\n1,0,300,0\n");
  EXPECT_VAXMAP_ERROR(Palette::read(dir / "bad.csv"), ErrorKind::Validation, "0..255");
  testing::write_file(dir / "gap.csv", "interval_index,r,g,b\n1,0,0,0\n3,0,0,0\n");
  EXPECT_VAXMAP_ERROR(Palette::read(dir / "gap.csv"), ErrorKind::Validation, "without gaps");
  const auto r = Palette::ramp(4);
  ASSERT_EQ(r.colors.size(), 4u);
  EXPECT_EQ(r.colors.front(), (Rgb{215, 48, 39}));
  EXPECT_EQ(r.colors.back(), (Rgb{26, 152, 80}));
}

PopulationGrid two_state_grid() {
  PopulationGrid g;
  g.geometry = {3, 2, 0.0, 0.0, 1.0};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      if (r == 1 && c == 2) continue;  // no cell at this position
      GridCell cell;
      cell.row = r;
      cell.col = c;
      cell.pop = 1.0;
      if (!(r == 0 && c == 2)) cell.state_id = c == 0 ? "A" : "B";  // (0, 2) has no membership
      g.cells.push_back(cell);
    }
  return g;
}

std::string read_binary(const std::filesystem::path& p) { return read_text_file(p); }

TEST(Render, PaintsUnitsAndGraysTheRest) {
  const auto d = make_draws({"A", "B"}, {{0.1, 0.15, 0.9}, {0.9, 0.85, 0.95}});
  const auto map = classify(d, Partition::from_thresholds({0.5}));
  const Palette pal{{Rgb{10, 20, 30}, Rgb{200, 210, 220}}};
  TempDir dir;
  const RenderPaths out{dir / "m.ppm", dir / "legend.csv", dir / "legend.svg"};
  render(map, two_state_grid(), AreaLevel::State, pal, out);
  const std::string img = read_binary(out.image);
  const std::string head = "P6\n3 2\n255\n";
  ASSERT_EQ(img.substr(0, head.size()), head);
  ASSERT_EQ(img.size(), head.size() + 18);
  auto px = [&](int r, int c) {
    const std::size_t o = head.size() + static_cast<std::size_t>(r * 3 + c) * 3;
    return Rgb{static_cast<std::uint8_t>(img[o]), static_cast<std::uint8_t>(img[o + 1]),
               static_cast<std::uint8_t>(img[o + 2])};
  };
  EXPECT_EQ(px(0, 0), pal.colors[0]);
  EXPECT_EQ(px(1, 1), pal.colors[1]);
  EXPECT_EQ(px(0, 2), kNodataColor);
  EXPECT_EQ(px(1, 2), kNodataColor);
  const auto legend = read_csv(out.legend_csv);
  ASSERT_EQ(legend.rows.size(), 4u);
  EXPECT_EQ(legend.rows[0][0], "interval");
  EXPECT_EQ(legend.rows[2][1], "A");
  EXPECT_EQ(parse_double(legend.rows[2][7], "tcp"), map.tcp[0]);
  EXPECT_NE(read_text_file(out.legend_svg).find("<svg"), std::string::npos);
}

TEST(Render, MissingUnitIsCoverageGap) {
  const auto d = make_draws({"A", "Q"}, {{0.1}, {0.9}});
  const auto map = classify(d, Partition::from_thresholds({0.5}));
  TempDir dir;
  EXPECT_VAXMAP_ERROR(render(map, two_state_grid(), AreaLevel::State, Palette::ramp(2),
                             {dir / "m.ppm", dir / "l.csv", dir / "l.svg"}),
                      ErrorKind::CoverageGap, "'Q'");
}

TEST(Render, PaletteTooShort) {
  const auto d = make_draws({"A", "B"}, {{0.1}, {0.9}});
  const auto map = classify(d, Partition::from_thresholds({0.3, 0.6}));
  TempDir dir;
  EXPECT_VAXMAP_ERROR(render(map, two_state_grid(), AreaLevel::State, Palette::ramp(2),
                             {dir / "m.ppm", dir / "l.csv", dir / "l.svg"}),
                      ErrorKind::Validation, "palette");
}

TEST(Ridgeline, OrderedByMedianAndLossless) {
  const auto d = random_draws(6, 25, 3);
  TempDir dir;
  export_ridgeline(d, dir / "r.csv");
  const auto t = read_csv(dir / "r.csv");
  ASSERT_EQ(t.rows.size(), 6u * 25u);
  // Rebuild draws from the export and compare summaries.
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for (const auto& row : t.rows) {
    if (ids.empty() || ids.back() != row[0]) {
      ids.push_back(row[0]);
      rows.emplace_back();
    }
    rows.back().push_back(parse_double(row[2], "value"));
  }
  const auto rebuilt = summarize(make_draws(ids, rows));
  auto original = summarize(d);
  double last = -1.0;
  for (const auto& s : rebuilt) {
    const auto it = std::find_if(original.begin(), original.end(), [&](const auto& o) { return o.unit_id == s.unit_id; });
    ASSERT_NE(it, original.end());
    EXPECT_EQ(s.median, it->median);
    EXPECT_EQ(s.mean, it->mean);
    EXPECT_EQ(s.sd, it->sd);
    EXPECT_EQ(s.lower, it->lower);
    EXPECT_GE(s.median, last);
    last = s.median;
  }
}

}  // namespace
}  // namespace vaxmap
