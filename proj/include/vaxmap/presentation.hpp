#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaxmap/prediction.hpp"

namespace vaxmap {

// Linear interpolation between order statistics of an ascending sample
// (h = (n - 1) p).
double quantile_sorted(std::span<const double> sorted, double p);

struct UnitSummary {
  std::string unit_id;
  double median = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double ci_width = 0.0;
  std::optional<double> cv;  // empty when the mean is 0
};

/// Equal-tailed credible intervals at `level`; sd uses divisor M - 1.
std::vector<UnitSummary> summarize(const CoverageDraws& draws, double level = 0.9);
void write_summary_csv(const std::filesystem::path& path, const std::vector<UnitSummary>& rows);

// Fraction of draws >= t, per unit.
std::vector<double> exceedance(const CoverageDraws& draws, double threshold);

/// probs(u, r - 1) = P(unit u has rank r); rank 1 is the lowest coverage.
struct RankDistribution {
  std::vector<std::string> unit_ids;
  RowMatrix probs;
  std::vector<double> expected_rank;
};

RankDistribution rank_distribution(const CoverageDraws& draws);

/// Breakpoints 0 = L0 < L1 < ... < LK = 1. Interval k (1-based) is
/// [L_{k-1}, L_k), the last one closed on the right.
struct Partition {
  std::vector<double> breaks;

  int intervals() const { return static_cast<int>(breaks.size()) - 1; }
  // 0-based interval index containing v (v is clamped to [0, 1]).
  int interval_of(double v) const;
  void validate() const;

  // Partition from interior thresholds, e.g. {0.2, 0.5, 0.8}.
  static Partition from_thresholds(const std::vector<double>& thresholds);
};

struct ClassifiedMap {
  Partition partition;
  std::vector<std::string> unit_ids;
  RowMatrix interval_probs;     // units x K
  std::vector<int> assignment;  // 0-based interval index
  std::vector<double> tcp;
  double atcp = 0.0;
};

ClassifiedMap classify(const CoverageDraws& draws, const Partition& partition);

/// L_k = k/K quantile of the pooled sample.
Partition quantile_partition(std::span<const double> pooled, int k);
Partition quantile_partition(const CoverageDraws& draws, int k);

struct GranularityChoice {
  int k = 1;
  ClassifiedMap map;
  std::vector<std::pair<int, double>> atcp_by_k;  // every K tried, descending
  std::string notice;                             // set when falling back to K = 1
};

/// Largest K <= k_max whose quantile-partition map reaches atcp_min.
GranularityChoice select_granularity(const CoverageDraws& draws, double atcp_min, int k_max);

using Rgb = std::array<std::uint8_t, 3>;
inline constexpr Rgb kNodataColor{128, 128, 128};

struct Palette {
  std::vector<Rgb> colors;  // one per interval

  static Palette read(const std::filesystem::path& path);
  // Sequential red-to-green ramp with k colors.
  static Palette ramp(int k);
};

struct RenderPaths {
  std::filesystem::path image;  // PPM (P6)
  std::filesystem::path legend_csv;
  std::filesystem::path legend_svg;
};

/// Paints every raster position by the interval assigned to the unit that
/// owns the cell at `level`; positions without a cell or membership are gray.
void render(const ClassifiedMap& map, const PopulationGrid& grid, AreaLevel level, const Palette& palette,
            const RenderPaths& out);

/// Renders per-unit values (for instance posterior medians) binned by a partition.
void render_values(const std::vector<std::string>& unit_ids, std::span<const double> values, const Partition& partition,
                   const PopulationGrid& grid, AreaLevel level, const Palette& palette, const RenderPaths& out);

/// Long-format `unit_id,draw,value` rows, units ordered by posterior median
/// (ties by unit id).
void export_ridgeline(const CoverageDraws& draws, const std::filesystem::path& path);

}  // namespace vaxmap
