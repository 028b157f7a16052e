#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vaxmap/coverage_models.hpp"
#include "vaxmap/inference.hpp"
#include "vaxmap/survey_data.hpp"

namespace vaxmap {

inline constexpr std::size_t kDefaultPredictionDraws = 1000;

/// Coverage draws for a set of units: values(u, m) in [0, 1]. Column m of
/// every unit comes from the same joint posterior draw.
struct CoverageDraws {
  AreaLevel level = AreaLevel::Cell;
  ModelClass model_class = ModelClass::BinomialNN;
  std::vector<std::string> unit_ids;
  RowMatrix values;

  std::size_t units() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t draws() const { return static_cast<std::size_t>(values.cols()); }
};

// Unit id of a grid cell, from its raster position.
std::string cell_unit_id(const GridCell& cell);

// Evenly spaced posterior draw indices, at most `max_draws` of them.
std::vector<std::size_t> thin_indices(std::size_t available, std::size_t max_draws);

/// Class-specific coverage per grid cell and posterior draw. BinomialTS adds
/// a fresh epsilon per (cell, draw) from a stream keyed by (seed, cell index),
/// so results do not depend on `threads`.
CoverageDraws predict_cells(const PosteriorDraws& draws, const PopulationGrid& grid, std::uint64_t seed,
                            std::size_t max_draws = kDefaultPredictionDraws, int threads = 1);

/// Coverage target at arbitrary points (held-out clusters). `covariates` is
/// points x p on the original scale. Same dispatch as predict_cells.
RowMatrix predict_points(const PosteriorDraws& draws, std::span<const Point> points,
                         const std::vector<std::vector<double>>& covariates, const std::vector<bool>& urban,
                         std::uint64_t seed, std::size_t max_draws = kDefaultPredictionDraws, int threads = 1);

/// Population-weighted area draws p_i = sum_g q_ig p_g, per column.
CoverageDraws aggregate(const CoverageDraws& cell_draws, const AggregationWeights& weights);

// Binary draws file, magic "VAXDRAWS1".
void write_coverage_draws(const std::filesystem::path& path, const CoverageDraws& draws);
CoverageDraws read_coverage_draws(const std::filesystem::path& path);

}  // namespace vaxmap
