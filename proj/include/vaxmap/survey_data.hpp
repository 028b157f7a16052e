#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vaxmap/raster.hpp"

namespace vaxmap {

struct BoundingBox {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  bool contains(double x, double y) const { return x >= xmin && x <= xmax && y >= ymin && y <= ymax; }
  double diameter() const;
  BoundingBox united(const BoundingBox& other) const;
};

/// One surveyed cluster (PSU). Invariants: n >= 1, 0 <= y <= n, finite
/// coordinates and covariates.
struct ClusterObservation {
  std::string cluster_id;
  double lon = 0.0;
  double lat = 0.0;
  std::string state_id;
  std::string lga_id;
  bool urban = false;
  int n = 1;
  int y = 0;
  std::vector<double> covariates;

  double observed_fraction() const { return static_cast<double>(y) / n; }
};

/// Reads the cluster CSV. Required columns are
/// `cluster_id,lon,lat,state_id,lga_id,urban,n,y` plus every name in
/// `covariate_names`; the covariate vector of each record follows that order.
/// Rows are reported 1-based, counting data rows only.
std::vector<ClusterObservation> load_clusters(const std::filesystem::path& path,
                                              const std::vector<std::string>& covariate_names,
                                              const std::optional<BoundingBox>& study_box = std::nullopt);

void save_clusters(const std::filesystem::path& path, const std::vector<ClusterObservation>& clusters,
                   const std::vector<std::string>& covariate_names);

BoundingBox cluster_bbox(const std::vector<ClusterObservation>& clusters);

struct GridCell {
  double lon = 0.0;
  double lat = 0.0;
  double pop = 0.0;
  bool urban = false;
  std::vector<double> covariates;
  std::string state_id;  // empty when the cell has no admin membership
  std::string lga_id;
  int row = 0;  // position in the source raster, row 0 = north
  int col = 0;

  bool has_membership() const { return !state_id.empty(); }
};

struct PopulationGrid {
  RasterGeometry geometry;
  std::vector<std::string> covariate_names;
  std::vector<GridCell> cells;

  BoundingBox bbox() const;
  // Cell index at a raster position, or -1 when the position holds no cell.
  std::vector<long> cell_index_by_position() const;
};

// Input rasters for a population grid. The membership raster holds integer
// area codes; `membership_codes` is the sidecar CSV `code,state_id,lga_id`.
struct GridSources {
  std::filesystem::path population;
  std::filesystem::path membership;
  std::filesystem::path membership_codes;
  std::optional<std::filesystem::path> urban;
  std::vector<std::pair<std::string, std::filesystem::path>> covariates;
};

PopulationGrid load_population_grid(const GridSources& sources);

// Writes pop.asc, membership.asc, membership_codes.csv, urban.asc and
// cov_<name>.asc into `dir`; returns the sources needed to load it back.
GridSources save_population_grid(const PopulationGrid& grid, const std::filesystem::path& dir);

enum class AreaLevel { State, Lga, National, Cell };

const char* to_string(AreaLevel level);
AreaLevel parse_area_level(const std::string& text);

struct AreaWeights {
  std::string area_id;
  std::vector<std::pair<std::size_t, double>> cells;  // (cell index, q)
};

/// Population-proportional weights q_g = pop_g / sum(pop in area). Areas are
/// sorted by id; the national level is one area named "national" over every
/// cell with admin membership.
struct AggregationWeights {
  AreaLevel level = AreaLevel::State;
  std::vector<AreaWeights> areas;
};

AggregationWeights aggregation_weights(const PopulationGrid& grid, AreaLevel level);

}  // namespace vaxmap
