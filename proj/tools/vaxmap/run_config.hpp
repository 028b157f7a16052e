#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaxmap/inference.hpp"
#include "vaxmap/prediction.hpp"
#include "vaxmap/simulator.hpp"
#include "vaxmap/survey_data.hpp"

namespace vaxmap::cli {

namespace fs = std::filesystem;

/// Everything a subcommand needs. Built from defaults, then the TOML config
/// file, then command-line overrides, in that order of precedence.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  fs::path output_dir = "out";

  // [paths]
  std::optional<fs::path> clusters;
  std::optional<fs::path> grid_dir;  // directory laid out as `simulate` writes it
  std::optional<fs::path> population;
  std::optional<fs::path> membership;
  std::optional<fs::path> membership_codes;
  std::optional<fs::path> urban;
  std::vector<std::pair<std::string, fs::path>> covariate_rasters;
  std::optional<fs::path> fit;
  std::optional<fs::path> draws;
  std::optional<fs::path> palette;

  // [model], [priors], [mcmc]
  ModelSpec model;
  double lattice_spacing = kDefaultSpacing;
  std::optional<double> lattice_padding;  // defaults to the prior range median
  std::size_t max_nodes = kDefaultMaxNodes;
  McmcConfig mcmc;

  // [predict], [aggregate], [presentation]
  std::size_t max_draws = kDefaultPredictionDraws;
  AreaLevel level = AreaLevel::State;
  std::vector<double> thresholds;
  int k_max = 5;
  double atcp_min = 0.7;
  double ci_level = 0.9;
  bool render = true;

  // [simulate.*]
  GeometrySpec geometry;
  TruthParams truth;
  SurveyDesign design;

  // The merged configuration as given, for the manifest.
  nlohmann::json echo;

  std::uint64_t require_seed() const;
  bool has_grid() const;
  GridSources grid_sources() const;
};

/// One command-line setting. Values are parsed as TOML (falling back to a
/// plain string) unless `as_string` is set.
struct Override {
  std::string key;  // dotted, e.g. "mcmc.chains"
  std::string value;
  bool as_string = false;
};

// Splits a `dotted.key=value` assignment.
Override parse_assignment(const std::string& text);

/// Builds a RunConfig from the config file and overrides, applied in order.
/// Unknown keys are rejected.
RunConfig load_run_config(const std::optional<fs::path>& config_file, const std::vector<Override>& overrides);

}  // namespace vaxmap::cli
