#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vaxmap/coverage_models.hpp"
#include "vaxmap/spatial_field.hpp"
#include "vaxmap/survey_data.hpp"

namespace vaxmap {

/// Synthetic country layout. States are Voronoi regions around randomly
/// chosen centre cells; LGAs split each state the same way. Each state has
/// one urban centre where population peaks, and the top `urban_fraction` of
/// cells by population within a state are urban.
struct GeometrySpec {
  int ncols = 80;
  int nrows = 80;
  double xllcorner = 2.7;
  double yllcorner = 4.3;
  double cellsize = 0.15;
  int states = 37;
  int lgas_per_state = 3;
  double urban_fraction = 0.2;
  double base_population = 100.0;
  double urban_peak = 20.0;  // population multiplier at a state's centre
  std::vector<std::string> covariate_names{"x1"};

  void validate() const;
};

/// Generating parameters. `beta` follows GeometrySpec::covariate_names.
/// Exactly the class's dispersion parameter must be set: `d` for
/// BetaBinomialOD, `sigma_nugget` for LonoBinomialOD and BinomialTS, neither
/// for BinomialNN.
struct TruthParams {
  ModelClass model_class = ModelClass::BinomialNN;
  double alpha = 0.0;
  std::vector<double> beta;
  double gamma = 0.0;
  double rho = 2.0;
  double sigma_s = 1.0;
  std::optional<double> d;
  std::optional<double> sigma_nugget;
  double field_spacing = kDefaultSpacing;

  void validate(std::size_t covariates) const;
};

struct SyntheticTruth {
  PopulationGrid grid;
  TruthParams params;
  std::uint64_t seed = 0;
  std::vector<double> field;    // S at each cell centre
  std::vector<double> eta;      // linear predictor per cell, nugget excluded
  std::vector<double> epsilon;  // per-cell nugget (BinomialTS only)
  std::vector<double> p_true;   // class target coverage per cell

  // Population-weighted mean of p_true over cells with membership.
  double national_coverage() const;
};

PopulationGrid simulate_geometry(const GeometrySpec& geometry, std::uint64_t seed);

/// Field, covariates and per-cell truth on a fresh synthetic grid.
SyntheticTruth simulate_truth(const GeometrySpec& geometry, const TruthParams& params, std::uint64_t seed);
// Same, over an existing grid (its covariates are kept).
SyntheticTruth simulate_truth(const PopulationGrid& grid, const TruthParams& params, std::uint64_t seed);

// E[expit(eta + sigma Z)] by 32-point Gauss-Hermite quadrature.
double logit_normal_mean(double eta, double sigma);

/// Strata are state x {urban, rural}; each stratum receives
/// `urban_psus` or `rural_psus` clusters.
struct SurveyDesign {
  int urban_psus = 2;
  int rural_psus = 2;
  int households_per_psu = 30;
  double children_mean = 0.3;  // Poisson rate before truncation
  int children_max = 2;

  void validate() const;
};

/// PPS systematic sampling without replacement within each stratum, then
/// household sampling and the class observation model. Clusters come out in
/// stratum order (state id, urban before rural).
std::vector<ClusterObservation> draw_survey(const SyntheticTruth& truth, const SurveyDesign& design,
                                            std::uint64_t seed);

/// Indices of `k` units drawn with probability proportional to `sizes`,
/// without replacement. Units whose expected count reaches one are taken
/// with certainty; the rest by systematic sampling on a randomly rotated
/// cumulative list. Returned in ascending order.
std::vector<std::size_t> pps_systematic(const std::vector<double>& sizes, int k, std::uint64_t seed);

}  // namespace vaxmap
