#pragma once

#include <cstdint>
#include <vector>

#include "vaxmap/inference.hpp"
#include "vaxmap/simulator.hpp"

namespace vaxmap::testing {

// A 3 x 3 degree country with four states; small enough for quick fits.
inline GeometrySpec small_geometry() {
  GeometrySpec g;
  g.ncols = g.nrows = 12;
  g.xllcorner = 0.0;
  g.yllcorner = 0.0;
  g.cellsize = 0.25;
  g.states = 4;
  g.lgas_per_state = 2;
  g.covariate_names = {"x1"};
  return g;
}

inline TruthParams small_truth(ModelClass cls) {
  TruthParams t;
  t.model_class = cls;
  t.alpha = 0.3;
  t.beta = {0.8};
  t.gamma = 0.5;
  t.rho = 1.5;
  t.sigma_s = 0.7;
  if (cls == ModelClass::BetaBinomialOD) t.d = 3.0;
  if (has_cluster_nugget(cls)) t.sigma_nugget = 0.5;
  return t;
}

struct SmallProblem {
  SyntheticTruth truth;
  std::vector<ClusterObservation> clusters;
  Lattice lattice;
};

inline SmallProblem small_problem(ModelClass cls, std::uint64_t seed, int urban_psus = 3, int rural_psus = 4) {
  SmallProblem p;
  p.truth = simulate_truth(small_geometry(), small_truth(cls), seed);
  SurveyDesign d;
  d.urban_psus = urban_psus;
  d.rural_psus = rural_psus;
  p.clusters = draw_survey(p.truth, d, seed + 1);
  p.lattice = build_lattice(p.truth.grid.bbox(), 0.5, 1.0);
  return p;
}

inline McmcConfig quick_mcmc(std::uint64_t seed = 11) {
  McmcConfig m;
  m.chains = 2;
  m.iterations = 300;
  m.burn_in = 100;
  m.thin = 2;
  m.seed = seed;
  return m;
}

}  // namespace vaxmap::testing
