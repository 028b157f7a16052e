#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vaxmap/inference.hpp"
#include "vaxmap/simulator.hpp"

namespace vaxmap::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

std::vector<Criterion> all_criteria();

Outcome closed_form_pmf();         // 1
Outcome lono_oracle();             // 2
Outcome matern_statistics();       // 3
Outcome simulation_recovery();     // 4
Outcome stratification_finding();  // 5
Outcome clustering_finding();      // 6
Outcome lono_ts_equivalence();     // 7
Outcome presentation_suite();      // 8
Outcome waic_and_metrics();        // 9
Outcome determinism();             // 10

// A simulated country, its truth and one survey drawn from it.
struct Scenario {
  GeometrySpec geometry;
  TruthParams truth;
  SurveyDesign design;
  std::uint64_t geometry_seed = 1;
  double lattice_spacing = 0.5;
  double lattice_padding = 2.0;
};

struct Replicate {
  SyntheticTruth truth;
  std::vector<ClusterObservation> clusters;
  Lattice lattice;
};

// The 5 x 5 degree desk-scale country shared by the simulation criteria.
Scenario desk_scenario(ModelClass truth_class);
Replicate make_replicate(const Scenario& scenario, std::uint64_t seed);
ModelSpec model_for(ModelClass cls, bool strata);

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 3);

}  // namespace vaxmap::acceptance

namespace vaxmap::acceptance {

// Replicates per simulation criterion (20 unless overridden for a quick look).
int replicates();
void set_replicates(int n);
// Required successes out of replicates(), scaled from a count out of 20.
int required(int out_of_20);

}  // namespace vaxmap::acceptance
