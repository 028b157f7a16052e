#include "vaxmap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "vaxmap/error.hpp"
#include "vaxmap/quadrature.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {

namespace {

// Stream tags under the base seed.
enum : std::uint64_t { kStateCentres = 1, kLgaCentres, kPopulation, kCovariates, kField, kNugget };

std::string padded(const char* prefix, std::size_t i, int width) {
  std::string s = std::to_string(i);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return prefix + s;
}

// k distinct values from [0, n), in draw order.
std::vector<std::size_t> distinct_picks(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

double sq_dist(const GridCell& a, const GridCell& b) {
  return (a.lon - b.lon) * (a.lon - b.lon) + (a.lat - b.lat) * (a.lat - b.lat);
}

std::size_t nearest(const GridCell& c, const std::vector<GridCell>& cells, const std::vector<std::size_t>& centres) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < centres.size(); ++i)
    if (sq_dist(c, cells[centres[i]]) < sq_dist(c, cells[centres[best]])) best = i;
  return best;
}

}  // namespace

void GeometrySpec::validate() const {
  require(ncols >= 1 && nrows >= 1, ErrorKind::Spec, "grid needs at least one row and column");
  require(cellsize > 0.0, ErrorKind::Spec, "cellsize must be positive");
  require(states >= 1 && states <= ncols * nrows, ErrorKind::Spec, "states must lie in [1, cells]");
  require(lgas_per_state >= 1, ErrorKind::Spec, "lgas_per_state must be >= 1");
  require(urban_fraction >= 0.0 && urban_fraction <= 1.0, ErrorKind::Spec, "urban_fraction must lie in [0, 1]");
  require(base_population > 0.0 && urban_peak >= 0.0, ErrorKind::Spec, "population scales must be positive");
}

void TruthParams::validate(std::size_t covariates) const {
  require(beta.size() == covariates, ErrorKind::Spec,
          "truth has " + std::to_string(beta.size()) + " betas for " + std::to_string(covariates) + " covariates");
  require(rho > 0.0 && sigma_s >= 0.0, ErrorKind::Spec, "field needs rho > 0 and sigma_s >= 0");
  require(field_spacing > 0.0, ErrorKind::Spec, "field_spacing must be positive");
  const std::string cls = to_string(model_class);
  if (model_class == ModelClass::BetaBinomialOD) {
    require(d.has_value(), ErrorKind::Spec, cls + " truth needs d");
    require(*d > 0.0, ErrorKind::Spec, "d must be positive");
  } else {
    require(!d.has_value(), ErrorKind::Spec, "d is not a parameter of a " + cls + " truth");
  }
  if (has_cluster_nugget(model_class)) {
    require(sigma_nugget.has_value(), ErrorKind::Spec, cls + " truth needs sigma_nugget");
    require(*sigma_nugget >= 0.0, ErrorKind::Spec, "sigma_nugget must be >= 0");
  } else {
    require(!sigma_nugget.has_value(), ErrorKind::Spec, "sigma_nugget is not a parameter of a " + cls + " truth");
  }
}

void SurveyDesign::validate() const {
  require(urban_psus >= 0 && rural_psus >= 0 && urban_psus + rural_psus >= 1, ErrorKind::Spec,
          "PSUs per stratum must be >= 1");
  require(households_per_psu >= 1, ErrorKind::Spec, "households per PSU must be >= 1");
  require(children_mean > 0.0 && children_max >= 1, ErrorKind::Spec, "children distribution must allow n >= 1");
}

double SyntheticTruth::national_coverage() const {
  double num = 0.0, den = 0.0;
  for (std::size_t g = 0; g < grid.cells.size(); ++g) {
    if (!grid.cells[g].has_membership()) continue;
    num += grid.cells[g].pop * p_true[g];
    den += grid.cells[g].pop;
  }
  require(den > 0.0, ErrorKind::DegenerateArea, "grid has no populated cells");
  return num / den;
}

PopulationGrid simulate_geometry(const GeometrySpec& spec, std::uint64_t seed) {
  spec.validate();
  PopulationGrid grid;
  grid.geometry = {spec.ncols, spec.nrows, spec.xllcorner, spec.yllcorner, spec.cellsize};
  grid.covariate_names = spec.covariate_names;
  for (int r = 0; r < spec.nrows; ++r)
    for (int c = 0; c < spec.ncols; ++c) {
      GridCell cell;
      cell.row = r;
      cell.col = c;
      cell.lon = grid.geometry.center_x(c);
      cell.lat = grid.geometry.center_y(r);
      grid.cells.push_back(cell);
    }
  auto& cells = grid.cells;
  const std::size_t n = cells.size();
  const int sw = static_cast<int>(std::to_string(spec.states).size());

  Rng srng = make_rng(seed, {kStateCentres});
  const auto centres = distinct_picks(n, static_cast<std::size_t>(spec.states), srng);
  std::vector<std::size_t> state_of(n);
  std::vector<std::vector<std::size_t>> members(centres.size());
  for (std::size_t g = 0; g < n; ++g) {
    state_of[g] = nearest(cells[g], cells, centres);
    members[state_of[g]].push_back(g);
  }

  Rng lrng = make_rng(seed, {kLgaCentres});
  for (std::size_t s = 0; s < centres.size(); ++s) {
    const std::string sid = padded("S", s + 1, sw);
    const auto& m = members[s];
    const std::size_t k = std::min(m.size(), static_cast<std::size_t>(spec.lgas_per_state));
    std::vector<std::size_t> lga_centres;
    for (std::size_t i : distinct_picks(m.size(), k, lrng)) lga_centres.push_back(m[i]);
    for (std::size_t g : m) {
      cells[g].state_id = sid;
      cells[g].lga_id = sid + "-" + padded("L", nearest(cells[g], cells, lga_centres) + 1, 2);
    }
  }

  // Log-normal background times a Gaussian bump at each state centre.
  Rng prng = make_rng(seed, {kPopulation});
  const double radius = 1.5 * spec.cellsize;
  for (std::size_t g = 0; g < n; ++g) {
    const double d2 = sq_dist(cells[g], cells[centres[state_of[g]]]);
    const double bump = 1.0 + spec.urban_peak * std::exp(-d2 / (2.0 * radius * radius));
    cells[g].pop = spec.base_population * std::exp(0.5 * std_normal(prng)) * bump;
  }
  for (const auto& m : members) {
    std::vector<std::size_t> order = m;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cells[a].pop != cells[b].pop ? cells[a].pop > cells[b].pop : a < b;
    });
    const auto urban = static_cast<std::size_t>(std::lround(spec.urban_fraction * static_cast<double>(order.size())));
    for (std::size_t i = 0; i < urban; ++i) cells[order[i]].urban = true;
  }

  Rng crng = make_rng(seed, {kCovariates});
  for (auto& cell : cells) {
    cell.covariates.resize(spec.covariate_names.size());
    for (auto& x : cell.covariates) x = std_normal(crng);
  }
  return grid;
}

double logit_normal_mean(double eta, double sigma) {
  static const NormalQuadrature rule = gauss_hermite_normal(32);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * expit(eta + sigma * rule.nodes[i]);
  return sum;
}

SyntheticTruth simulate_truth(const GeometrySpec& geometry, const TruthParams& params, std::uint64_t seed) {
  return simulate_truth(simulate_geometry(geometry, seed), params, seed);
}

SyntheticTruth simulate_truth(const PopulationGrid& grid, const TruthParams& params, std::uint64_t seed) {
  params.validate(grid.covariate_names.size());
  require(!grid.cells.empty(), ErrorKind::Validation, "grid has no cells");
  SyntheticTruth t;
  t.grid = grid;
  t.params = params;
  t.seed = seed;
  const std::size_t n = grid.cells.size();

  t.field.assign(n, 0.0);
  if (params.sigma_s > 0.0) {
    const Lattice lat = build_lattice(grid.bbox(), params.field_spacing, params.rho, kDefaultMaxNodes * 4);
    const Eigen::VectorXd nodes = sample_field(spde_precision(lat, {params.rho, params.sigma_s}),
                                               derive_seed(seed, {kField}));
    std::vector<Point> pts;
    pts.reserve(n);
    for (const auto& c : grid.cells) pts.push_back({c.lon, c.lat});
    const Eigen::VectorXd s = project(lat, pts).apply(nodes);
    for (std::size_t g = 0; g < n; ++g) t.field[g] = s[static_cast<Eigen::Index>(g)];
  }

  t.eta.resize(n);
  for (std::size_t g = 0; g < n; ++g) {
    const auto& c = grid.cells[g];
    double eta = params.alpha + t.field[g] + (c.urban ? params.gamma : 0.0);
    for (std::size_t k = 0; k < params.beta.size(); ++k) eta += params.beta[k] * c.covariates[k];
    t.eta[g] = eta;
  }

  t.p_true.resize(n);
  Rng nrng = make_rng(seed, {kNugget});
  if (params.model_class == ModelClass::BinomialTS) t.epsilon.resize(n);
  for (std::size_t g = 0; g < n; ++g) {
    switch (params.model_class) {
      case ModelClass::BinomialNN:
      case ModelClass::BetaBinomialOD:
        t.p_true[g] = expit(t.eta[g]);
        break;
      case ModelClass::LonoBinomialOD:
        t.p_true[g] = logit_normal_mean(t.eta[g], *params.sigma_nugget);
        break;
      case ModelClass::BinomialTS:
        t.epsilon[g] = *params.sigma_nugget * std_normal(nrng);
        t.p_true[g] = expit(t.eta[g] + t.epsilon[g]);
        break;
    }
    t.p_true[g] = std::clamp(t.p_true[g], kProbFloor, 1.0 - kProbFloor);
  }
  return t;
}

std::vector<std::size_t> pps_systematic(const std::vector<double>& sizes, int k, std::uint64_t seed) {
  require(k >= 0, ErrorKind::Spec, "sample size must be >= 0");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(std::isfinite(sizes[i]) && sizes[i] >= 0.0, ErrorKind::Validation, "PPS sizes must be finite and >= 0");
    if (sizes[i] > 0.0) pool.push_back(i);
  }
  require(pool.size() >= static_cast<std::size_t>(k), ErrorKind::DesignInfeasible,
          "need " + std::to_string(k) + " units with positive size, have " + std::to_string(pool.size()));
  std::vector<std::size_t> chosen;
  int remaining = k;
  // Certainty units: expected count >= 1 given what is left.
  for (bool changed = true; changed && remaining > 0;) {
    changed = false;
    double total = 0.0;
    for (std::size_t i : pool) total += sizes[i];
    std::vector<std::size_t> keep;
    for (std::size_t i : pool) {
      if (sizes[i] * remaining >= total) {
        chosen.push_back(i);
        changed = true;
      } else {
        keep.push_back(i);
      }
    }
    remaining = k - static_cast<int>(chosen.size());
    pool.swap(keep);
  }
  if (remaining > 0) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> rot(0, pool.size() - 1);
    std::rotate(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rot(rng)), pool.end());
    double total = 0.0;
    for (std::size_t i : pool) total += sizes[i];
    const double step = total / remaining;
    double point = uniform01(rng) * step;
    double cum = 0.0;
    std::size_t j = 0;
    for (int taken = 0; taken < remaining; ++taken) {
      while (j < pool.size() && cum + sizes[pool[j]] <= point) cum += sizes[pool[j++]];
      chosen.push_back(pool[std::min(j, pool.size() - 1)]);
      point += step;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<ClusterObservation> draw_survey(const SyntheticTruth& truth, const SurveyDesign& design,
                                            std::uint64_t seed) {
  design.validate();
  const auto& cells = truth.grid.cells;
  // (state, rural flag) so urban strata sort first.
  std::map<std::pair<std::string, bool>, std::vector<std::size_t>> strata;
  for (std::size_t g = 0; g < cells.size(); ++g)
    if (cells[g].has_membership()) strata[{cells[g].state_id, !cells[g].urban}].push_back(g);

  std::vector<double> weights;
  for (int c = 0; c <= design.children_max; ++c)
    weights.push_back(std::exp(c * std::log(design.children_mean) - std::lgamma(c + 1.0)));
  std::discrete_distribution<int> children(weights.begin(), weights.end());

  std::vector<ClusterObservation> out;
  std::uint64_t stratum_index = 0;
  for (const auto& [key, members] : strata) {
    const int k = key.second ? design.rural_psus : design.urban_psus;
    const std::string name = key.first + (key.second ? "/rural" : "/urban");
    std::vector<double> sizes;
    for (std::size_t g : members) sizes.push_back(cells[g].pop);
    std::vector<std::size_t> picks;
    try {
      picks = pps_systematic(sizes, k, derive_seed(seed, {0x5EL, stratum_index}));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DesignInfeasible) throw;
      fail(ErrorKind::DesignInfeasible, "stratum " + name + ": " + e.what());
    }
    for (std::size_t pick : picks) {
      const std::size_t g = members[pick];
      const GridCell& cell = cells[g];
      Rng rng = make_rng(seed, {0xC1L, out.size()});
      int n = 0;
      while (n == 0)
        for (int h = 0; h < design.households_per_psu; ++h) n += children(rng);
      double p = truth.p_true[g];
      switch (truth.params.model_class) {
        case ModelClass::BinomialNN:
        case ModelClass::BinomialTS:
          break;
        case ModelClass::BetaBinomialOD: {
          const double d = *truth.params.d;
          std::gamma_distribution<double> ga(p * d, 1.0), gb((1.0 - p) * d, 1.0);
          const double a = ga(rng), b = gb(rng);
          p = a + b > 0.0 ? a / (a + b) : p;
          break;
        }
        case ModelClass::LonoBinomialOD:
          p = expit(truth.eta[g] + *truth.params.sigma_nugget * std_normal(rng));
          break;
      }
      std::binomial_distribution<int> bin(n, std::clamp(p, 0.0, 1.0));
      ClusterObservation obs;
      obs.cluster_id = padded("c", out.size() + 1, 5);
      obs.lon = cell.lon;
      obs.lat = cell.lat;
      obs.state_id = cell.state_id;
      obs.lga_id = cell.lga_id;
      obs.urban = cell.urban;
      obs.n = n;
      obs.y = bin(rng);
      obs.covariates = cell.covariates;
      out.push_back(std::move(obs));
    }
    ++stratum_index;
  }
  return out;
}

}  // namespace vaxmap
