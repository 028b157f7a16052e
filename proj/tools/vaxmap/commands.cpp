#include "commands.hpp"

#include <algorithm>
#include <cmath>

#include "cli.hpp"
#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"
#include "vaxmap/presentation.hpp"
#include "vaxmap/rng.hpp"
#include "vaxmap/validation.hpp"

namespace vaxmap::cli {

namespace {

// Stream tags for seeds derived from the run seed.
constexpr std::uint64_t kSurveyStream = 1;
constexpr std::uint64_t kPredictStream = 0x7E;
constexpr std::uint64_t kFoldStream = 0xCF;

const fs::path& input_path(Context& ctx, const std::optional<fs::path>& p, const char* key) {
  require(p.has_value(), ErrorKind::Validation, std::string("this command needs ") + key);
  require(fs::exists(*p), ErrorKind::Io, std::string(key) + " '" + p->string() + "' does not exist");
  ctx.manifest.add_input(*p);
  return *p;
}

// Output file inside the output directory; refuses to overwrite an input.
fs::path output_path(Context& ctx, const std::string& name) {
  const fs::path p = ctx.config.output_dir / name;
  fs::create_directories(p.parent_path());
  if (fs::exists(p))
    for (const auto& in : ctx.manifest.inputs())
      require(!fs::equivalent(p, in), ErrorKind::Validation, "output '" + p.string() + "' would overwrite an input");
  return p;
}

void record(Context& ctx, const fs::path& p) { ctx.manifest.add_output(ctx.config.output_dir, p); }

PopulationGrid load_grid(Context& ctx) {
  require(ctx.config.has_grid(), ErrorKind::Validation, "this command needs paths.grid_dir or explicit grid paths");
  const GridSources src = ctx.config.grid_sources();
  std::vector<fs::path> files{src.population, src.membership, src.membership_codes};
  if (src.urban) files.push_back(*src.urban);
  for (const auto& c : src.covariates) files.push_back(c.second);
  for (const auto& f : files) {
    require(fs::exists(f), ErrorKind::Io, "grid file '" + f.string() + "' does not exist");
    ctx.manifest.add_input(f);
  }
  return load_population_grid(src);
}

CoverageDraws load_draws(Context& ctx) {
  return read_coverage_draws(input_path(ctx, ctx.config.draws, "paths.draws"));
}

void write_scalar_summary(const fs::path& path, const std::vector<std::string>& names, const RowMatrix& draws,
                          double level) {
  CsvTable t;
  t.header = {"parameter", "median", "mean", "sd", "lower", "upper"};
  const double tail = (1.0 - level) / 2.0;
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    std::vector<double> v(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index i = 0; i < draws.rows(); ++i) v[static_cast<std::size_t>(i)] = draws(i, j);
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const std::string sd = v.size() > 1 ? format_double(std::sqrt(ss / static_cast<double>(v.size() - 1))) : "NA";
    t.rows.push_back({names[static_cast<std::size_t>(j)], format_double(quantile_sorted(v, 0.5)), format_double(mean),
                      sd, format_double(quantile_sorted(v, tail)), format_double(quantile_sorted(v, 1.0 - tail))});
  }
  write_csv(path, t);
}

std::vector<std::string> fixed_names(const ModelSpec& spec) {
  std::vector<std::string> names{"alpha"};
  for (const auto& c : spec.covariate_names) names.push_back("beta_" + c);
  if (spec.include_strata) names.push_back("gamma");
  return names;
}

Lattice fit_lattice(const RunConfig& cfg, const PopulationGrid& grid, const std::vector<ClusterObservation>& clusters) {
  const PriorSpec priors = resolve_priors(cfg.model.priors, clusters);
  const double padding = cfg.lattice_padding.value_or(*priors.rho_median);
  return build_lattice(grid.bbox().united(cluster_bbox(clusters)), cfg.lattice_spacing, padding, cfg.max_nodes);
}

McmcConfig run_mcmc(const RunConfig& cfg, std::uint64_t seed) {
  McmcConfig m = cfg.mcmc;
  m.seed = seed;
  m.threads = cfg.threads;
  return m;
}

void write_summary(Context& ctx, const CoverageDraws& draws, const std::string& name) {
  const fs::path p = output_path(ctx, name);
  write_summary_csv(p, summarize(draws, ctx.config.ci_level));
  record(ctx, p);
}

}  // namespace

int cmd_simulate(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::uint64_t seed = cfg.require_seed();
  const SyntheticTruth truth = simulate_truth(cfg.geometry, cfg.truth, seed);
  const auto clusters = draw_survey(truth, cfg.design, derive_seed(seed, {kSurveyStream}));

  const fs::path grid_dir = output_path(ctx, "grid/pop.asc").parent_path();
  const GridSources src = save_population_grid(truth.grid, grid_dir);
  for (const fs::path& p : {src.population, src.membership, src.membership_codes}) record(ctx, p);
  if (src.urban) record(ctx, *src.urban);
  for (const auto& c : src.covariates) record(ctx, c.second);

  const fs::path cl = output_path(ctx, "clusters.csv");
  save_clusters(cl, clusters, cfg.geometry.covariate_names);
  record(ctx, cl);

  CsvTable t;
  t.header = {"unit_id", "state_id", "lga_id", "pop", "urban", "field", "eta", "p_true"};
  const bool ts = !truth.epsilon.empty();
  if (ts) t.header.push_back("epsilon");
  for (std::size_t i = 0; i < truth.grid.cells.size(); ++i) {
    const GridCell& c = truth.grid.cells[i];
    t.rows.push_back({cell_unit_id(c), c.state_id, c.lga_id, format_double(c.pop), c.urban ? "1" : "0",
                      format_double(truth.field[i]), format_double(truth.eta[i]), format_double(truth.p_true[i])});
    if (ts) t.rows.back().push_back(format_double(truth.epsilon[i]));
  }
  const fs::path tc = output_path(ctx, "truth_cells.csv");
  write_csv(tc, t);
  record(ctx, tc);

  nlohmann::json j;
  j["class"] = to_string(cfg.truth.model_class);
  j["alpha"] = cfg.truth.alpha;
  j["beta"] = cfg.truth.beta;
  j["gamma"] = cfg.truth.gamma;
  j["rho"] = cfg.truth.rho;
  j["sigma_s"] = cfg.truth.sigma_s;
  if (cfg.truth.d) j["d"] = *cfg.truth.d;
  if (cfg.truth.sigma_nugget) j["sigma_nugget"] = *cfg.truth.sigma_nugget;
  j["national_coverage"] = truth.national_coverage();
  j["clusters"] = clusters.size();
  const fs::path tj = output_path(ctx, "truth.json");
  write_text_file(tj, j.dump(2) + "\n");
  record(ctx, tj);

  ctx.out << "simulated " << truth.grid.cells.size() << " cells and " << clusters.size()
          << " clusters; national coverage " << format_double(truth.national_coverage()) << '\n';
  return kExitOk;
}

int cmd_fit(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::uint64_t seed = cfg.require_seed();
  const PopulationGrid grid = load_grid(ctx);
  const auto clusters =
      load_clusters(input_path(ctx, cfg.clusters, "paths.clusters"), cfg.model.covariate_names, grid.bbox());
  const Lattice lattice = fit_lattice(cfg, grid, clusters);
  const PosteriorDraws draws = fit(cfg.model, clusters, lattice, cfg.model.priors, run_mcmc(cfg, seed));

  const fs::path f = output_path(ctx, "fit.vaxfit");
  write_fit(f, draws);
  record(ctx, f);
  const fs::path d = output_path(ctx, "diagnostics.txt");
  write_text_file(d, draws.diagnostics.to_text());
  record(ctx, d);
  const fs::path p = output_path(ctx, "parameters.csv");
  auto names = fixed_names(draws.spec);
  for (const auto& h : draws.hyper_names()) names.push_back(h);
  RowMatrix scalars(draws.fixed.rows(), draws.fixed.cols() + draws.hyper.cols());
  scalars << draws.fixed, draws.hyper;
  write_scalar_summary(p, names, scalars, cfg.ci_level);
  record(ctx, p);

  ctx.out << "fit " << to_string(draws.spec.model_class) << " on " << clusters.size() << " clusters, "
          << draws.size() << " draws, lattice " << lattice.ncols << "x" << lattice.nrows << "; max R-hat "
          << format_double(draws.diagnostics.max_rhat()) << ", min ESS " << format_double(draws.diagnostics.min_ess())
          << "; " << to_string(draws.status) << '\n';
  return draws.status == FitStatus::Converged ? kExitOk : kExitFailedConvergence;
}

int cmd_predict(Context& ctx) {
  RunConfig& cfg = ctx.config;
  const std::uint64_t seed = cfg.require_seed();
  const PosteriorDraws draws = read_fit(input_path(ctx, cfg.fit, "paths.fit"));
  cfg.model.covariate_names = draws.spec.covariate_names;
  const PopulationGrid grid = load_grid(ctx);
  const CoverageDraws cells =
      predict_cells(draws, grid, derive_seed(seed, {kPredictStream}), cfg.max_draws, cfg.threads);
  const fs::path p = output_path(ctx, "cells.vaxdraws");
  write_coverage_draws(p, cells);
  record(ctx, p);
  write_summary(ctx, cells, "cell_summary.csv");
  ctx.out << "predicted " << cells.units() << " cells x " << cells.draws() << " draws\n";
  return kExitOk;
}

int cmd_aggregate(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  cfg.require_seed();
  const CoverageDraws cells = load_draws(ctx);
  require(cells.level == AreaLevel::Cell, ErrorKind::Validation,
          std::string("aggregate needs cell draws, got ") + to_string(cells.level) + " draws");
  const PopulationGrid grid = load_grid(ctx);
  const CoverageDraws areas = aggregate(cells, aggregation_weights(grid, cfg.level));
  const std::string level = to_string(cfg.level);
  const fs::path p = output_path(ctx, level + ".vaxdraws");
  write_coverage_draws(p, areas);
  record(ctx, p);
  write_summary(ctx, areas, level + "_summary.csv");
  ctx.out << "aggregated to " << areas.units() << " " << level << " units\n";
  return kExitOk;
}

int cmd_rank(Context& ctx) {
  ctx.config.require_seed();
  const CoverageDraws draws = load_draws(ctx);
  const RankDistribution r = rank_distribution(draws);
  CsvTable t;
  t.header = {"unit_id", "expected_rank"};
  for (Eigen::Index k = 0; k < r.probs.cols(); ++k) t.header.push_back("p_rank_" + std::to_string(k + 1));
  for (std::size_t u = 0; u < r.unit_ids.size(); ++u) {
    t.rows.push_back({r.unit_ids[u], format_double(r.expected_rank[u])});
    for (Eigen::Index k = 0; k < r.probs.cols(); ++k)
      t.rows.back().push_back(format_double(r.probs(static_cast<Eigen::Index>(u), k)));
  }
  const fs::path p = output_path(ctx, "ranks.csv");
  write_csv(p, t);
  record(ctx, p);
  const fs::path rl = output_path(ctx, "ridgeline.csv");
  export_ridgeline(draws, rl);
  record(ctx, rl);
  ctx.out << "ranked " << r.unit_ids.size() << " units\n";
  return kExitOk;
}

int cmd_exceed(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  cfg.require_seed();
  require(!cfg.thresholds.empty(), ErrorKind::Validation, "exceed needs presentation.thresholds");
  const CoverageDraws draws = load_draws(ctx);
  CsvTable t;
  t.header = {"unit_id"};
  std::vector<std::vector<double>> cols;
  for (double th : cfg.thresholds) {
    t.header.push_back("p_ge_" + format_double(th));
    cols.push_back(exceedance(draws, th));
  }
  for (std::size_t u = 0; u < draws.units(); ++u) {
    t.rows.push_back({draws.unit_ids[u]});
    for (const auto& c : cols) t.rows.back().push_back(format_double(c[u]));
  }
  const fs::path p = output_path(ctx, "exceedance.csv");
  write_csv(p, t);
  record(ctx, p);
  for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
    const auto n = std::count_if(cols[i].begin(), cols[i].end(), [](double v) { return v >= 0.5; });
    ctx.out << n << " of " << draws.units() << " units have P(coverage >= " << format_double(cfg.thresholds[i])
            << ") >= 0.5\n";
  }
  return kExitOk;
}

int cmd_classify(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  cfg.require_seed();
  const CoverageDraws draws = load_draws(ctx);

  ClassifiedMap map;
  CsvTable levels;
  levels.header = {"k", "atcp", "selected"};
  if (!cfg.thresholds.empty()) {
    map = classify(draws, Partition::from_thresholds(cfg.thresholds));
    levels.rows.push_back({std::to_string(map.partition.intervals()), format_double(map.atcp), "1"});
    ctx.out << "K=" << map.partition.intervals() << " ATCP=" << format_double(map.atcp) << " (fixed thresholds)\n";
  } else {
    GranularityChoice choice = select_granularity(draws, cfg.atcp_min, cfg.k_max);
    for (const auto& [k, a] : choice.atcp_by_k) {
      levels.rows.push_back({std::to_string(k), format_double(a), k == choice.k ? "1" : "0"});
      ctx.out << "K=" << k << " ATCP=" << format_double(a) << '\n';
    }
    if (!choice.notice.empty()) {
      levels.rows.push_back({"1", format_double(choice.map.atcp), "1"});
      ctx.out << choice.notice << '\n';
    }
    ctx.out << "selected K=" << choice.k << " at ATCP >= " << format_double(cfg.atcp_min) << '\n';
    map = std::move(choice.map);
  }

  CsvTable t;
  t.header = {"unit_id", "interval", "lower", "upper", "tcp"};
  const int k = map.partition.intervals();
  for (int j = 0; j < k; ++j) t.header.push_back("p_interval_" + std::to_string(j + 1));
  for (std::size_t u = 0; u < map.unit_ids.size(); ++u) {
    const int a = map.assignment[u];
    t.rows.push_back({map.unit_ids[u], std::to_string(a + 1), format_double(map.partition.breaks[a]),
                      format_double(map.partition.breaks[a + 1]), format_double(map.tcp[u])});
    for (int j = 0; j < k; ++j) t.rows.back().push_back(format_double(map.interval_probs(static_cast<Eigen::Index>(u), j)));
  }
  const fs::path p = output_path(ctx, "classification.csv");
  write_csv(p, t);
  record(ctx, p);
  const fs::path lv = output_path(ctx, "atcp.csv");
  write_csv(lv, levels);
  record(ctx, lv);

  if (cfg.render && cfg.has_grid()) {
    const PopulationGrid grid = load_grid(ctx);
    const Palette palette =
        cfg.palette ? Palette::read(input_path(ctx, cfg.palette, "paths.palette")) : Palette::ramp(k);
    const RenderPaths out{output_path(ctx, "map.ppm"), output_path(ctx, "legend.csv"), output_path(ctx, "legend.svg")};
    render(map, grid, draws.level, palette, out);
    for (const fs::path& f : {out.image, out.legend_csv, out.legend_svg}) record(ctx, f);
  }
  return kExitOk;
}

int cmd_validate(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::uint64_t seed = cfg.require_seed();
  const PopulationGrid grid = load_grid(ctx);
  const auto clusters =
      load_clusters(input_path(ctx, cfg.clusters, "paths.clusters"), cfg.model.covariate_names, grid.bbox());
  const Lattice lattice = fit_lattice(cfg, grid, clusters);

  const PosteriorDraws full = fit(cfg.model, clusters, lattice, cfg.model.priors, run_mcmc(cfg, seed));
  CvOptions opt;
  opt.max_prediction_draws = cfg.max_draws;
  opt.threads = cfg.threads;
  ValidationReport report = loso_cv(cfg.model, clusters, lattice, cfg.model.priors,
                                    run_mcmc(cfg, derive_seed(seed, {kFoldStream})), opt);
  report.waic = waic(full, clusters);

  const fs::path p = output_path(ctx, "validation.csv");
  write_validation_csv(p, report);
  record(ctx, p);
  std::string summary = validation_summary(report);
  if (full.status != FitStatus::Converged) summary += "full fit: " + std::string(to_string(full.status)) + "\n";
  const fs::path s = output_path(ctx, "validation.txt");
  write_text_file(s, summary);
  record(ctx, s);
  ctx.out << summary;
  const bool flagged = report.any_failed_convergence() || full.status != FitStatus::Converged;
  return flagged ? kExitFailedConvergence : kExitOk;
}

}  // namespace vaxmap::cli
