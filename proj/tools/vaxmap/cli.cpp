#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <functional>
#include <map>

#include "commands.hpp"
#include "vaxmap/error.hpp"

namespace vaxmap::cli {

namespace {

struct Subcommand {
  const char* name;
  const char* help;
  int (*run)(Context&);
};

constexpr Subcommand kSubcommands[] = {
    {"simulate", "Simulate a synthetic country, its true coverage and a survey", cmd_simulate},
    {"fit", "Fit a coverage model to survey clusters", cmd_fit},
    {"predict", "Predict coverage draws for every grid cell", cmd_predict},
    {"aggregate", "Aggregate cell draws to states, LGAs or the nation", cmd_aggregate},
    {"rank", "Rank distributions and ridgeline export", cmd_rank},
    {"exceed", "Exceedance probabilities for coverage thresholds", cmd_exceed},
    {"classify", "Classified map with TCP and ATCP", cmd_classify},
    {"validate", "WAIC and leave-one-state-out cross-validation", cmd_validate},
};

// Command-line shortcuts for common config keys.
struct Shortcut {
  const char* flag;
  const char* key;
  bool as_string;
  const char* help;
};

constexpr Shortcut kShortcuts[] = {
    {"--seed", "seed", false, "Random seed (required)"},
    {"--threads", "threads", false, "Worker cap; results do not depend on it"},
    {"--out", "output_dir", true, "Output directory"},
    {"--clusters", "paths.clusters", true, "Cluster CSV"},
    {"--grid", "paths.grid_dir", true, "Grid directory as written by simulate"},
    {"--fit", "paths.fit", true, "Fitted model archive"},
    {"--draws", "paths.draws", true, "Coverage draws file"},
    {"--palette", "paths.palette", true, "Palette CSV"},
    {"--class", "model.class", true, "Model class"},
    {"--strata", "model.strata", false, "Include the urban/rural effect (true/false)"},
    {"--chains", "mcmc.chains", false, "MCMC chains"},
    {"--iterations", "mcmc.iterations", false, "Iterations per chain, burn-in included"},
    {"--burn-in", "mcmc.burn_in", false, "Burn-in iterations"},
    {"--thin", "mcmc.thin", false, "Thinning interval"},
    {"--max-draws", "predict.max_draws", false, "Posterior draws used for prediction"},
    {"--level", "aggregate.level", true, "state, lga or national"},
    {"--thresholds", "presentation.thresholds", false, "Comma-separated coverage thresholds"},
    {"--k-max", "presentation.k_max", false, "Largest number of intervals tried"},
    {"--atcp-min", "presentation.atcp_min", false, "ATCP floor for choosing K"},
    {"--ci-level", "presentation.ci_level", false, "Credible interval level"},
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int exit_code_for(ErrorKind kind) { return kind == ErrorKind::Resource ? kExitResource : kExitValidation; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian geostatistical vaccination coverage mapping", "vaxmap"};
  app.require_subcommand(1);

  std::optional<std::string> config_file;
  std::vector<std::string> settings;
  std::map<std::string, std::string> shortcut_values;
  std::string chosen;

  for (const auto& sc : kSubcommands) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.help);
    sub->add_option("-c,--config", config_file, "TOML config file");
    sub->add_option("--set", settings, "Override any config key: dotted.key=value")->take_all();
    for (const auto& s : kShortcuts) sub->add_option(s.flag, shortcut_values[s.key], s.help);
    sub->callback([&chosen, name = sc.name] { chosen = name; });
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  const Subcommand& sub = *std::find_if(std::begin(kSubcommands), std::end(kSubcommands),
                                        [&](const Subcommand& s) { return chosen == s.name; });
  std::optional<fs::path> output_dir;
  try {
    std::vector<Override> overrides;
    for (const auto& s : settings) overrides.push_back(parse_assignment(s));
    for (const auto& s : kShortcuts) {
      const std::string& v = shortcut_values[s.key];
      if (v.empty()) continue;
      const bool list = std::string(s.key) == "presentation.thresholds" && v.front() != '[';
      overrides.push_back({s.key, list ? "[" + v + "]" : v, s.as_string});
    }
    if (!shortcut_values["output_dir"].empty()) output_dir = shortcut_values["output_dir"];

    RunConfig cfg = load_run_config(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);
    output_dir = cfg.output_dir;
    const std::uint64_t seed = cfg.require_seed();
    fs::create_directories(cfg.output_dir);
    Context ctx{cfg, Manifest(sub.name, seed, cfg.echo), out};
    if (config_file) ctx.manifest.add_input(*config_file);
    const int rc = sub.run(ctx);
    ctx.manifest.write(ctx.config.output_dir, rc == kExitOk ? "ok" : "failed_convergence", rc);
    if (rc == kExitFailedConvergence) err << "vaxmap " << sub.name << ": failed convergence (R-hat above 1.1)\n";
    return rc;
  } catch (const Error& e) {
    const int rc = exit_code_for(e.kind());
    const std::string kind(to_string(e.kind()));
    err << "vaxmap " << sub.name << ": " << kind << " error: " << one_line(e.what()) << '\n';
    if (output_dir) {
      std::error_code ec;
      fs::create_directories(*output_dir, ec);
      if (!ec) write_error_file(*output_dir, sub.name, kind, e.what(), rc);
    }
    return rc;
  } catch (const std::exception& e) {
    err << "vaxmap " << sub.name << ": internal error: " << one_line(e.what()) << '\n';
    if (output_dir) {
      std::error_code ec;
      fs::create_directories(*output_dir, ec);
      if (!ec) write_error_file(*output_dir, sub.name, "internal", e.what(), kExitInternal);
    }
    return kExitInternal;
  }
}

}  // namespace vaxmap::cli
