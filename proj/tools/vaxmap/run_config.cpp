#include "run_config.hpp"

#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "vaxmap/error.hpp"

namespace vaxmap::cli {

namespace {

std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) {
    require(!p.empty(), ErrorKind::Validation, "malformed config key '" + key + "'");
    parts.push_back(p);
  }
  require(!parts.empty(), ErrorKind::Validation, "empty config key");
  return parts;
}

void apply_override(toml::table& root, const Override& o) {
  const auto parts = split_dotted(o.key);
  const std::string& text = o.value;

  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    auto* node = t->get(parts[i]);
    if (node == nullptr) node = &t->insert_or_assign(parts[i], toml::table{}).first->second;
    t = node->as_table();
    require(t != nullptr, ErrorKind::Validation, "config key '" + parts[i] + "' is not a table");
  }
  if (o.as_string) {
    t->insert_or_assign(parts.back(), text);
    return;
  }
  try {
    toml::table parsed = toml::parse("v = " + text);
    t->insert_or_assign(parts.back(), std::move(*parsed.get("v")));
  } catch (const toml::parse_error&) {
    t->insert_or_assign(parts.back(), text);
  }
}

// Typed access to dotted keys; remembers which keys were read so leftovers
// can be reported as unknown.
class Reader {
 public:
  explicit Reader(const toml::table& root) : root_(root) {}

  template <typename T>
  std::optional<T> get(const std::string& key) {
    used_.insert(key);
    const auto node = root_.at_path(key);
    if (!node) return std::nullopt;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node.value_exact<bool>()) return *v;
      fail(ErrorKind::Validation, "config key '" + key + "' must be true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node.value_exact<std::string>()) return *v;
      fail(ErrorKind::Validation, "config key '" + key + "' must be a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node.value_exact<std::int64_t>()) {
        require(*v >= 0 || std::is_signed_v<T>, ErrorKind::Validation, "config key '" + key + "' must be >= 0");
        return static_cast<T>(*v);
      }
      fail(ErrorKind::Validation, "config key '" + key + "' must be an integer");
    } else {
      if (auto v = node.value<double>()) return static_cast<T>(*v);
      fail(ErrorKind::Validation, "config key '" + key + "' must be a number");
    }
  }

  template <typename T>
  void set(const std::string& key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  template <typename T>
  void set(const std::string& key, std::optional<T>& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  void set_path(const std::string& key, std::optional<fs::path>& target) {
    if (auto v = get<std::string>(key)) target = fs::path(*v);
  }

  std::optional<std::vector<double>> numbers(const std::string& key) {
    used_.insert(key);
    const auto node = root_.at_path(key);
    if (!node) return std::nullopt;
    const auto* arr = node.as_array();
    require(arr != nullptr, ErrorKind::Validation, "config key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& el : *arr) {
      auto v = el.value<double>();
      require(v.has_value(), ErrorKind::Validation, "config key '" + key + "' must be an array of numbers");
      out.push_back(*v);
    }
    return out;
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) {
    used_.insert(key);
    const auto node = root_.at_path(key);
    if (!node) return std::nullopt;
    const auto* arr = node.as_array();
    require(arr != nullptr, ErrorKind::Validation, "config key '" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& el : *arr) {
      auto v = el.value_exact<std::string>();
      require(v.has_value(), ErrorKind::Validation, "config key '" + key + "' must be an array of strings");
      out.push_back(*v);
    }
    return out;
  }

  // A table whose keys are free-form names mapped to strings.
  std::vector<std::pair<std::string, std::string>> string_map(const std::string& key) {
    free_tables_.insert(key);
    std::vector<std::pair<std::string, std::string>> out;
    const auto node = root_.at_path(key);
    if (!node) return out;
    const auto* t = node.as_table();
    require(t != nullptr, ErrorKind::Validation, "config key '" + key + "' must be a table");
    for (const auto& [k, v] : *t) {
      auto s = v.value_exact<std::string>();
      require(s.has_value(), ErrorKind::Validation, "config key '" + key + "." + std::string(k.str()) + "' must be a string");
      out.emplace_back(std::string(k.str()), *s);
    }
    return out;
  }

  void reject_unknown() const { walk(root_, ""); }

 private:
  void walk(const toml::table& t, const std::string& prefix) const {
    for (const auto& [k, v] : t) {
      const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
      if (free_tables_.count(key)) continue;
      if (const auto* sub = v.as_table(); sub != nullptr && !used_.count(key)) {
        walk(*sub, key);
        continue;
      }
      require(used_.count(key) > 0, ErrorKind::Validation, "unknown config key '" + key + "'");
    }
  }

  const toml::table& root_;
  std::set<std::string> used_;
  std::set<std::string> free_tables_;
};

void read_truth_dispersion(Reader& r, TruthParams& truth) {
  r.set("simulate.truth.d", truth.d);
  r.set("simulate.truth.sigma_nugget", truth.sigma_nugget);
}

}  // namespace

Override parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::Validation, "setting '" + text + "' is not key=value");
  return {text.substr(0, eq), text.substr(eq + 1), false};
}

std::uint64_t RunConfig::require_seed() const {
  require(seed.has_value(), ErrorKind::Validation, "a seed is required (set `seed` in the config or pass --seed)");
  return *seed;
}

bool RunConfig::has_grid() const { return grid_dir.has_value() || population.has_value(); }

GridSources RunConfig::grid_sources() const {
  GridSources s;
  if (grid_dir) {
    s.population = *grid_dir / "pop.asc";
    s.membership = *grid_dir / "membership.asc";
    s.membership_codes = *grid_dir / "membership_codes.csv";
    s.urban = *grid_dir / "urban.asc";
    for (const auto& name : model.covariate_names) s.covariates.emplace_back(name, *grid_dir / ("cov_" + name + ".asc"));
  }
  if (population) s.population = *population;
  if (membership) s.membership = *membership;
  if (membership_codes) s.membership_codes = *membership_codes;
  if (urban) s.urban = *urban;
  for (const auto& [name, path] : covariate_rasters) {
    auto it = std::find_if(s.covariates.begin(), s.covariates.end(), [&](const auto& c) { return c.first == name; });
    if (it != s.covariates.end())
      it->second = path;
    else
      s.covariates.emplace_back(name, path);
  }
  require(!s.population.empty() && !s.membership.empty() && !s.membership_codes.empty(), ErrorKind::Validation,
          "the grid needs paths.grid_dir or paths.population, paths.membership and paths.membership_codes");
  return s;
}

RunConfig load_run_config(const std::optional<fs::path>& config_file, const std::vector<Override>& overrides) {
  toml::table root;
  if (config_file) {
    require(fs::exists(*config_file), ErrorKind::Io, "config file '" + config_file->string() + "' does not exist");
    try {
      root = toml::parse_file(config_file->string());
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << config_file->string() << ":" << e.source().begin.line << ": " << e.description();
      fail(ErrorKind::Schema, os.str());
    }
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c;
  Reader r(root);
  r.set("seed", c.seed);
  r.set("threads", c.threads);
  require(c.threads >= 1, ErrorKind::Validation, "threads must be >= 1");
  if (auto v = r.get<std::string>("output_dir")) c.output_dir = *v;

  r.set_path("paths.clusters", c.clusters);
  r.set_path("paths.grid_dir", c.grid_dir);
  r.set_path("paths.population", c.population);
  r.set_path("paths.membership", c.membership);
  r.set_path("paths.membership_codes", c.membership_codes);
  r.set_path("paths.urban", c.urban);
  r.set_path("paths.fit", c.fit);
  r.set_path("paths.draws", c.draws);
  r.set_path("paths.palette", c.palette);
  for (const auto& [name, path] : r.string_map("paths.covariates")) c.covariate_rasters.emplace_back(name, path);

  if (auto v = r.get<std::string>("model.class")) c.model.model_class = parse_model_class(*v);
  r.set("model.strata", c.model.include_strata);
  if (auto v = r.strings("model.covariates")) c.model.covariate_names = *v;
  r.set("model.lattice_spacing", c.lattice_spacing);
  r.set("model.lattice_padding", c.lattice_padding);
  r.set("model.max_nodes", c.max_nodes);

  PriorSpec& p = c.model.priors;
  r.set("priors.fixed_sd", p.fixed_sd);
  r.set("priors.rho_median", p.rho_median);
  r.set("priors.log_rho_sd", p.log_rho_sd);
  r.set("priors.log_sigma_s_mean", p.log_sigma_s_mean);
  r.set("priors.log_sigma_s_sd", p.log_sigma_s_sd);
  r.set("priors.log_d_mean", p.log_d_mean);
  r.set("priors.log_d_sd", p.log_d_sd);
  r.set("priors.log_nugget_mean", p.log_nugget_mean);
  r.set("priors.log_nugget_sd", p.log_nugget_sd);

  r.set("mcmc.chains", c.mcmc.chains);
  r.set("mcmc.iterations", c.mcmc.iterations);
  r.set("mcmc.burn_in", c.mcmc.burn_in);
  r.set("mcmc.thin", c.mcmc.thin);
  r.set("mcmc.use_likelihood", c.mcmc.use_likelihood);

  r.set("predict.max_draws", c.max_draws);
  if (auto v = r.get<std::string>("aggregate.level")) c.level = parse_area_level(*v);
  if (auto v = r.numbers("presentation.thresholds")) c.thresholds = *v;
  r.set("presentation.k_max", c.k_max);
  r.set("presentation.atcp_min", c.atcp_min);
  r.set("presentation.ci_level", c.ci_level);
  r.set("presentation.render", c.render);

  GeometrySpec& g = c.geometry;
  r.set("simulate.geometry.ncols", g.ncols);
  r.set("simulate.geometry.nrows", g.nrows);
  r.set("simulate.geometry.xllcorner", g.xllcorner);
  r.set("simulate.geometry.yllcorner", g.yllcorner);
  r.set("simulate.geometry.cellsize", g.cellsize);
  r.set("simulate.geometry.states", g.states);
  r.set("simulate.geometry.lgas_per_state", g.lgas_per_state);
  r.set("simulate.geometry.urban_fraction", g.urban_fraction);
  r.set("simulate.geometry.base_population", g.base_population);
  r.set("simulate.geometry.urban_peak", g.urban_peak);
  if (auto v = r.strings("simulate.geometry.covariates")) g.covariate_names = *v;

  TruthParams& t = c.truth;
  if (auto v = r.get<std::string>("simulate.truth.class")) t.model_class = parse_model_class(*v);
  r.set("simulate.truth.alpha", t.alpha);
  if (auto v = r.numbers("simulate.truth.beta")) t.beta = *v;
  r.set("simulate.truth.gamma", t.gamma);
  r.set("simulate.truth.rho", t.rho);
  r.set("simulate.truth.sigma_s", t.sigma_s);
  read_truth_dispersion(r, t);
  r.set("simulate.truth.field_spacing", t.field_spacing);

  SurveyDesign& d = c.design;
  r.set("simulate.design.urban_psus", d.urban_psus);
  r.set("simulate.design.rural_psus", d.rural_psus);
  r.set("simulate.design.households_per_psu", d.households_per_psu);
  r.set("simulate.design.children_mean", d.children_mean);
  r.set("simulate.design.children_max", d.children_max);

  r.reject_unknown();

  // threads never changes results, so it stays out of the echo and the
  // manifest remains identical across worker counts.
  toml::table echo_table = root;
  echo_table.erase("threads");
  std::ostringstream js;
  js << toml::json_formatter{echo_table};
  c.echo = nlohmann::json::parse(js.str());
  return c;
}

}  // namespace vaxmap::cli
