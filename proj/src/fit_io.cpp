// VAXFIT1 archive: a magic line, a header-length line, a JSON header and the
// draw matrices as little-endian float64 blocks (row-major, header order).

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <limits>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/inference.hpp"

namespace vaxmap {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kMagic = "VAXFIT1";

static_assert(std::endian::native == std::endian::little, "binary archives assume a little-endian host");

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_nullable(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json priors_json(const PriorSpec& p) {
  json j;
  j["fixed_sd"] = p.fixed_sd;
  j["rho_median"] = p.rho_median ? json(*p.rho_median) : json(nullptr);
  j["log_rho_sd"] = p.log_rho_sd;
  j["log_sigma_s_mean"] = p.log_sigma_s_mean;
  j["log_sigma_s_sd"] = p.log_sigma_s_sd;
  j["log_d_mean"] = p.log_d_mean;
  j["log_d_sd"] = p.log_d_sd;
  j["log_nugget_mean"] = p.log_nugget_mean;
  j["log_nugget_sd"] = p.log_nugget_sd;
  return j;
}

PriorSpec priors_from(const json& j) {
  PriorSpec p;
  p.fixed_sd = j.at("fixed_sd").get<double>();
  if (!j.at("rho_median").is_null()) p.rho_median = j.at("rho_median").get<double>();
  p.log_rho_sd = j.at("log_rho_sd").get<double>();
  p.log_sigma_s_mean = j.at("log_sigma_s_mean").get<double>();
  p.log_sigma_s_sd = j.at("log_sigma_s_sd").get<double>();
  p.log_d_mean = j.at("log_d_mean").get<double>();
  p.log_d_sd = j.at("log_d_sd").get<double>();
  p.log_nugget_mean = j.at("log_nugget_mean").get<double>();
  p.log_nugget_sd = j.at("log_nugget_sd").get<double>();
  return p;
}

void write_matrix(std::ostream& os, const RowMatrix& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_matrix(std::istream& is, RowMatrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  m.resize(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) fail(ErrorKind::Io, "fitted-model file truncated in block '" + what + "'");
}

}  // namespace

void write_fit(const std::filesystem::path& path, const PosteriorDraws& d) {
  json h;
  h["format"] = kMagic;
  json spec;
  spec["model_class"] = to_string(d.spec.model_class);
  spec["include_strata"] = d.spec.include_strata;
  spec["covariate_names"] = d.spec.covariate_names;
  spec["priors"] = priors_json(d.spec.priors);
  h["spec"] = spec;
  h["mcmc"] = {{"chains", d.mcmc.chains},   {"iterations", d.mcmc.iterations},
               {"burn_in", d.mcmc.burn_in}, {"thin", d.mcmc.thin},
               {"seed", d.mcmc.seed},       {"use_likelihood", d.mcmc.use_likelihood}};
  h["lattice"] = {{"x0", d.lattice.x0},
                  {"y0", d.lattice.y0},
                  {"spacing", d.lattice.spacing},
                  {"ncols", d.lattice.ncols},
                  {"nrows", d.lattice.nrows}};
  h["cluster_ids"] = d.cluster_ids;
  h["standardization"] = {{"mean", d.standardization.mean}, {"sd", d.standardization.sd}};
  h["data_digest"] = d.data_digest;
  h["chain_seeds"] = d.chain_seeds;
  h["draws_per_chain"] = d.draws_per_chain;
  h["status"] = to_string(d.status);
  json diag;
  diag["rhat_available"] = d.diagnostics.rhat_available;
  diag["field_nodes"] = d.diagnostics.field_nodes;
  diag["acceptance"] = d.diagnostics.acceptance;
  json scalars = json::array();
  for (const auto& s : d.diagnostics.scalars) scalars.push_back({{"name", s.name}, {"rhat", nullable(s.rhat)}, {"ess", nullable(s.ess)}});
  diag["scalars"] = scalars;
  h["diagnostics"] = diag;
  auto shape = [](const RowMatrix& m) { return json::array({m.rows(), m.cols()}); };
  h["blocks"] = {{"fixed", shape(d.fixed)}, {"hyper", shape(d.hyper)}, {"field", shape(d.field)}, {"nuggets", shape(d.nuggets)}};

  const std::string header = h.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os << kMagic << '\n' << "header_bytes " << header.size() << '\n' << header << '\n';
  write_matrix(os, d.fixed);
  write_matrix(os, d.hyper);
  write_matrix(os, d.field);
  write_matrix(os, d.nuggets);
  if (!os) fail(ErrorKind::Io, "failed writing " + path.string());
}

PosteriorDraws read_fit(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kMagic) fail(ErrorKind::Schema, path.string() + ": not a VAXFIT1 fitted-model file");
  std::getline(is, line);
  std::istringstream ls(line);
  std::string key;
  std::size_t bytes = 0;
  if (!(ls >> key >> bytes) || key != "header_bytes") fail(ErrorKind::Schema, path.string() + ": malformed header length");
  std::string header(bytes, '\0');
  is.read(header.data(), static_cast<std::streamsize>(bytes));
  if (!is || is.get() != '\n') fail(ErrorKind::Schema, path.string() + ": truncated header");

  PosteriorDraws d;
  try {
    const json h = json::parse(header);
    const json& spec = h.at("spec");
    d.spec.model_class = parse_model_class(spec.at("model_class").get<std::string>());
    d.spec.include_strata = spec.at("include_strata").get<bool>();
    d.spec.covariate_names = spec.at("covariate_names").get<std::vector<std::string>>();
    d.spec.priors = priors_from(spec.at("priors"));
    const json& mc = h.at("mcmc");
    d.mcmc.chains = mc.at("chains").get<int>();
    d.mcmc.iterations = mc.at("iterations").get<int>();
    d.mcmc.burn_in = mc.at("burn_in").get<int>();
    d.mcmc.thin = mc.at("thin").get<int>();
    d.mcmc.seed = mc.at("seed").get<std::uint64_t>();
    d.mcmc.use_likelihood = mc.at("use_likelihood").get<bool>();
    const json& lat = h.at("lattice");
    d.lattice.x0 = lat.at("x0").get<double>();
    d.lattice.y0 = lat.at("y0").get<double>();
    d.lattice.spacing = lat.at("spacing").get<double>();
    d.lattice.ncols = lat.at("ncols").get<int>();
    d.lattice.nrows = lat.at("nrows").get<int>();
    d.cluster_ids = h.at("cluster_ids").get<std::vector<std::string>>();
    d.standardization.mean = h.at("standardization").at("mean").get<std::vector<double>>();
    d.standardization.sd = h.at("standardization").at("sd").get<std::vector<double>>();
    d.data_digest = h.at("data_digest").get<std::string>();
    d.chain_seeds = h.at("chain_seeds").get<std::vector<std::uint64_t>>();
    d.draws_per_chain = h.at("draws_per_chain").get<int>();
    d.status = h.at("status").get<std::string>() == "converged" ? FitStatus::Converged : FitStatus::FailedConvergence;
    const json& diag = h.at("diagnostics");
    d.diagnostics.rhat_available = diag.at("rhat_available").get<bool>();
    d.diagnostics.field_nodes = diag.at("field_nodes").get<std::vector<std::size_t>>();
    d.diagnostics.acceptance = diag.at("acceptance").get<std::vector<double>>();
    for (const auto& s : diag.at("scalars"))
      d.diagnostics.scalars.push_back({s.at("name").get<std::string>(), from_nullable(s.at("rhat")), from_nullable(s.at("ess"))});
    const json& blocks = h.at("blocks");
    for (const char* name : {"fixed", "hyper", "field", "nuggets"}) {
      const auto shape = blocks.at(name);
      RowMatrix* target = std::strcmp(name, "fixed") == 0   ? &d.fixed
                          : std::strcmp(name, "hyper") == 0 ? &d.hyper
                          : std::strcmp(name, "field") == 0 ? &d.field
                                                            : &d.nuggets;
      read_matrix(is, *target, shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>(), name);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, path.string() + ": malformed fitted-model header (" + e.what() + ")");
  }
  return d;
}

}  // namespace vaxmap
