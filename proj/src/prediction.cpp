#include "vaxmap/prediction.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/parallel.hpp"
#include "vaxmap/rng.hpp"

namespace vaxmap {

namespace {

constexpr const char* kMagic = "VAXDRAWS1";

// Units per parallel work item.
constexpr std::size_t kBlock = 256;

struct PredictionInputs {
  std::span<const Point> points;
  const std::vector<std::vector<double>>* covariates;
  const std::vector<bool>* urban;
};

RowMatrix predict_impl(const PosteriorDraws& draws, const PredictionInputs& in, std::uint64_t seed,
                       std::size_t max_draws, int threads) {
  require(draws.size() >= 1, ErrorKind::Validation, "posterior holds no draws");
  const std::size_t p = draws.spec.covariate_names.size();
  const std::size_t units = in.points.size();
  const auto picks = thin_indices(draws.size(), max_draws);
  const auto m_count = static_cast<Eigen::Index>(picks.size());
  for (std::size_t u = 0; u < units; ++u)
    require((*in.covariates)[u].size() == p, ErrorKind::Dimension,
            "unit " + std::to_string(u) + " has " + std::to_string((*in.covariates)[u].size()) +
                " covariates, model expects " + std::to_string(p));

  const Projector proj = project(draws.lattice, in.points);

  // Field block: N x M so the projection is one sparse-dense product.
  Eigen::MatrixXd field(draws.field.cols(), m_count);
  RowMatrix fixed(m_count, draws.fixed.cols());
  std::vector<double> nugget_sd(picks.size(), 0.0);
  const bool has_nugget = has_cluster_nugget(draws.spec.model_class);
  for (Eigen::Index j = 0; j < m_count; ++j) {
    const auto r = static_cast<Eigen::Index>(picks[static_cast<std::size_t>(j)]);
    field.col(j) = draws.field.row(r).transpose();
    fixed.row(j) = draws.fixed.row(r);
    if (has_nugget) nugget_sd[static_cast<std::size_t>(j)] = draws.hyper(r, 2);
  }
  const Eigen::MatrixXd s = proj.matrix * field;
  const bool strata = draws.spec.include_strata;
  const Eigen::Index gamma_col = fixed.cols() - 1;

  RowMatrix out(static_cast<Eigen::Index>(units), m_count);
  const std::size_t blocks = (units + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(units, (b + 1) * kBlock);
    for (std::size_t u = b * kBlock; u < end; ++u) {
      const auto row = static_cast<Eigen::Index>(u);
      const auto& x = (*in.covariates)[u];
      const bool is_urban = (*in.urban)[u];
      Rng rng = make_rng(seed, {static_cast<std::uint64_t>(u)});
      for (Eigen::Index j = 0; j < m_count; ++j) {
        double eta = fixed(j, 0) + s(row, j);
        for (std::size_t k = 0; k < p; ++k) eta += fixed(j, 1 + static_cast<Eigen::Index>(k)) * x[k];
        if (strata && is_urban) eta += fixed(j, gamma_col);
        double value = 0.0;
        switch (draws.spec.model_class) {
          case ModelClass::BinomialNN:
          case ModelClass::BetaBinomialOD:
            value = expit(eta);
            break;
          case ModelClass::LonoBinomialOD:
            value = lono_target(eta, nugget_sd[static_cast<std::size_t>(j)]);
            break;
          case ModelClass::BinomialTS:
            value = ts_target(eta, nugget_sd[static_cast<std::size_t>(j)] * std_normal(rng));
            break;
        }
        out(row, j) = value;
      }
    }
  });
  return out;
}

}  // namespace

std::string cell_unit_id(const GridCell& cell) {
  return "r" + std::to_string(cell.row) + "c" + std::to_string(cell.col);
}

std::vector<std::size_t> thin_indices(std::size_t available, std::size_t max_draws) {
  require(max_draws >= 1, ErrorKind::Validation, "prediction needs at least one draw");
  const std::size_t m = std::min(available, max_draws);
  std::vector<std::size_t> idx(m);
  for (std::size_t j = 0; j < m; ++j) idx[j] = j * available / m;
  return idx;
}

CoverageDraws predict_cells(const PosteriorDraws& draws, const PopulationGrid& grid, std::uint64_t seed,
                            std::size_t max_draws, int threads) {
  if (grid.covariate_names != draws.spec.covariate_names) {
    std::string got, want;
    for (const auto& n : grid.covariate_names) got += (got.empty() ? "" : ",") + n;
    for (const auto& n : draws.spec.covariate_names) want += (want.empty() ? "" : ",") + n;
    fail(ErrorKind::Dimension, "grid covariates [" + got + "] do not match the model's [" + want + "]");
  }
  std::vector<Point> pts;
  std::vector<std::vector<double>> cov;
  std::vector<bool> urban;
  pts.reserve(grid.cells.size());
  cov.reserve(grid.cells.size());
  for (const auto& c : grid.cells) {
    pts.push_back({c.lon, c.lat});
    cov.push_back(c.covariates);
    urban.push_back(c.urban);
  }
  CoverageDraws out;
  out.level = AreaLevel::Cell;
  out.model_class = draws.spec.model_class;
  for (const auto& c : grid.cells) out.unit_ids.push_back(cell_unit_id(c));
  out.values = predict_impl(draws, {pts, &cov, &urban}, seed, max_draws, threads);
  return out;
}

RowMatrix predict_points(const PosteriorDraws& draws, std::span<const Point> points,
                         const std::vector<std::vector<double>>& covariates, const std::vector<bool>& urban,
                         std::uint64_t seed, std::size_t max_draws, int threads) {
  require(covariates.size() == points.size() && urban.size() == points.size(), ErrorKind::Dimension,
          "point inputs have inconsistent lengths");
  return predict_impl(draws, {points, &covariates, &urban}, seed, max_draws, threads);
}

CoverageDraws aggregate(const CoverageDraws& cells, const AggregationWeights& weights) {
  require(cells.level == AreaLevel::Cell, ErrorKind::Validation, "aggregate expects cell-level draws");
  CoverageDraws out;
  out.level = weights.level;
  out.model_class = cells.model_class;
  out.values.setZero(static_cast<Eigen::Index>(weights.areas.size()), cells.values.cols());
  for (std::size_t a = 0; a < weights.areas.size(); ++a) {
    const auto& area = weights.areas[a];
    if (area.cells.empty()) fail(ErrorKind::CoverageGap, "area '" + area.area_id + "' has no cells");
    for (const auto& [idx, q] : area.cells) {
      if (idx >= cells.units())
        fail(ErrorKind::CoverageGap, "area '" + area.area_id + "' references cell " + std::to_string(idx) +
                                         " missing from the cell draws");
      out.values.row(static_cast<Eigen::Index>(a)) += q * cells.values.row(static_cast<Eigen::Index>(idx));
    }
    out.unit_ids.push_back(area.area_id);
  }
  return out;
}

void write_coverage_draws(const std::filesystem::path& path, const CoverageDraws& d) {
  static_assert(std::endian::native == std::endian::little, "binary draws assume a little-endian host");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os << kMagic << '\n'
     << "level " << to_string(d.level) << '\n'
     << "class " << to_string(d.model_class) << '\n'
     << "units " << d.units() << '\n'
     << "draws " << d.draws() << '\n';
  for (const auto& id : d.unit_ids) {
    require(id.find('\n') == std::string::npos, ErrorKind::Validation, "unit id contains a newline");
    os << id << '\n';
  }
  os.write(reinterpret_cast<const char*>(d.values.data()), static_cast<std::streamsize>(d.values.size() * sizeof(double)));
  if (!os) fail(ErrorKind::Io, "failed writing " + path.string());
}

CoverageDraws read_coverage_draws(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kMagic) fail(ErrorKind::Schema, path.string() + ": not a VAXDRAWS1 file");
  auto field = [&](const std::string& key) {
    std::getline(is, line);
    const std::string prefix = key + " ";
    if (line.rfind(prefix, 0) != 0) fail(ErrorKind::Schema, path.string() + ": expected '" + key + "' line");
    return line.substr(prefix.size());
  };
  CoverageDraws d;
  d.level = parse_area_level(field("level"));
  d.model_class = parse_model_class(field("class"));
  const auto units = static_cast<Eigen::Index>(std::stoll(field("units")));
  const auto draws = static_cast<Eigen::Index>(std::stoll(field("draws")));
  for (Eigen::Index u = 0; u < units; ++u) {
    if (!std::getline(is, line)) fail(ErrorKind::Schema, path.string() + ": truncated unit list");
    d.unit_ids.push_back(line);
  }
  d.values.resize(units, draws);
  is.read(reinterpret_cast<char*>(d.values.data()), static_cast<std::streamsize>(d.values.size() * sizeof(double)));
  if (!is) fail(ErrorKind::Io, path.string() + ": truncated draw matrix");
  return d;
}

}  // namespace vaxmap
