#include "vaxmap/survey_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap {

double BoundingBox::diameter() const { return std::hypot(xmax - xmin, ymax - ymin); }

BoundingBox BoundingBox::united(const BoundingBox& o) const {
  return {std::min(xmin, o.xmin), std::max(xmax, o.xmax), std::min(ymin, o.ymin), std::max(ymax, o.ymax)};
}

namespace {

constexpr const char* kRequiredColumns[] = {"cluster_id", "lon", "lat", "state_id", "lga_id", "urban", "n", "y"};

}  // namespace

std::vector<ClusterObservation> load_clusters(const std::filesystem::path& path,
                                              const std::vector<std::string>& covariate_names,
                                              const std::optional<BoundingBox>& study_box) {
  const CsvTable table = read_csv(path);
  std::vector<int> idx;
  for (const char* name : kRequiredColumns) {
    int c = table.column(name);
    if (c < 0) fail(ErrorKind::Schema, path.string() + ": missing column '" + name + "'");
    idx.push_back(c);
  }
  std::vector<int> cov_idx;
  for (const auto& name : covariate_names) {
    int c = table.column(name);
    if (c < 0) fail(ErrorKind::Schema, path.string() + ": missing column '" + name + "'");
    cov_idx.push_back(c);
  }

  std::vector<ClusterObservation> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = path.string() + " row " + std::to_string(r + 1);
    if (row.size() != table.header.size())
      fail(ErrorKind::Validation, ctx + ": expected " + std::to_string(table.header.size()) + " fields, found " +
                                      std::to_string(row.size()));
    ClusterObservation obs;
    obs.cluster_id = row[idx[0]];
    obs.lon = parse_double(row[idx[1]], ctx);
    obs.lat = parse_double(row[idx[2]], ctx);
    obs.state_id = row[idx[3]];
    obs.lga_id = row[idx[4]];
    const long long urban = parse_int(row[idx[5]], ctx);
    if (urban != 0 && urban != 1) fail(ErrorKind::Validation, ctx + ": urban must be 0 or 1");
    obs.urban = urban == 1;
    const long long n = parse_int(row[idx[6]], ctx);
    const long long y = parse_int(row[idx[7]], ctx);
    if (n < 1) fail(ErrorKind::Validation, ctx + ": n must be >= 1 (got " + std::to_string(n) + ")");
    if (y < 0 || y > n)
      fail(ErrorKind::Validation,
           ctx + ": y must satisfy 0 <= y <= n (got y=" + std::to_string(y) + ", n=" + std::to_string(n) + ")");
    obs.n = static_cast<int>(n);
    obs.y = static_cast<int>(y);
    if (obs.cluster_id.empty()) fail(ErrorKind::Validation, ctx + ": empty cluster_id");
    if (obs.state_id.empty()) fail(ErrorKind::Validation, ctx + ": empty state_id");
    if (!std::isfinite(obs.lon) || !std::isfinite(obs.lat))
      fail(ErrorKind::Validation, ctx + ": non-finite coordinates");
    if (study_box && !study_box->contains(obs.lon, obs.lat))
      fail(ErrorKind::Validation, ctx + ": location outside the study bounding box");
    for (std::size_t k = 0; k < cov_idx.size(); ++k) {
      double v = parse_double(row[cov_idx[k]], ctx);
      if (!std::isfinite(v))
        fail(ErrorKind::Validation, ctx + ": non-finite covariate '" + covariate_names[k] + "'");
      obs.covariates.push_back(v);
    }
    out.push_back(std::move(obs));
  }
  return out;
}

void save_clusters(const std::filesystem::path& path, const std::vector<ClusterObservation>& clusters,
                   const std::vector<std::string>& covariate_names) {
  CsvTable t;
  t.header.assign(std::begin(kRequiredColumns), std::end(kRequiredColumns));
  t.header.insert(t.header.end(), covariate_names.begin(), covariate_names.end());
  for (const auto& c : clusters) {
    std::vector<std::string> row = {c.cluster_id,   format_double(c.lon),  format_double(c.lat),
                                    c.state_id,     c.lga_id,              c.urban ? "1" : "0",
                                    std::to_string(c.n), std::to_string(c.y)};
    for (double v : c.covariates) row.push_back(format_double(v));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

BoundingBox cluster_bbox(const std::vector<ClusterObservation>& clusters) {
  require(!clusters.empty(), ErrorKind::Validation, "no clusters");
  BoundingBox b{clusters[0].lon, clusters[0].lon, clusters[0].lat, clusters[0].lat};
  for (const auto& c : clusters) {
    b.xmin = std::min(b.xmin, c.lon);
    b.xmax = std::max(b.xmax, c.lon);
    b.ymin = std::min(b.ymin, c.lat);
    b.ymax = std::max(b.ymax, c.lat);
  }
  return b;
}

BoundingBox PopulationGrid::bbox() const {
  require(!cells.empty(), ErrorKind::Validation, "empty population grid");
  BoundingBox b{cells[0].lon, cells[0].lon, cells[0].lat, cells[0].lat};
  for (const auto& c : cells) {
    b.xmin = std::min(b.xmin, c.lon);
    b.xmax = std::max(b.xmax, c.lon);
    b.ymin = std::min(b.ymin, c.lat);
    b.ymax = std::max(b.ymax, c.lat);
  }
  return b;
}

std::vector<long> PopulationGrid::cell_index_by_position() const {
  std::vector<long> index(static_cast<std::size_t>(geometry.ncols) * geometry.nrows, -1);
  for (std::size_t i = 0; i < cells.size(); ++i)
    index[static_cast<std::size_t>(cells[i].row) * geometry.ncols + cells[i].col] = static_cast<long>(i);
  return index;
}

PopulationGrid load_population_grid(const GridSources& src) {
  const AsciiGrid pop = read_ascii_grid(src.population);
  const AsciiGrid mem = read_ascii_grid(src.membership);
  if (!mem.geometry.same_as(pop.geometry))
    fail(ErrorKind::Alignment, "raster geometry mismatch: " + src.membership.string() + " is " +
                                   mem.geometry.describe() + " but " + src.population.string() + " is " +
                                   pop.geometry.describe());
  std::optional<AsciiGrid> urban;
  if (src.urban) {
    urban = read_ascii_grid(*src.urban);
    if (!urban->geometry.same_as(pop.geometry))
      fail(ErrorKind::Alignment, "raster geometry mismatch: " + src.urban->string() + " is " +
                                     urban->geometry.describe() + " but " + src.population.string() + " is " +
                                     pop.geometry.describe());
  }
  std::vector<AsciiGrid> covs;
  for (const auto& [name, path] : src.covariates) {
    covs.push_back(read_ascii_grid(path));
    if (!covs.back().geometry.same_as(pop.geometry))
      fail(ErrorKind::Alignment, "raster geometry mismatch: " + path.string() + " is " +
                                     covs.back().geometry.describe() + " but " + src.population.string() +
                                     " is " + pop.geometry.describe());
  }

  std::map<long long, std::pair<std::string, std::string>> codes;
  {
    const CsvTable t = read_csv(src.membership_codes);
    const int ci = t.column("code"), si = t.column("state_id"), li = t.column("lga_id");
    if (ci < 0 || si < 0 || li < 0)
      fail(ErrorKind::Schema, src.membership_codes.string() + ": columns code,state_id,lga_id required");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string ctx = src.membership_codes.string() + " row " + std::to_string(r + 1);
      const auto& row = t.rows[r];
      if (row.size() != t.header.size()) fail(ErrorKind::Validation, ctx + ": wrong field count");
      const long long code = parse_int(row[ci], ctx);
      if (row[si].empty()) fail(ErrorKind::Validation, ctx + ": empty state_id");
      if (!codes.emplace(code, std::make_pair(row[si], row[li])).second)
        fail(ErrorKind::Validation, ctx + ": duplicate code " + std::to_string(code));
    }
  }

  PopulationGrid grid;
  grid.geometry = pop.geometry;
  for (const auto& [name, path] : src.covariates) grid.covariate_names.push_back(name);
  const auto& g = pop.geometry;
  for (int r = 0; r < g.nrows; ++r) {
    for (int c = 0; c < g.ncols; ++c) {
      const double pv = pop.at(r, c);
      const double mv = mem.at(r, c);
      const bool has_pop = !pop.is_nodata(pv) && pv > 0.0;
      const bool has_mem = !mem.is_nodata(mv);
      if (!has_pop && !has_mem) continue;
      const std::string where = "cell (row " + std::to_string(r) + ", col " + std::to_string(c) + ")";
      GridCell cell;
      cell.row = r;
      cell.col = c;
      cell.lon = g.center_x(c);
      cell.lat = g.center_y(r);
      cell.pop = pop.is_nodata(pv) ? 0.0 : pv;
      if (!std::isfinite(cell.pop) || cell.pop < 0.0)
        fail(ErrorKind::Validation, "population raster " + where + ": population must be finite and >= 0");
      if (has_mem) {
        if (mv != std::floor(mv)) fail(ErrorKind::Validation, "membership raster " + where + ": non-integer code");
        auto it = codes.find(static_cast<long long>(mv));
        if (it == codes.end())
          fail(ErrorKind::Validation,
               "membership raster " + where + ": unknown code " + std::to_string(static_cast<long long>(mv)));
        cell.state_id = it->second.first;
        cell.lga_id = it->second.second;
      }
      if (urban) {
        const double uv = urban->at(r, c);
        cell.urban = !urban->is_nodata(uv) && uv != 0.0;
      }
      for (std::size_t k = 0; k < covs.size(); ++k) {
        const double v = covs[k].at(r, c);
        if (covs[k].is_nodata(v) || !std::isfinite(v))
          fail(ErrorKind::Validation,
               "covariate raster '" + src.covariates[k].first + "' " + where + ": missing or non-finite value");
        cell.covariates.push_back(v);
      }
      grid.cells.push_back(std::move(cell));
    }
  }

  std::map<std::string, double> state_pop, lga_pop;
  for (const auto& cell : grid.cells) {
    if (!cell.has_membership()) continue;
    state_pop[cell.state_id] += cell.pop;
    if (!cell.lga_id.empty()) lga_pop[cell.state_id + "\x1f" + cell.lga_id] += cell.pop;
  }
  for (const auto& [id, total] : state_pop)
    if (!(total > 0.0)) fail(ErrorKind::DegenerateArea, "state '" + id + "' has zero total population");
  for (const auto& [id, total] : lga_pop)
    if (!(total > 0.0))
      fail(ErrorKind::DegenerateArea, "lga '" + id.substr(id.find('\x1f') + 1) + "' has zero total population");
  return grid;
}

GridSources save_population_grid(const PopulationGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = grid.geometry;
  const std::size_t count = static_cast<std::size_t>(g.ncols) * g.nrows;
  auto blank = [&g, count]() {
    AsciiGrid a;
    a.geometry = g;
    a.nodata = -9999.0;
    a.values.assign(count, -9999.0);
    return a;
  };

  std::set<std::pair<std::string, std::string>> areas;
  for (const auto& c : grid.cells)
    if (c.has_membership()) areas.emplace(c.state_id, c.lga_id);
  std::map<std::pair<std::string, std::string>, long long> code_of;
  CsvTable codes;
  codes.header = {"code", "state_id", "lga_id"};
  long long next = 1;
  for (const auto& a : areas) {
    code_of[a] = next;
    codes.rows.push_back({std::to_string(next), a.first, a.second});
    ++next;
  }

  AsciiGrid pop = blank(), mem = blank(), urb = blank();
  std::vector<AsciiGrid> covs(grid.covariate_names.size(), blank());
  for (const auto& c : grid.cells) {
    const std::size_t at = static_cast<std::size_t>(c.row) * g.ncols + c.col;
    pop.values[at] = c.pop;
    urb.values[at] = c.urban ? 1.0 : 0.0;
    if (c.has_membership()) mem.values[at] = static_cast<double>(code_of.at({c.state_id, c.lga_id}));
    for (std::size_t k = 0; k < covs.size(); ++k) covs[k].values[at] = c.covariates[k];
  }

  GridSources src;
  src.population = dir / "pop.asc";
  src.membership = dir / "membership.asc";
  src.membership_codes = dir / "membership_codes.csv";
  src.urban = dir / "urban.asc";
  write_ascii_grid(src.population, pop);
  write_ascii_grid(src.membership, mem);
  write_csv(src.membership_codes, codes);
  write_ascii_grid(*src.urban, urb);
  for (std::size_t k = 0; k < covs.size(); ++k) {
    auto p = dir / ("cov_" + grid.covariate_names[k] + ".asc");
    write_ascii_grid(p, covs[k]);
    src.covariates.emplace_back(grid.covariate_names[k], p);
  }
  return src;
}

const char* to_string(AreaLevel level) {
  switch (level) {
    case AreaLevel::State: return "state";
    case AreaLevel::Lga: return "lga";
    case AreaLevel::National: return "national";
    case AreaLevel::Cell: return "cell";
  }
  return "unknown";
}

AreaLevel parse_area_level(const std::string& text) {
  if (text == "state") return AreaLevel::State;
  if (text == "lga") return AreaLevel::Lga;
  if (text == "national") return AreaLevel::National;
  if (text == "cell") return AreaLevel::Cell;
  fail(ErrorKind::Validation, "unknown level '" + text + "' (expected state, lga, national or cell)");
}

AggregationWeights aggregation_weights(const PopulationGrid& grid, AreaLevel level) {
  require(level != AreaLevel::Cell, ErrorKind::Validation, "aggregation weights need an area level");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const auto& c = grid.cells[i];
    if (!c.has_membership()) continue;
    switch (level) {
      case AreaLevel::State: members[c.state_id].push_back(i); break;
      case AreaLevel::Lga:
        if (!c.lga_id.empty()) members[c.lga_id].push_back(i);
        break;
      case AreaLevel::National: members["national"].push_back(i); break;
      case AreaLevel::Cell: break;
    }
  }
  AggregationWeights w;
  w.level = level;
  for (const auto& [id, cells] : members) {
    double total = 0.0;
    for (auto i : cells) total += grid.cells[i].pop;
    if (!(total > 0.0))
      fail(ErrorKind::DegenerateArea, std::string(to_string(level)) + " '" + id + "' has zero total population");
    AreaWeights a;
    a.area_id = id;
    a.cells.reserve(cells.size());
    for (auto i : cells) a.cells.emplace_back(i, grid.cells[i].pop / total);
    w.areas.push_back(std::move(a));
  }
  return w;
}

}  // namespace vaxmap
