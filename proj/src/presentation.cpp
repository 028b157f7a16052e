#include "vaxmap/presentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap {

double quantile_sorted(std::span<const double> sorted, double p) {
  require(!sorted.empty(), ErrorKind::Validation, "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, ErrorKind::Validation, "quantile level must lie in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

std::vector<double> sorted_row(const CoverageDraws& d, std::size_t u) {
  const auto row = d.values.row(static_cast<Eigen::Index>(u));
  std::vector<double> v(row.data(), row.data() + row.size());
  std::sort(v.begin(), v.end());
  return v;
}

void check_units(const CoverageDraws& d) {
  require(d.unit_ids.size() == d.units(), ErrorKind::Dimension, "unit ids do not match the draw matrix");
  require(d.draws() >= 1, ErrorKind::Validation, "coverage draws hold no columns");
}

}  // namespace

std::vector<UnitSummary> summarize(const CoverageDraws& d, double level) {
  check_units(d);
  require(level > 0.0 && level < 1.0, ErrorKind::Validation, "credible level must lie in (0, 1)");
  std::vector<UnitSummary> out;
  out.reserve(d.units());
  const double m = static_cast<double>(d.draws());
  for (std::size_t u = 0; u < d.units(); ++u) {
    const auto v = sorted_row(d, u);
    UnitSummary s;
    s.unit_id = d.unit_ids[u];
    s.median = quantile_sorted(v, 0.5);
    s.lower = quantile_sorted(v, (1.0 - level) / 2.0);
    s.upper = quantile_sorted(v, (1.0 + level) / 2.0);
    s.ci_width = s.upper - s.lower;
    const auto row = d.values.row(static_cast<Eigen::Index>(u));
    s.mean = row.sum() / m;
    if (d.draws() >= 2) {
      double ss = 0.0;
      for (Eigen::Index j = 0; j < row.size(); ++j) ss += (row[j] - s.mean) * (row[j] - s.mean);
      s.sd = std::sqrt(ss / (m - 1.0));
    } else {
      s.sd = std::numeric_limits<double>::quiet_NaN();
    }
    if (s.mean != 0.0 && std::isfinite(s.sd)) s.cv = s.sd / s.mean;
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<UnitSummary>& rows) {
  CsvTable t;
  t.header = {"unit_id", "median", "mean", "sd", "lower", "upper", "ci_width", "cv"};
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); };
  for (const auto& r : rows)
    t.rows.push_back({r.unit_id, num(r.median), num(r.mean), num(r.sd), num(r.lower), num(r.upper), num(r.ci_width),
                      r.cv ? num(*r.cv) : std::string("NA")});
  write_csv(path, t);
}

std::vector<double> exceedance(const CoverageDraws& d, double t) {
  check_units(d);
  require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "exceedance threshold must lie in [0, 1]");
  std::vector<double> out(d.units());
  for (std::size_t u = 0; u < d.units(); ++u) {
    const auto row = d.values.row(static_cast<Eigen::Index>(u));
    std::size_t hits = 0;
    for (Eigen::Index j = 0; j < row.size(); ++j) hits += row[j] >= t;
    out[u] = static_cast<double>(hits) / static_cast<double>(d.draws());
  }
  return out;
}

RankDistribution rank_distribution(const CoverageDraws& d) {
  check_units(d);
  const std::size_t a = d.units();
  require(a >= 2, ErrorKind::Validation, "ranking needs at least two units");
  // Position of each unit in unit-id order, the tie-break key.
  std::vector<std::size_t> by_id(a);
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t x, std::size_t y) { return d.unit_ids[x] < d.unit_ids[y]; });
  std::vector<std::size_t> id_rank(a);
  for (std::size_t i = 0; i < a; ++i) id_rank[by_id[i]] = i;

  std::vector<std::vector<std::size_t>> counts(a, std::vector<std::size_t>(a, 0));
  std::vector<std::size_t> order(a);
  for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const double vx = d.values(static_cast<Eigen::Index>(x), j), vy = d.values(static_cast<Eigen::Index>(y), j);
      if (vx != vy) return vx < vy;
      return id_rank[x] < id_rank[y];
    });
    for (std::size_t r = 0; r < a; ++r) ++counts[order[r]][r];
  }
  RankDistribution out;
  out.unit_ids = d.unit_ids;
  out.probs.resize(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
  out.expected_rank.assign(a, 0.0);
  const double m = static_cast<double>(d.draws());
  for (std::size_t u = 0; u < a; ++u) {
    double er = 0.0;
    for (std::size_t r = 0; r < a; ++r) {
      const double p = static_cast<double>(counts[u][r]) / m;
      out.probs(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(r)) = p;
      er += static_cast<double>(r + 1) * static_cast<double>(counts[u][r]);
    }
    out.expected_rank[u] = er / m;
  }
  return out;
}

int Partition::interval_of(double v) const {
  const auto first = breaks.begin() + 1;
  const auto last = breaks.end() - 1;
  return static_cast<int>(std::upper_bound(first, last, v) - first);
}

void Partition::validate() const {
  if (breaks.size() < 2) fail(ErrorKind::DegeneratePartition, "a partition needs at least one interval");
  if (breaks.front() != 0.0 || breaks.back() != 1.0)
    fail(ErrorKind::DegeneratePartition, "partition endpoints must be 0 and 1");
  for (std::size_t i = 1; i < breaks.size(); ++i)
    if (!(breaks[i] > breaks[i - 1]))
      fail(ErrorKind::DegeneratePartition, "partition breakpoints are not strictly increasing at position " +
                                               std::to_string(i) + " (" + format_double(breaks[i - 1]) + " then " +
                                               format_double(breaks[i]) + ")");
}

Partition Partition::from_thresholds(const std::vector<double>& thresholds) {
  Partition p;
  p.breaks.push_back(0.0);
  p.breaks.insert(p.breaks.end(), thresholds.begin(), thresholds.end());
  p.breaks.push_back(1.0);
  p.validate();
  return p;
}

ClassifiedMap classify(const CoverageDraws& d, const Partition& partition) {
  check_units(d);
  partition.validate();
  const int k = partition.intervals();
  ClassifiedMap out;
  out.partition = partition;
  out.unit_ids = d.unit_ids;
  out.interval_probs.setZero(static_cast<Eigen::Index>(d.units()), k);
  const double m = static_cast<double>(d.draws());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k));
  double total = 0.0;
  for (std::size_t u = 0; u < d.units(); ++u) {
    std::fill(counts.begin(), counts.end(), 0);
    const auto row = d.values.row(static_cast<Eigen::Index>(u));
    for (Eigen::Index j = 0; j < row.size(); ++j) ++counts[static_cast<std::size_t>(partition.interval_of(row[j]))];
    int best = 0;
    for (int i = 0; i < k; ++i) {
      out.interval_probs(static_cast<Eigen::Index>(u), i) = static_cast<double>(counts[i]) / m;
      if (counts[i] > counts[best]) best = i;
    }
    out.assignment.push_back(best);
    const double tcp = static_cast<double>(counts[best]) / m;
    out.tcp.push_back(tcp);
    total += tcp;
  }
  out.atcp = d.units() > 0 ? total / static_cast<double>(d.units()) : 1.0;
  return out;
}

namespace {

Partition partition_from_sorted(std::span<const double> sorted, int k) {
  require(k >= 1, ErrorKind::Validation, "number of intervals must be >= 1");
  require(sorted.size() >= static_cast<std::size_t>(k), ErrorKind::Validation,
          "pooled sample smaller than the number of intervals");
  Partition p;
  p.breaks.push_back(0.0);
  for (int i = 1; i < k; ++i) p.breaks.push_back(quantile_sorted(sorted, static_cast<double>(i) / k));
  p.breaks.push_back(1.0);
  p.validate();
  return p;
}

std::vector<double> pooled_sorted(const CoverageDraws& d) {
  std::vector<double> v(d.values.data(), d.values.data() + d.values.size());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

Partition quantile_partition(std::span<const double> pooled, int k) {
  std::vector<double> v(pooled.begin(), pooled.end());
  std::sort(v.begin(), v.end());
  return partition_from_sorted(v, k);
}

Partition quantile_partition(const CoverageDraws& d, int k) { return partition_from_sorted(pooled_sorted(d), k); }

GranularityChoice select_granularity(const CoverageDraws& d, double atcp_min, int k_max) {
  check_units(d);
  require(atcp_min > 0.0 && atcp_min <= 1.0, ErrorKind::Validation, "atcp_min must lie in (0, 1]");
  require(k_max >= 1, ErrorKind::Validation, "K_max must be >= 1");
  const auto pooled = pooled_sorted(d);
  GranularityChoice out;
  for (int k = k_max; k >= 2; --k) {
    Partition p;
    try {
      p = partition_from_sorted(pooled, k);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegeneratePartition) throw;
      continue;
    }
    ClassifiedMap map = classify(d, p);
    out.atcp_by_k.emplace_back(k, map.atcp);
    if (map.atcp >= atcp_min) {
      out.k = k;
      out.map = std::move(map);
      return out;
    }
  }
  out.k = 1;
  out.map = classify(d, partition_from_sorted(pooled, 1));
  out.atcp_by_k.emplace_back(1, out.map.atcp);
  if (k_max > 1)
    out.notice = "no K in [2, " + std::to_string(k_max) + "] reaches ATCP >= " + format_double(atcp_min) +
                 "; using the single interval K = 1";
  return out;
}

Palette Palette::read(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const int ci = t.column("interval_index"), cr = t.column("r"), cg = t.column("g"), cb = t.column("b");
  for (auto [name, idx] : {std::pair{"interval_index", ci}, {"r", cr}, {"g", cg}, {"b", cb}})
    if (idx < 0) fail(ErrorKind::Schema, path.string() + ": missing column '" + name + "'");
  std::map<long long, Rgb> by_index;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = path.string() + " row " + std::to_string(i + 1);
    const auto& row = t.rows[i];
    Rgb c{};
    int slot = 0;
    for (int col : {cr, cg, cb}) {
      const long long v = parse_int(row.at(static_cast<std::size_t>(col)), ctx);
      require(v >= 0 && v <= 255, ErrorKind::Validation, ctx + ": color component outside 0..255");
      c[static_cast<std::size_t>(slot++)] = static_cast<std::uint8_t>(v);
    }
    by_index[parse_int(row.at(static_cast<std::size_t>(ci)), ctx)] = c;
  }
  Palette p;
  long long expect = 1;
  for (const auto& [idx, c] : by_index) {
    require(idx == expect, ErrorKind::Validation, path.string() + ": interval indices must run 1..K without gaps");
    p.colors.push_back(c);
    ++expect;
  }
  require(!p.colors.empty(), ErrorKind::Validation, path.string() + ": palette is empty");
  return p;
}

Palette Palette::ramp(int k) {
  require(k >= 1, ErrorKind::Validation, "palette needs at least one color");
  const std::array<std::array<double, 3>, 3> stops{{{215, 48, 39}, {254, 224, 139}, {26, 152, 80}}};
  Palette p;
  for (int i = 0; i < k; ++i) {
    const double t = k == 1 ? 0.5 : static_cast<double>(i) / (k - 1);
    const double s = t * 2.0;
    const int seg = std::min(static_cast<int>(s), 1);
    const double f = s - seg;
    Rgb c{};
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = static_cast<std::uint8_t>(std::lround(stops[seg][ch] + f * (stops[seg + 1][ch] - stops[seg][ch])));
    p.colors.push_back(c);
  }
  return p;
}

namespace {

std::string unit_key(const GridCell& c, AreaLevel level) {
  if (level == AreaLevel::Cell) return cell_unit_id(c);
  if (!c.has_membership()) return {};
  switch (level) {
    case AreaLevel::State: return c.state_id;
    case AreaLevel::Lga: return c.lga_id;
    case AreaLevel::National: return "national";
    case AreaLevel::Cell: break;
  }
  return {};
}

std::string percent(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << v * 100.0 << '%';
  return os.str();
}

// Shared painter: `interval` is the interval index per unit, `tcp` optional.
void paint(const std::vector<std::string>& unit_ids, const std::vector<int>& interval, const std::vector<double>* tcp,
           const Partition& partition, const PopulationGrid& grid, AreaLevel level, const Palette& palette,
           const RenderPaths& out) {
  partition.validate();
  const int k = partition.intervals();
  require(static_cast<int>(palette.colors.size()) >= k, ErrorKind::Validation,
          "palette has " + std::to_string(palette.colors.size()) + " colors for " + std::to_string(k) + " intervals");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < unit_ids.size(); ++i) index.emplace(unit_ids[i], i);

  std::vector<char> seen(unit_ids.size(), 0);
  const auto& g = grid.geometry;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(g.ncols) * g.nrows * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) std::copy(kNodataColor.begin(), kNodataColor.end(), pixels.begin() + i);
  for (const auto& cell : grid.cells) {
    const std::string key = unit_key(cell, level);
    if (key.empty()) continue;
    const auto it = index.find(key);
    if (it == index.end()) continue;
    seen[it->second] = 1;
    const Rgb& c = palette.colors[static_cast<std::size_t>(interval[it->second])];
    const std::size_t off = (static_cast<std::size_t>(cell.row) * g.ncols + cell.col) * 3;
    std::copy(c.begin(), c.end(), pixels.begin() + off);
  }
  for (std::size_t i = 0; i < unit_ids.size(); ++i)
    if (!seen[i]) fail(ErrorKind::CoverageGap, "unit '" + unit_ids[i] + "' does not appear in the membership raster");

  {
    std::ofstream os(out.image, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot write " + out.image.string());
    os << "P6\n" << g.ncols << ' ' << g.nrows << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  }

  CsvTable legend;
  legend.header = {"kind", "key", "lower", "upper", "r", "g", "b", "tcp"};
  auto color_cells = [&](int i) {
    const Rgb& c = palette.colors[static_cast<std::size_t>(i)];
    return std::array<std::string, 3>{std::to_string(c[0]), std::to_string(c[1]), std::to_string(c[2])};
  };
  for (int i = 0; i < k; ++i) {
    const auto c = color_cells(i);
    legend.rows.push_back({"interval", std::to_string(i + 1), format_double(partition.breaks[i]),
                           format_double(partition.breaks[i + 1]), c[0], c[1], c[2], ""});
  }
  for (std::size_t u = 0; u < unit_ids.size(); ++u) {
    const int i = interval[u];
    const auto c = color_cells(i);
    legend.rows.push_back({"unit", unit_ids[u], format_double(partition.breaks[i]), format_double(partition.breaks[i + 1]),
                           c[0], c[1], c[2], tcp ? format_double((*tcp)[u]) : std::string()});
  }
  write_csv(out.legend_csv, legend);

  std::ostringstream svg;
  const int box = 60;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << box * k + 20 << "\" height=\"70\">\n";
  for (int i = 0; i < k; ++i) {
    const Rgb& c = palette.colors[static_cast<std::size_t>(i)];
    svg << "  <rect x=\"" << 10 + box * i << "\" y=\"10\" width=\"" << box << "\" height=\"25\" fill=\"rgb("
        << int(c[0]) << ',' << int(c[1]) << ',' << int(c[2]) << ")\" stroke=\"black\"/>\n";
    svg << "  <text x=\"" << 10 + box * i << "\" y=\"52\" font-size=\"10\">" << percent(partition.breaks[i]) << "</text>\n";
  }
  svg << "  <text x=\"" << 10 + box * k - 24 << "\" y=\"66\" font-size=\"10\">" << percent(partition.breaks[k])
      << "</text>\n</svg>\n";
  write_text_file(out.legend_svg, svg.str());
}

}  // namespace

void render(const ClassifiedMap& map, const PopulationGrid& grid, AreaLevel level, const Palette& palette,
            const RenderPaths& out) {
  paint(map.unit_ids, map.assignment, &map.tcp, map.partition, grid, level, palette, out);
}

void render_values(const std::vector<std::string>& unit_ids, std::span<const double> values, const Partition& partition,
                   const PopulationGrid& grid, AreaLevel level, const Palette& palette, const RenderPaths& out) {
  require(unit_ids.size() == values.size(), ErrorKind::Dimension, "one value per unit required");
  std::vector<int> interval;
  for (double v : values) interval.push_back(partition.interval_of(v));
  paint(unit_ids, interval, nullptr, partition, grid, level, palette, out);
}

void export_ridgeline(const CoverageDraws& d, const std::filesystem::path& path) {
  check_units(d);
  std::vector<double> medians(d.units());
  for (std::size_t u = 0; u < d.units(); ++u) medians[u] = quantile_sorted(sorted_row(d, u), 0.5);
  std::vector<std::size_t> order(d.units());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (medians[a] != medians[b]) return medians[a] < medians[b];
    return d.unit_ids[a] < d.unit_ids[b];
  });
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os << "unit_id,draw,value\n";
  for (std::size_t u : order) {
    const std::string id = csv_escape(d.unit_ids[u]);
    for (Eigen::Index j = 0; j < d.values.cols(); ++j)
      os << id << ',' << j << ',' << format_double(d.values(static_cast<Eigen::Index>(u), j)) << '\n';
  }
}

}  // namespace vaxmap
