#include "vaxmap/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "vaxmap/error.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap {

bool RasterGeometry::same_as(const RasterGeometry& o) const {
  const double tol = 1e-9 * std::max(cellsize, o.cellsize);
  return ncols == o.ncols && nrows == o.nrows && std::abs(xllcorner - o.xllcorner) <= tol &&
         std::abs(yllcorner - o.yllcorner) <= tol && std::abs(cellsize - o.cellsize) <= tol;
}

std::string RasterGeometry::describe() const {
  std::ostringstream os;
  os << ncols << "x" << nrows << " cells, origin (" << format_double(xllcorner) << ", "
     << format_double(yllcorner) << "), cellsize " << format_double(cellsize);
  return os.str();
}

AsciiGrid read_ascii_grid(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  AsciiGrid grid;
  bool have[6] = {false, false, false, false, false, false};
  bool center_x = false, center_y = false;
  std::string key, value;
  const std::string ctx = path.string();
  // Header: six "key value" lines, keys case-insensitive.
  for (int i = 0; i < 6; ++i) {
    std::streampos pos = in.tellg();
    if (!(in >> key)) break;
    std::string lower = key;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower.empty() || (!std::isalpha(static_cast<unsigned char>(lower[0])))) {
      in.seekg(pos);
      break;
    }
    if (!(in >> value)) fail(ErrorKind::Schema, ctx + ": truncated header");
    if (lower == "ncols") {
      grid.geometry.ncols = static_cast<int>(parse_int(value, ctx));
      have[0] = true;
    } else if (lower == "nrows") {
      grid.geometry.nrows = static_cast<int>(parse_int(value, ctx));
      have[1] = true;
    } else if (lower == "xllcorner" || lower == "xllcenter") {
      grid.geometry.xllcorner = parse_double(value, ctx);
      center_x = lower == "xllcenter";
      have[2] = true;
    } else if (lower == "yllcorner" || lower == "yllcenter") {
      grid.geometry.yllcorner = parse_double(value, ctx);
      center_y = lower == "yllcenter";
      have[3] = true;
    } else if (lower == "cellsize") {
      grid.geometry.cellsize = parse_double(value, ctx);
      have[4] = true;
    } else if (lower == "nodata_value") {
      grid.nodata = parse_double(value, ctx);
      have[5] = true;
    } else {
      fail(ErrorKind::Schema, ctx + ": unknown header key '" + key + "'");
    }
  }
  for (int i = 0; i < 5; ++i)
    if (!have[i]) fail(ErrorKind::Schema, ctx + ": header must define ncols, nrows, xllcorner, yllcorner, cellsize");
  if (grid.geometry.ncols <= 0 || grid.geometry.nrows <= 0 || !(grid.geometry.cellsize > 0.0))
    fail(ErrorKind::Schema, ctx + ": non-positive raster dimensions or cellsize");
  if (center_x) grid.geometry.xllcorner -= 0.5 * grid.geometry.cellsize;
  if (center_y) grid.geometry.yllcorner -= 0.5 * grid.geometry.cellsize;

  const std::size_t count = static_cast<std::size_t>(grid.geometry.ncols) * grid.geometry.nrows;
  grid.values.reserve(count);
  while (in >> value) {
    grid.values.push_back(parse_double(value, ctx));
    if (grid.values.size() > count) break;
  }
  if (grid.values.size() != count)
    fail(ErrorKind::Schema, ctx + ": expected " + std::to_string(count) + " values, found " +
                                std::to_string(grid.values.size()) + (grid.values.size() > count ? "+" : ""));
  return grid;
}

void write_ascii_grid(const std::filesystem::path& path, const AsciiGrid& grid) {
  std::ostringstream os;
  const auto& g = grid.geometry;
  os << "ncols " << g.ncols << '\n'
     << "nrows " << g.nrows << '\n'
     << "xllcorner " << format_double(g.xllcorner) << '\n'
     << "yllcorner " << format_double(g.yllcorner) << '\n'
     << "cellsize " << format_double(g.cellsize) << '\n'
     << "NODATA_value " << format_double(grid.nodata) << '\n';
  for (int r = 0; r < g.nrows; ++r) {
    for (int c = 0; c < g.ncols; ++c) {
      if (c) os << ' ';
      os << format_double(grid.at(r, c));
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace vaxmap
