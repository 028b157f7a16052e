#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vaxmap {

struct RasterGeometry {
  int ncols = 0;
  int nrows = 0;
  double xllcorner = 0.0;
  double yllcorner = 0.0;
  double cellsize = 1.0;

  bool same_as(const RasterGeometry& other) const;
  std::string describe() const;

  // Cell centres; row 0 is the northern-most row as stored in the file.
  double center_x(int col) const { return xllcorner + (col + 0.5) * cellsize; }
  double center_y(int row) const { return yllcorner + (nrows - row - 0.5) * cellsize; }
};

// ESRI ASCII grid. Values are row-major, top row first.
struct AsciiGrid {
  RasterGeometry geometry;
  double nodata = -9999.0;
  std::vector<double> values;

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * geometry.ncols + col]; }
  bool is_nodata(double v) const { return v == nodata; }
};

AsciiGrid read_ascii_grid(const std::filesystem::path& path);
void write_ascii_grid(const std::filesystem::path& path, const AsciiGrid& grid);

}  // namespace vaxmap
