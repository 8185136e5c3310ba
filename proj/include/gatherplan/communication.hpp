#pragma once

#include <vector>

#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"
#include "gatherplan/line_of_sight.hpp"

namespace gatherplan {

/// Two agents can exchange data iff they are closer than `d_com` cells and the segment
/// between their cells is unoccluded. Points are in cell units.
inline bool comm_link(OccupancyGrid const& grid, Point a, Point b, double d_com) {
  if (!(distance(a, b) < d_com)) return false;
  auto const ca = grid.cell_at(a);
  auto const cb = grid.cell_at(b);
  if (!ca || !cb) return false;
  return line_of_sight(grid, *ca, *cb);
}

inline bool comm_link(OccupancyGrid const& grid, CellIndex a, CellIndex b, double d_com) {
  return comm_link(grid, grid.center(a), grid.center(b), d_com);
}

/// Free cells linked to `center`.
inline std::vector<CellIndex> comm_region(OccupancyGrid const& grid, CellIndex center, double d_com) {
  std::vector<CellIndex> out;
  int const r = static_cast<int>(std::ceil(d_com));
  int const cx = grid.x_of(center);
  int const cy = grid.y_of(center);
  for (int y = std::max(0, cy - r); y <= std::min(grid.height() - 1, cy + r); ++y) {
    for (int x = std::max(0, cx - r); x <= std::min(grid.width() - 1, cx + r); ++x) {
      CellIndex const c = grid.index(x, y);
      if (grid.is_free(c) && comm_link(grid, center, c, d_com)) out.push_back(c);
    }
  }
  return out;
}

}  // namespace gatherplan
