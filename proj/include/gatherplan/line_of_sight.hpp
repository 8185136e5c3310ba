#pragma once

#include <cstdlib>
#include <utility>

#include "gatherplan/grid.hpp"

namespace gatherplan {

/// Visits every cell touched by the segment between the centers of (x0, y0) and (x1, y1),
/// including both cells at a corner crossing. Stops early when `visit` returns false.
/// Returns false iff a visit returned false.
template <typename Visit>
bool supercover_line(int x0, int y0, int x1, int y1, Visit&& visit) {
  if (!visit(x0, y0)) return false;
  int dx = x1 - x0;
  int dy = y1 - y0;
  int const xstep = dx < 0 ? -1 : 1;
  int const ystep = dy < 0 ? -1 : 1;
  dx = std::abs(dx);
  dy = std::abs(dy);
  int const ddx = 2 * dx;
  int const ddy = 2 * dy;
  int x = x0;
  int y = y0;
  if (ddx >= ddy) {
    int error = dx;
    int prev = dx;
    for (int i = 0; i < dx; ++i) {
      x += xstep;
      error += ddy;
      if (error > ddx) {
        y += ystep;
        error -= ddx;
        if (error + prev < ddx) {
          if (!visit(x, y - ystep)) return false;
        } else if (error + prev > ddx) {
          if (!visit(x - xstep, y)) return false;
        } else {
          if (!visit(x, y - ystep)) return false;
          if (!visit(x - xstep, y)) return false;
        }
      }
      if (!visit(x, y)) return false;
      prev = error;
    }
  } else {
    int error = dy;
    int prev = dy;
    for (int i = 0; i < dy; ++i) {
      y += ystep;
      error += ddx;
      if (error > ddy) {
        x += xstep;
        error -= ddy;
        if (error + prev < ddy) {
          if (!visit(x - xstep, y)) return false;
        } else if (error + prev > ddy) {
          if (!visit(x, y - ystep)) return false;
        } else {
          if (!visit(x - xstep, y)) return false;
          if (!visit(x, y - ystep)) return false;
        }
      }
      if (!visit(x, y)) return false;
      prev = error;
    }
  }
  return true;
}

/// True iff no obstacle cell is touched by the segment between the two cell centers.
/// Traversal always starts from the lower index so the result is symmetric.
inline bool line_of_sight(OccupancyGrid const& grid, CellIndex a, CellIndex b) {
  if (a >= grid.size() || b >= grid.size()) throw InvalidInput("line_of_sight cell out of bounds");
  if (b < a) std::swap(a, b);
  return supercover_line(grid.x_of(a), grid.y_of(a), grid.x_of(b), grid.y_of(b),
                         [&](int x, int y) { return grid.is_free(x, y); });
}

}  // namespace gatherplan
