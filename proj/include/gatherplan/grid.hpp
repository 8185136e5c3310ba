#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gatherplan {

/// Linear cell index, `y * width + x`.
using CellIndex = std::size_t;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NoPath : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Continuous position in cell units; cell (x, y) has its center at (x, y).
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(Point const&, Point const&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class CellState : std::uint8_t { kFree = 0, kObstacle = 1 };

/// Rectangular occupancy map with a distinguished operation-center cell.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(int width, int height, std::vector<CellState> cells, CellIndex oc_cell,
                double cell_size = 1.0)
      : width_(width), height_(height), cells_(std::move(cells)), oc_cell_(oc_cell),
        cell_size_(cell_size) {
    if (width_ <= 0 || height_ <= 0) {
      throw InvalidInput("grid dimensions must be positive");
    }
    if (cells_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
      throw InvalidInput("cell vector does not match grid dimensions");
    }
    if (!(cell_size_ > 0.0)) {
      throw InvalidInput("cell size must be positive");
    }
    if (oc_cell_ >= cells_.size() || cells_[oc_cell_] != CellState::kFree) {
      throw InvalidInput("operation center must be a free in-bounds cell");
    }
  }

  /// All-free grid.
  static OccupancyGrid open(int width, int height, CellIndex oc_cell, double cell_size = 1.0) {
    return OccupancyGrid(width, height,
                         std::vector<CellState>(static_cast<std::size_t>(width) * height,
                                                CellState::kFree),
                         oc_cell, cell_size);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return cells_.size(); }
  CellIndex oc_cell() const { return oc_cell_; }
  double cell_size() const { return cell_size_; }
  std::vector<CellState> const& cells() const { return cells_; }

  CellIndex index(int x, int y) const {
    return static_cast<CellIndex>(y) * static_cast<CellIndex>(width_) + static_cast<CellIndex>(x);
  }
  int x_of(CellIndex c) const { return static_cast<int>(c % static_cast<CellIndex>(width_)); }
  int y_of(CellIndex c) const { return static_cast<int>(c / static_cast<CellIndex>(width_)); }
  Point center(CellIndex c) const { return {static_cast<double>(x_of(c)), static_cast<double>(y_of(c))}; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool is_free(CellIndex c) const { return cells_[c] == CellState::kFree; }
  bool is_free(int x, int y) const { return in_bounds(x, y) && is_free(index(x, y)); }

  /// Cell whose center is nearest to `p`, if in bounds.
  std::optional<CellIndex> cell_at(Point p) const {
    auto const x = static_cast<int>(std::lround(p.x));
    auto const y = static_cast<int>(std::lround(p.y));
    if (!in_bounds(x, y)) return std::nullopt;
    return index(x, y);
  }

  std::size_t free_count() const {
    std::size_t n = 0;
    for (auto s : cells_) n += (s == CellState::kFree);
    return n;
  }

  std::vector<CellIndex> free_cells() const {
    std::vector<CellIndex> out;
    for (CellIndex c = 0; c < cells_.size(); ++c) {
      if (is_free(c)) out.push_back(c);
    }
    return out;
  }

  /// Copy of this grid where every cell with `keep[c] == false` becomes an obstacle.
  OccupancyGrid restricted(std::vector<bool> const& keep, CellIndex new_oc) const {
    auto cells = cells_;
    for (CellIndex c = 0; c < cells.size(); ++c) {
      if (!keep[c]) cells[c] = CellState::kObstacle;
    }
    return OccupancyGrid(width_, height_, std::move(cells), new_oc, cell_size_);
  }

  void set_obstacle(CellIndex c) {
    if (c == oc_cell_) throw InvalidInput("cannot place an obstacle on the operation center");
    cells_[c] = CellState::kObstacle;
  }

  friend bool operator==(OccupancyGrid const&, OccupancyGrid const&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<CellState> cells_;
  CellIndex oc_cell_ = 0;
  double cell_size_ = 1.0;
};

/// Rectangular sub-grid with its own indexing; cells outside `keep` become obstacles.
struct GridWindow {
  OccupancyGrid grid;
  int x0 = 0;
  int y0 = 0;
  int parent_width = 0;

  CellIndex to_local(CellIndex parent_cell) const {
    int const x = static_cast<int>(parent_cell % static_cast<CellIndex>(parent_width)) - x0;
    int const y = static_cast<int>(parent_cell / static_cast<CellIndex>(parent_width)) - y0;
    return grid.index(x, y);
  }
  CellIndex to_parent(CellIndex local) const {
    return static_cast<CellIndex>(grid.y_of(local) + y0) * static_cast<CellIndex>(parent_width) +
           static_cast<CellIndex>(grid.x_of(local) + x0);
  }
  bool contains(CellIndex parent_cell) const {
    int const x = static_cast<int>(parent_cell % static_cast<CellIndex>(parent_width)) - x0;
    int const y = static_cast<int>(parent_cell / static_cast<CellIndex>(parent_width)) - y0;
    return grid.in_bounds(x, y);
  }
};

/// Window over the inclusive box [x0, x1] x [y0, y1] (clipped to the grid). The window's
/// operation center is its first kept free cell.
template <typename Keep>
GridWindow make_window(OccupancyGrid const& grid, int x0, int y0, int x1, int y1, Keep&& keep) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, grid.width() - 1);
  y1 = std::min(y1, grid.height() - 1);
  if (x1 < x0 || y1 < y0) throw InvalidInput("empty grid window");
  int const w = x1 - x0 + 1;
  int const h = y1 - y0 + 1;
  std::vector<CellState> cells(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), CellState::kObstacle);
  std::optional<CellIndex> oc;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      CellIndex const parent = grid.index(x + x0, y + y0);
      if (grid.is_free(parent) && keep(parent)) {
        CellIndex const local = static_cast<CellIndex>(y) * static_cast<CellIndex>(w) + static_cast<CellIndex>(x);
        cells[local] = CellState::kFree;
        if (!oc) oc = local;
      }
    }
  }
  if (!oc) throw InvalidInput("grid window holds no free cell");
  return GridWindow{OccupancyGrid(w, h, std::move(cells), *oc, grid.cell_size()), x0, y0, grid.width()};
}

namespace detail {

struct Offset {
  int dx;
  int dy;
};

inline constexpr Offset kAxisOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
inline constexpr Offset kDiagonalOffsets[4] = {{1, 1}, {-1, -1}, {1, -1}, {-1, 1}};

}  // namespace detail

}  // namespace gatherplan
