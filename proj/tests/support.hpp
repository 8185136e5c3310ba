#pragma once

// Map builders and independent oracles shared by the test suites.

#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"

namespace gatherplan::testing {

/// Grid from rows of '#', '.', 'O' (exactly one 'O').
inline OccupancyGrid grid_from_rows(std::vector<std::string> const& rows, double cell_size = 1.0) {
  int const h = static_cast<int>(rows.size());
  int const w = static_cast<int>(rows.front().size());
  std::vector<CellState> cells(static_cast<std::size_t>(w) * h, CellState::kFree);
  CellIndex oc = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      char const ch = rows[y][x];
      auto const c = static_cast<CellIndex>(y) * w + x;
      if (ch == '#') cells[c] = CellState::kObstacle;
      if (ch == 'O') oc = c;
    }
  }
  return OccupancyGrid(w, h, std::move(cells), oc, cell_size);
}

/// Two square rooms of side `room` joined by a one-cell-wide corridor of `corridor` cells.
inline OccupancyGrid two_rooms(int room = 12, int corridor = 6) {
  int const w = 2 * room + corridor + 4;
  int const h = room + 2;
  std::vector<std::string> rows(h, std::string(w, '#'));
  for (int y = 1; y <= room; ++y) {
    for (int x = 1; x <= room; ++x) rows[y][x] = '.';
    for (int x = room + corridor + 3; x < w - 1; ++x) rows[y][x] = '.';
  }
  int const door_y = (room + 1) / 2;
  for (int x = room + 1; x < room + corridor + 3; ++x) rows[door_y][x] = '.';
  rows[door_y][2] = 'O';
  return grid_from_rows(rows);
}

/// Rooms-and-corridors map: a 3x3 lattice of rooms with doors on a central cross.
inline OccupancyGrid rooms_map(int room = 10) {
  int const n = 3;
  int const w = n * (room + 1) + 1;
  std::vector<std::string> rows(w, std::string(w, '.'));
  for (int k = 0; k <= n; ++k) {
    int const line = k * (room + 1);
    for (int i = 0; i < w; ++i) {
      rows[line][i] = '#';
      rows[i][line] = '#';
    }
  }
  for (int r = 0; r < n; ++r) {
    for (int k = 1; k < n; ++k) {
      int const line = k * (room + 1);
      int const mid = r * (room + 1) + (room + 1) / 2;
      rows[line][mid] = '.';
      rows[mid][line] = '.';
    }
  }
  rows[1][1] = 'O';
  return grid_from_rows(rows);
}

/// Random obstacle map with the given density; the OC is the first free cell.
inline OccupancyGrid random_map(std::mt19937_64& rng, int w, int h, double density) {
  std::bernoulli_distribution wall(density);
  std::vector<CellState> cells(static_cast<std::size_t>(w) * h);
  for (auto& c : cells) c = wall(rng) ? CellState::kObstacle : CellState::kFree;
  CellIndex oc = 0;
  while (cells[oc] != CellState::kFree) ++oc;
  return OccupancyGrid(w, h, std::move(cells), oc);
}

/// Random map sealed to the OC's component, redrawn until that component holds most free cells.
inline OccupancyGrid random_connected_map(std::mt19937_64& rng, int w, int h, double density) {
  while (true) {
    auto grid = random_map(rng, w, h, density);
    auto const before = grid.free_count();
    auto sealed = seal_unreachable(grid);
    if (sealed.free_count() * 10 >= before * 8) return sealed;
  }
}

inline CellIndex random_free_cell(std::mt19937_64& rng, OccupancyGrid const& grid) {
  auto const free = grid.free_cells();
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  return free[pick(rng)];
}

/// 8-neighbor Dijkstra with the same no-corner-cutting move rule as the solver.
inline std::vector<double> dijkstra8(OccupancyGrid const& grid, CellIndex source) {
  std::vector<double> dist(grid.size(), std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, CellIndex>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  dist[source] = 0.0;
  open.emplace(0.0, source);
  while (!open.empty()) {
    auto [d, c] = open.top();
    open.pop();
    if (d > dist[c]) continue;
    int const x = grid.x_of(c);
    int const y = grid.y_of(c);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        if (!grid.is_free(x + dx, y + dy)) continue;
        bool const diag = dx != 0 && dy != 0;
        if (diag && (!grid.is_free(x + dx, y) || !grid.is_free(x, y + dy))) continue;
        double const nd = d + (diag ? std::sqrt(2.0) : 1.0) * grid.cell_size();
        auto const n = grid.index(x + dx, y + dy);
        if (nd < dist[n]) {
          dist[n] = nd;
          open.emplace(nd, n);
        }
      }
    }
  }
  return dist;
}

inline double euclidean(OccupancyGrid const& grid, CellIndex a, CellIndex b) {
  return distance(grid.center(a), grid.center(b)) * grid.cell_size();
}

/// 4-connected components of cells satisfying `member`.
inline int count_components(OccupancyGrid const& grid, std::function<bool(CellIndex)> const& member) {
  std::vector<bool> seen(grid.size(), false);
  int components = 0;
  for (CellIndex start = 0; start < grid.size(); ++start) {
    if (seen[start] || !member(start)) continue;
    ++components;
    std::vector<CellIndex> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
      auto const c = stack.back();
      stack.pop_back();
      for (auto [dx, dy] : detail::kAxisOffsets) {
        int const nx = grid.x_of(c) + dx;
        int const ny = grid.y_of(c) + dy;
        if (!grid.in_bounds(nx, ny)) continue;
        auto const n = grid.index(nx, ny);
        if (!seen[n] && member(n)) {
          seen[n] = true;
          stack.push_back(n);
        }
      }
    }
  }
  return components;
}

}  // namespace gatherplan::testing
