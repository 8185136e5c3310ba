#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "gatherplan/grid.hpp"

namespace gatherplan {

inline constexpr double kUnreached = std::numeric_limits<double>::infinity();

/// Speeds below this are raised to it while marching so narrow passages slow fronts
/// without stopping them.
inline constexpr double kMinSpeed = 1e-6;

inline constexpr double kSqrt2 = 1.41421356237309504880;

/// Per-cell propagation speed; zero on obstacles.
struct SpeedField {
  std::vector<double> values;

  static SpeedField uniform(OccupancyGrid const& grid) {
    SpeedField f;
    f.values.resize(grid.size());
    for (CellIndex c = 0; c < grid.size(); ++c) f.values[c] = grid.is_free(c) ? 1.0 : 0.0;
    return f;
  }
};

/// Arrival times of a wavefront started at `sources`. Values are in length units
/// (cell_size scaled) divided by the local speed.
struct DistanceField {
  int width = 0;
  int height = 0;
  double cell_size = 1.0;
  std::vector<double> values;
  std::vector<CellIndex> sources;
  /// Index into `sources` of the front that reached each cell first; -1 if unreached.
  std::vector<std::int32_t> labels;
  /// Cells the front may traverse (the free cells of the solved grid).
  std::vector<std::uint8_t> passable;

  bool reached(CellIndex c) const { return values[c] != kUnreached; }
  double operator[](CellIndex c) const { return values[c]; }
  std::size_t size() const { return values.size(); }
};

/// Ordered 8-connected cell sequence.
struct GridPath {
  std::vector<CellIndex> cells;
  double length = 0.0;  // meters
  double cell_size = 1.0;

  bool empty() const { return cells.empty(); }
  CellIndex front() const { return cells.front(); }
  CellIndex back() const { return cells.back(); }
};

/// Early-stop controls for a march.
struct MarchOptions {
  /// Stop after this many cells have been accepted (sources included). 0 = unlimited.
  std::size_t max_accepted = 0;
  /// When set, receives the cells in acceptance order.
  std::vector<CellIndex>* accepted_order = nullptr;
  /// When non-empty, stop once all of these cells are accepted.
  std::span<CellIndex const> targets = {};
};

namespace detail {

/// Solution of the two-direction upwind quadratic for spacing `h` (already divided by speed).
inline double solve_pair(double a, double b, double h) {
  if (a > b) std::swap(a, b);
  if (a == kUnreached) return kUnreached;
  if (b == kUnreached || b - a >= h) return a + h;
  double const d = a - b;
  return 0.5 * (a + b + std::sqrt(2.0 * h * h - d * d));
}

/// Diagonal move from (x, y) by (dx, dy) that does not cut an obstacle corner.
inline bool diagonal_open(std::span<std::uint8_t const> passable, int width, int height, int x,
                          int y, int dx, int dy) {
  int const ax = x + dx;
  int const by = y + dy;
  if (ax < 0 || ax >= width || by < 0 || by >= height) return false;
  auto const w = static_cast<std::size_t>(width);
  return passable[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(ax)] &&
         passable[static_cast<std::size_t>(by) * w + static_cast<std::size_t>(x)];
}

/// Upwind update at `c` from neighbor values accepted so far (`known(n)` true). Combines
/// the axis stencil (spacing h) and the 45-degree rotated stencil (spacing h*sqrt2).
template <typename Known>
double upwind_update(std::span<double const> values, std::span<std::uint8_t const> passable,
                     int width, int height, double cell_size, CellIndex c, double speed,
                     Known&& known) {
  auto const w = static_cast<CellIndex>(width);
  int const x = static_cast<int>(c % w);
  int const y = static_cast<int>(c / w);
  auto value_at = [&](int nx, int ny) {
    if (nx < 0 || ny < 0 || nx >= width || ny >= height) return kUnreached;
    CellIndex const n = static_cast<CellIndex>(ny) * w + static_cast<CellIndex>(nx);
    if (!known(n)) return kUnreached;
    return values[n];
  };
  auto diag_at = [&](int dx, int dy) {
    if (!diagonal_open(passable, width, height, x, y, dx, dy)) return kUnreached;
    return value_at(x + dx, y + dy);
  };
  double const f = std::max(speed, kMinSpeed);
  double const h = cell_size / f;
  double const ax = std::min(value_at(x - 1, y), value_at(x + 1, y));
  double const ay = std::min(value_at(x, y - 1), value_at(x, y + 1));
  double const axis = solve_pair(ax, ay, h);
  double const d1 = std::min(diag_at(1, 1), diag_at(-1, -1));
  double const d2 = std::min(diag_at(1, -1), diag_at(-1, 1));
  double const diag = solve_pair(d1, d2, h * kSqrt2);
  return std::min(axis, diag);
}

/// Binary min-heap over cells with decrease-key; ties pop the lower cell index first.
class CellHeap {
 public:
  explicit CellHeap(std::size_t cells) : slot_(cells, kAbsent) {}

  bool empty() const { return entries_.empty(); }

  void push_or_decrease(CellIndex c, double key) {
    std::size_t i = slot_[c];
    if (i == kAbsent) {
      i = entries_.size();
      entries_.emplace_back(key, c);
      slot_[c] = i;
    } else {
      entries_[i].first = key;
    }
    sift_up(i);
  }

  std::pair<double, CellIndex> pop() {
    auto const top = entries_.front();
    slot_[top.second] = kAbsent;
    auto const last = entries_.back();
    entries_.pop_back();
    if (!entries_.empty()) {
      entries_[0] = last;
      slot_[last.second] = 0;
      sift_down(0);
    }
    return top;
  }

 private:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

  void place(std::size_t i, std::pair<double, CellIndex> const& e) {
    entries_[i] = e;
    slot_[e.second] = i;
  }

  void sift_up(std::size_t i) {
    auto const e = entries_[i];
    while (i > 0) {
      std::size_t const parent = (i - 1) / 2;
      if (!(e < entries_[parent])) break;
      place(i, entries_[parent]);
      i = parent;
    }
    place(i, e);
  }

  void sift_down(std::size_t i) {
    auto const e = entries_[i];
    std::size_t const n = entries_.size();
    while (true) {
      std::size_t child = 2 * i + 1;
      if (child >= n) break;
      if (child + 1 < n && entries_[child + 1] < entries_[child]) ++child;
      if (!(entries_[child] < e)) break;
      place(i, entries_[child]);
      i = child;
    }
    place(i, e);
  }

  std::vector<std::pair<double, CellIndex>> entries_;
  std::vector<std::size_t> slot_;
};

/// Fast marching over `passable` cells. Sources may be any cell (obstacle sources are
/// used for the obstacle distance field); the front only enters passable cells.
inline DistanceField march(int width, int height, double cell_size,
                           std::vector<std::uint8_t> passable, std::span<CellIndex const> sources,
                           std::span<double const> speed, MarchOptions const& options = {}) {
  DistanceField field;
  field.width = width;
  field.height = height;
  field.cell_size = cell_size;
  field.values.assign(passable.size(), kUnreached);
  field.labels.assign(passable.size(), -1);
  field.sources.assign(sources.begin(), sources.end());
  field.passable = std::move(passable);

  enum : std::uint8_t { kFar = 0, kTrial = 1, kAccepted = 2 };
  std::vector<std::uint8_t> state(field.values.size(), kFar);
  std::vector<std::uint8_t> is_source(field.values.size(), 0);
  CellHeap heap(field.values.size());

  for (std::size_t i = 0; i < sources.size(); ++i) {
    CellIndex const s = sources[i];
    if (field.labels[s] != -1) continue;  // duplicate source keeps the first label
    field.values[s] = 0.0;
    field.labels[s] = static_cast<std::int32_t>(i);
    is_source[s] = 1;
    state[s] = kTrial;
    heap.push_or_decrease(s, 0.0);
  }

  auto const w = static_cast<CellIndex>(width);
  auto const& vals = field.values;
  auto const& pass = field.passable;
  // Accepted values only (+inf elsewhere), so stencil lookups need no state check.
  std::vector<double> frozen(field.values.size(), kUnreached);
  auto frozen_at = [&](int nx, int ny) {
    if (nx < 0 || ny < 0 || nx >= width || ny >= height) return kUnreached;
    return frozen[static_cast<CellIndex>(ny) * w + static_cast<CellIndex>(nx)];
  };
  auto update = [&](int x, int y, double f) {
    double const h = cell_size / std::max(f, kMinSpeed);
    double const ax = std::min(frozen_at(x - 1, y), frozen_at(x + 1, y));
    double const ay = std::min(frozen_at(x, y - 1), frozen_at(x, y + 1));
    double const axis = solve_pair(ax, ay, h);
    auto diag_at = [&](int dx, int dy) {
      if (!diagonal_open(pass, width, height, x, y, dx, dy)) return kUnreached;
      return frozen_at(x + dx, y + dy);
    };
    double const d1 = std::min(diag_at(1, 1), diag_at(-1, -1));
    double const d2 = std::min(diag_at(1, -1), diag_at(-1, 1));
    return std::min(axis, solve_pair(d1, d2, h * kSqrt2));
  };

  // Label inherited from the smallest accepted 4-neighbor; diagonal parents only as a
  // fallback so that label regions stay 4-connected.
  auto pick_label = [&](CellIndex c) {
    int const x = static_cast<int>(c % w);
    int const y = static_cast<int>(c / w);
    double best = kUnreached;
    std::int32_t label = -1;
    auto consider = [&](int nx, int ny) {
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) return;
      CellIndex const n = static_cast<CellIndex>(ny) * w + static_cast<CellIndex>(nx);
      if (state[n] != kAccepted) return;
      if (vals[n] < best || (vals[n] == best && field.labels[n] < label)) {
        best = vals[n];
        label = field.labels[n];
      }
    };
    for (auto [dx, dy] : kAxisOffsets) consider(x + dx, y + dy);
    if (label != -1) return label;
    for (auto [dx, dy] : kDiagonalOffsets) {
      if (diagonal_open(pass, width, height, x, y, dx, dy)) consider(x + dx, y + dy);
    }
    return label;
  };

  std::vector<std::uint8_t> is_target;
  std::size_t targets_left = 0;
  if (!options.targets.empty()) {
    is_target.assign(field.values.size(), 0);
    for (auto t : options.targets) {
      if (t < is_target.size() && !is_target[t]) {
        is_target[t] = 1;
        ++targets_left;
      }
    }
  }
  bool const stop_early = options.max_accepted != 0 || !options.targets.empty();

  std::size_t accepted = 0;
  while (!heap.empty()) {
    CellIndex const c = heap.pop().second;
    if (!is_source[c]) field.labels[c] = pick_label(c);
    state[c] = kAccepted;
    frozen[c] = field.values[c];
    ++accepted;
    if (options.accepted_order != nullptr) options.accepted_order->push_back(c);
    if (options.max_accepted != 0 && accepted >= options.max_accepted) break;
    if (targets_left != 0 && is_target[c] && --targets_left == 0) break;

    int const x = static_cast<int>(c % w);
    int const y = static_cast<int>(c / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        int const nx = x + dx;
        int const ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
        CellIndex const n = static_cast<CellIndex>(ny) * w + static_cast<CellIndex>(nx);
        if (!pass[n] || state[n] == kAccepted) continue;
        if (dx != 0 && dy != 0 && !diagonal_open(pass, width, height, x, y, dx, dy)) continue;
        double const u = update(nx, ny, speed[n]);
        if (u < field.values[n]) {
          field.values[n] = u;
          state[n] = kTrial;
          heap.push_or_decrease(n, u);
        }
      }
    }
  }

  if (stop_early) {
    for (CellIndex c = 0; c < state.size(); ++c) {
      if (state[c] != kAccepted) {
        field.values[c] = kUnreached;
        field.labels[c] = -1;
      }
    }
  }
  return field;
}

inline std::vector<std::uint8_t> passable_cells(OccupancyGrid const& grid) {
  std::vector<std::uint8_t> out(grid.size());
  for (CellIndex c = 0; c < grid.size(); ++c) out[c] = grid.is_free(c) ? 1 : 0;
  return out;
}

inline void check_sources(OccupancyGrid const& grid, std::span<CellIndex const> sources) {
  if (sources.empty()) throw InvalidInput("eikonal solve needs at least one source");
  for (auto s : sources) {
    if (s >= grid.size()) throw InvalidInput("source cell out of bounds");
    if (!grid.is_free(s)) throw InvalidInput("source cell is an obstacle");
  }
}

}  // namespace detail

/// Solves |grad D| F = 1 with D = 0 on `sources`. Multi-source runs label each cell with
/// the source whose front arrived first (exact ties go to the lower source index).
inline DistanceField solve_eikonal(OccupancyGrid const& grid, std::span<CellIndex const> sources,
                                   SpeedField const& speed,
                                   MarchOptions const& options = {}) {
  detail::check_sources(grid, sources);
  if (speed.values.size() != grid.size()) throw InvalidInput("speed field size mismatch");
  bool any_positive = false;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (grid.is_free(c) && speed.values[c] > 0.0) {
      any_positive = true;
      break;
    }
  }
  if (!any_positive) throw InvalidInput("speed field is zero on every free cell");
  return detail::march(grid.width(), grid.height(), grid.cell_size(), detail::passable_cells(grid),
                       sources, speed.values, options);
}

/// Uniform-speed solve (F = 1 on free cells).
inline DistanceField solve_eikonal(OccupancyGrid const& grid, std::span<CellIndex const> sources,
                                   MarchOptions const& options = {}) {
  detail::check_sources(grid, sources);
  std::vector<double> const ones(grid.size(), 1.0);
  return detail::march(grid.width(), grid.height(), grid.cell_size(), detail::passable_cells(grid),
                       sources, ones, options);
}

inline DistanceField solve_eikonal(OccupancyGrid const& grid, CellIndex source) {
  CellIndex const s[1] = {source};
  return solve_eikonal(grid, std::span<CellIndex const>(s));
}

/// Recomputes the upwind update at `c` from the final neighbor values that are strictly
/// smaller than `field[c]`. For a converged field this reproduces `field[c]`.
inline double upwind_residual_value(DistanceField const& field, CellIndex c, double speed = 1.0) {
  double const own = field.values[c];
  return detail::upwind_update(field.values, field.passable, field.width, field.height,
                               field.cell_size, c, speed,
                               [&](CellIndex n) { return field.values[n] < own; });
}

/// Distance to the nearest obstacle for every free cell. With `boundary_is_obstacle` the map
/// border behaves as an obstacle ring just outside the grid. Obstacle cells hold 0.
inline DistanceField obstacle_field(OccupancyGrid const& grid, bool boundary_is_obstacle = true) {
  int const pad = boundary_is_obstacle ? 1 : 0;
  int const w = grid.width() + 2 * pad;
  int const h = grid.height() + 2 * pad;
  auto const wz = static_cast<CellIndex>(w);
  std::vector<std::uint8_t> passable(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  std::vector<CellIndex> sources;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      CellIndex const c = static_cast<CellIndex>(y) * wz + static_cast<CellIndex>(x);
      bool const inside = x >= pad && y >= pad && x < w - pad && y < h - pad;
      if (inside && grid.is_free(x - pad, y - pad)) {
        passable[c] = 1;
      } else {
        sources.push_back(c);
      }
    }
  }
  if (sources.empty()) throw InvalidInput("obstacle field needs at least one obstacle cell");
  std::vector<double> const ones(passable.size(), 1.0);
  auto padded = detail::march(w, h, grid.cell_size(), std::move(passable), sources, ones);

  DistanceField out;
  out.width = grid.width();
  out.height = grid.height();
  out.cell_size = grid.cell_size();
  out.values.resize(grid.size());
  out.labels.assign(grid.size(), -1);
  out.passable = detail::passable_cells(grid);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      CellIndex const c = grid.index(x, y);
      out.values[c] =
          padded.values[static_cast<CellIndex>(y + pad) * wz + static_cast<CellIndex>(x + pad)];
      if (!grid.is_free(c)) out.sources.push_back(c);
    }
  }
  return out;
}

/// Speed field proportional to `field` on free cells, optionally divided by its maximum
/// over reached free cells. Unreached cells get speed 0.
inline SpeedField speed_from_field(OccupancyGrid const& grid, DistanceField const& field,
                                   bool normalize = true) {
  SpeedField s;
  s.values.assign(grid.size(), 0.0);
  double peak = 0.0;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (grid.is_free(c) && field.reached(c)) peak = std::max(peak, field.values[c]);
  }
  double const scale = (normalize && peak > 0.0) ? 1.0 / peak : 1.0;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (grid.is_free(c) && field.reached(c)) s.values[c] = field.values[c] * scale;
  }
  return s;
}

/// Steepest descent from `from` back to a source over the 8-neighborhood, reversed so the
/// path starts at the source. With `label`, the descent stays on cells of that label.
inline GridPath extract_path(DistanceField const& field, CellIndex from,
                             std::optional<std::int32_t> label = std::nullopt) {
  if (from >= field.size() || !field.reached(from)) throw NoPath("start cell is not reached");
  if (label && field.labels[from] != *label) throw NoPath("start cell carries another label");
  GridPath path;
  path.cell_size = field.cell_size;
  path.cells.push_back(from);
  auto const w = static_cast<CellIndex>(field.width);
  CellIndex cur = from;
  double steps = 0.0;
  while (field.values[cur] > 0.0) {
    int const x = static_cast<int>(cur % w);
    int const y = static_cast<int>(cur / w);
    double best_slope = 0.0;
    double best_len = 0.0;
    std::optional<CellIndex> best;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        int const nx = x + dx;
        int const ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= field.width || ny >= field.height) continue;
        CellIndex const n = static_cast<CellIndex>(ny) * w + static_cast<CellIndex>(nx);
        if (!field.passable[n] || !field.reached(n)) continue;
        if (label && field.labels[n] != *label) continue;
        bool const diagonal = dx != 0 && dy != 0;
        if (diagonal &&
            !detail::diagonal_open(field.passable, field.width, field.height, x, y, dx, dy)) {
          continue;
        }
        double const drop = field.values[cur] - field.values[n];
        if (drop <= 0.0) continue;
        double const len = diagonal ? kSqrt2 : 1.0;
        double const slope = drop / len;
        if (!best || slope > best_slope || (slope == best_slope && n < *best)) {
          best = n;
          best_slope = slope;
          best_len = len;
        }
      }
    }
    if (!best) throw NoPath("descent stalled before reaching a source");
    cur = *best;
    steps += best_len;
    path.cells.push_back(cur);
  }
  std::reverse(path.cells.begin(), path.cells.end());
  path.length = steps * field.cell_size;
  return path;
}

/// Travel time of `path` at `speed` cells per second.
inline double path_time(GridPath const& path, double speed) {
  if (!(speed > 0.0)) throw InvalidInput("speed must be positive");
  return path.length / (speed * path.cell_size);
}

/// Metric length of an 8-connected cell sequence.
inline double cell_sequence_length(OccupancyGrid const& grid, std::span<CellIndex const> cells) {
  double len = 0.0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    bool const diagonal =
        grid.x_of(cells[i]) != grid.x_of(cells[i - 1]) && grid.y_of(cells[i]) != grid.y_of(cells[i - 1]);
    len += diagonal ? kSqrt2 : 1.0;
  }
  return len * grid.cell_size();
}

/// Free cells reachable from the operation center; everything else becomes an obstacle.
inline OccupancyGrid seal_unreachable(OccupancyGrid const& grid) {
  auto const field = solve_eikonal(grid, grid.oc_cell());
  std::vector<bool> keep(grid.size());
  for (CellIndex c = 0; c < grid.size(); ++c) keep[c] = grid.is_free(c) && field.reached(c);
  return grid.restricted(keep, grid.oc_cell());
}

}  // namespace gatherplan
