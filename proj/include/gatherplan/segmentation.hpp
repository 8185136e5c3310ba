#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string_view>
#include <vector>

#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"

namespace gatherplan {

enum class PartitionMethod { kBap = 0, kPap = 1, kRap = 2 };

inline constexpr PartitionMethod kAllMethods[] = {PartitionMethod::kBap, PartitionMethod::kPap,
                                                  PartitionMethod::kRap};

inline std::string_view to_string(PartitionMethod m) {
  switch (m) {
    case PartitionMethod::kBap: return "BAP";
    case PartitionMethod::kPap: return "PAP";
    case PartitionMethod::kRap: return "RAP";
  }
  return "?";
}

/// Worker segments: one label per free cell, a centroid and an area per segment.
struct Partition {
  std::vector<std::int32_t> labels;  // -1 on obstacles
  std::vector<CellIndex> centroids;
  std::vector<std::size_t> areas;  // free-cell counts
  PartitionMethod method = PartitionMethod::kPap;
  /// Iterations performed by the centroid balancing loop (1 for BAP).
  std::size_t iterations = 1;

  std::size_t segment_count() const { return centroids.size(); }
  std::size_t total_area() const { return std::accumulate(areas.begin(), areas.end(), std::size_t{0}); }
  std::int32_t segment_of(CellIndex c) const { return labels[c]; }
};

struct IterativePartitionOptions {
  std::size_t max_iters = 500;
};

namespace detail {

inline std::vector<std::size_t> count_areas(std::vector<std::int32_t> const& labels, std::size_t n) {
  std::vector<std::size_t> areas(n, 0);
  for (auto l : labels) {
    if (l >= 0) ++areas[static_cast<std::size_t>(l)];
  }
  return areas;
}

/// Reassigns cells that are cut off from their segment's anchor cell to a 4-adjacent
/// segment, so that every segment is a single 4-connected component.
inline void repair_connectivity(OccupancyGrid const& grid, std::vector<std::int32_t>& labels,
                                std::vector<CellIndex> const& anchors) {
  std::vector<std::uint8_t> settled(grid.size(), 0);
  std::vector<CellIndex> frontier;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    CellIndex const a = anchors[i];
    if (labels[a] != static_cast<std::int32_t>(i) || settled[a]) continue;
    std::vector<CellIndex> stack{a};
    settled[a] = 1;
    while (!stack.empty()) {
      CellIndex const c = stack.back();
      stack.pop_back();
      frontier.push_back(c);
      for (auto [dx, dy] : kAxisOffsets) {
        int const nx = grid.x_of(c) + dx;
        int const ny = grid.y_of(c) + dy;
        if (!grid.in_bounds(nx, ny)) continue;
        CellIndex const n = grid.index(nx, ny);
        if (!settled[n] && labels[n] == labels[c]) {
          settled[n] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  // Orphans adopt the label of the settled region that reaches them first (breadth-first,
  // in index order for determinism).
  std::sort(frontier.begin(), frontier.end());
  std::size_t head = 0;
  while (head < frontier.size()) {
    CellIndex const c = frontier[head++];
    for (auto [dx, dy] : kAxisOffsets) {
      int const nx = grid.x_of(c) + dx;
      int const ny = grid.y_of(c) + dy;
      if (!grid.in_bounds(nx, ny)) continue;
      CellIndex const n = grid.index(nx, ny);
      if (!settled[n] && labels[n] >= 0) {
        labels[n] = labels[c];
        settled[n] = 1;
        frontier.push_back(n);
      }
    }
  }
}

/// Cell of the segment nearest to the segment's mean position.
inline std::vector<CellIndex> mean_centroids(OccupancyGrid const& grid,
                                             std::vector<std::int32_t> const& labels, std::size_t n) {
  std::vector<double> sx(n, 0.0);
  std::vector<double> sy(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (labels[c] < 0) continue;
    auto const l = static_cast<std::size_t>(labels[c]);
    sx[l] += grid.x_of(c);
    sy[l] += grid.y_of(c);
    ++count[l];
  }
  std::vector<CellIndex> best(n, 0);
  std::vector<double> best_d(n, kUnreached);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (labels[c] < 0) continue;
    auto const l = static_cast<std::size_t>(labels[c]);
    Point const mean{sx[l] / count[l], sy[l] / count[l]};
    double const d = distance(grid.center(c), mean);
    if (d < best_d[l]) {
      best_d[l] = d;
      best[l] = c;
    }
  }
  return best;
}

inline void check_centroids(OccupancyGrid const& grid, std::vector<CellIndex> const& centroids) {
  if (centroids.empty()) throw InvalidInput("at least one centroid is required");
  std::set<CellIndex> seen;
  for (auto c : centroids) {
    if (c >= grid.size() || !grid.is_free(c)) throw InvalidInput("centroid must be a free cell");
    if (!seen.insert(c).second) throw InvalidInput("duplicate centroids");
  }
}

}  // namespace detail

/// Nearest-centroid labels under `costmap` (the wavefront collision boundaries), with
/// connectivity repair. Deterministic in the centroid order.
inline std::vector<std::int32_t> partition_labels(OccupancyGrid const& grid,
                                                  std::vector<CellIndex> const& centroids,
                                                  SpeedField const& costmap) {
  auto labels = solve_eikonal(grid, centroids, costmap).labels;
  detail::repair_connectivity(grid, labels, centroids);
  return labels;
}

/// Centroid seeds at the maxima of the obstacle distance field. Each pick suppresses the
/// disk whose radius is the picked value; when every cell is suppressed the suppression
/// restarts (earlier picks stay excluded).
inline std::vector<CellIndex> init_centroids(OccupancyGrid const& grid,
                                             DistanceField const& obstacle_f, std::size_t n) {
  if (n == 0) throw InvalidInput("need at least one centroid");
  if (n > grid.free_count()) throw InvalidInput("more centroids than free cells");
  std::vector<std::uint8_t> picked(grid.size(), 0);
  std::vector<std::uint8_t> suppressed(grid.size(), 0);
  std::vector<CellIndex> out;
  out.reserve(n);
  auto best_candidate = [&]() -> std::optional<CellIndex> {
    std::optional<CellIndex> best;
    for (CellIndex c = 0; c < grid.size(); ++c) {
      if (!grid.is_free(c) || picked[c] || suppressed[c]) continue;
      if (!best || obstacle_f[c] > obstacle_f[*best]) best = c;
    }
    return best;
  };
  while (out.size() < n) {
    auto pick = best_candidate();
    if (!pick) {
      suppressed = picked;
      pick = best_candidate();
    }
    CellIndex const c = *pick;
    picked[c] = 1;
    suppressed[c] = 1;
    out.push_back(c);
    double const radius = obstacle_f[c] / grid.cell_size();
    int const r = static_cast<int>(std::ceil(radius));
    int const cx = grid.x_of(c);
    int const cy = grid.y_of(c);
    for (int y = std::max(0, cy - r); y <= std::min(grid.height() - 1, cy + r); ++y) {
      for (int x = std::max(0, cx - r); x <= std::min(grid.width() - 1, cx + r); ++x) {
        if (std::hypot(x - cx, y - cy) <= radius) suppressed[grid.index(x, y)] = 1;
      }
    }
  }
  return out;
}

/// Balances the centroids: partition by multi-source propagation under `costmap`, move each
/// centroid one cell toward the farthest cell of its segment, repeat until a configuration
/// recurs (or `max_iters`). The returned labels are the partition of the returned centroids.
inline Partition iterative_partition(std::vector<CellIndex> centroids, SpeedField const& costmap,
                                     OccupancyGrid const& grid,
                                     IterativePartitionOptions const& options = {}) {
  detail::check_centroids(grid, centroids);
  std::size_t const n = centroids.size();
  std::set<std::vector<CellIndex>> seen;
  Partition out;
  out.method = PartitionMethod::kPap;
  std::size_t iter = 0;
  while (true) {
    ++iter;
    auto field = solve_eikonal(grid, centroids, costmap);
    auto key = centroids;
    std::sort(key.begin(), key.end());
    seen.insert(key);

    // Farthest cell of each segment (ties to the lower cell index).
    std::vector<CellIndex> farthest(centroids);
    std::vector<double> far_value(n, -1.0);
    for (CellIndex c = 0; c < grid.size(); ++c) {
      auto const l = field.labels[c];
      if (l < 0) continue;
      if (field.values[c] > far_value[static_cast<std::size_t>(l)]) {
        far_value[static_cast<std::size_t>(l)] = field.values[c];
        farthest[static_cast<std::size_t>(l)] = c;
      }
    }

    auto next = centroids;
    std::set<CellIndex> occupied(centroids.begin(), centroids.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (farthest[i] == centroids[i]) continue;
      auto const path = extract_path(field, farthest[i], static_cast<std::int32_t>(i));
      if (path.cells.size() < 2) continue;
      CellIndex const step = path.cells[1];
      if (occupied.count(step)) continue;
      occupied.erase(next[i]);
      next[i] = step;
      occupied.insert(step);
    }

    auto next_key = next;
    std::sort(next_key.begin(), next_key.end());
    if (next == centroids || seen.count(next_key) || iter >= options.max_iters) {
      out.labels = std::move(field.labels);
      detail::repair_connectivity(grid, out.labels, centroids);
      break;
    }
    centroids = std::move(next);
  }
  out.centroids = centroids;
  out.areas = detail::count_areas(out.labels, n);
  out.iterations = iter;
  return out;
}

namespace detail {

inline void check_segment_count(OccupancyGrid const& grid, std::size_t n) {
  if (n == 0) throw InvalidInput("segment count must be at least 1");
  if (n > grid.free_count()) throw InvalidInput("more segments than free cells");
}

/// Splits segment `id` of `labels` in two with a 2-centroid balancing run confined to it.
inline void split_segment(OccupancyGrid const& grid, std::vector<std::int32_t>& labels,
                          std::int32_t id, std::int32_t new_id) {
  std::vector<bool> keep(grid.size(), false);
  CellIndex any = 0;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (labels[c] == id) {
      keep[c] = true;
      any = c;
    }
  }
  auto const sub = grid.restricted(keep, any);
  auto const seeds = init_centroids(sub, obstacle_field(sub, true), 2);
  auto const halves = iterative_partition(seeds, SpeedField::uniform(sub), sub);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (keep[c] && halves.labels[c] == 1) labels[c] = new_id;
  }
}

}  // namespace detail

/// Balanced Area Partition: grows regions of about A/n cells outward from the operation
/// center, each from the unclassified cell nearest to it; small regions merge into their
/// smallest neighbor, and missing segments are produced by halving the largest ones.
inline Partition segment_bap(OccupancyGrid const& grid, std::size_t n_segments) {
  detail::check_segment_count(grid, n_segments);
  auto const d_oc = solve_eikonal(grid, grid.oc_cell());
  std::vector<CellIndex> by_distance;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (d_oc.reached(c)) by_distance.push_back(c);
  }
  std::stable_sort(by_distance.begin(), by_distance.end(),
                   [&](CellIndex a, CellIndex b) { return d_oc[a] < d_oc[b]; });
  std::size_t const total = by_distance.size();
  double const a_opt = static_cast<double>(total) / static_cast<double>(n_segments);
  std::size_t const grow = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(a_opt)));

  std::vector<std::int32_t> labels(grid.size(), -1);
  std::vector<std::size_t> areas;
  std::vector<double> const ones(grid.size(), 1.0);
  std::size_t classified = 0;
  std::size_t cursor = 0;
  while (classified < total) {
    while (labels[by_distance[cursor]] != -1) ++cursor;
    CellIndex const origin = by_distance[cursor];

    std::vector<std::uint8_t> open(grid.size(), 0);
    for (CellIndex c = 0; c < grid.size(); ++c) open[c] = d_oc.reached(c) && labels[c] == -1;
    std::vector<CellIndex> region;
    MarchOptions options;
    options.max_accepted = grow;
    options.accepted_order = &region;
    CellIndex const src[1] = {origin};
    detail::march(grid.width(), grid.height(), grid.cell_size(), std::move(open), src, ones, options);

    std::set<std::int32_t> adjacent;
    for (auto c : region) {
      for (auto [dx, dy] : detail::kAxisOffsets) {
        int const nx = grid.x_of(c) + dx;
        int const ny = grid.y_of(c) + dy;
        if (grid.in_bounds(nx, ny) && labels[grid.index(nx, ny)] >= 0) {
          adjacent.insert(labels[grid.index(nx, ny)]);
        }
      }
    }
    bool const big = static_cast<double>(region.size()) >= a_opt / 2.0;
    std::int32_t target;
    if ((big || adjacent.empty()) && areas.size() < n_segments) {
      target = static_cast<std::int32_t>(areas.size());
      areas.push_back(0);
    } else {
      auto const& pool = adjacent;
      std::optional<std::int32_t> best;
      auto consider = [&](std::int32_t id) {
        if (!best || areas[id] < areas[*best]) best = id;
      };
      if (!pool.empty()) {
        for (auto id : pool) consider(id);
      } else {
        for (std::int32_t id = 0; id < static_cast<std::int32_t>(areas.size()); ++id) consider(id);
      }
      target = *best;
    }
    for (auto c : region) labels[c] = target;
    areas[static_cast<std::size_t>(target)] += region.size();
    classified += region.size();
  }

  while (areas.size() < n_segments) {
    auto const largest = static_cast<std::int32_t>(
        std::max_element(areas.begin(), areas.end()) - areas.begin());
    auto const new_id = static_cast<std::int32_t>(areas.size());
    detail::split_segment(grid, labels, largest, new_id);
    areas = detail::count_areas(labels, areas.size() + 1);
  }

  Partition out;
  out.method = PartitionMethod::kBap;
  out.labels = std::move(labels);
  out.areas = detail::count_areas(out.labels, n_segments);
  out.centroids = detail::mean_centroids(grid, out.labels, n_segments);
  out.iterations = 1;
  return out;
}

/// Polygonal Area Partition: obstacle-distance maxima as seeds, balanced with uniform fronts.
inline Partition segment_pap(OccupancyGrid const& grid, std::size_t n_segments,
                             IterativePartitionOptions const& options = {}) {
  detail::check_segment_count(grid, n_segments);
  auto const obstacles = obstacle_field(grid, true);
  auto const seeds = init_centroids(grid, obstacles, n_segments);
  auto out = iterative_partition(seeds, SpeedField::uniform(grid), grid, options);
  out.method = PartitionMethod::kPap;
  return out;
}

/// Room-like Area Partition: same balancing, with fronts moving at the normalized obstacle
/// distance so they sweep open rooms quickly and meet in doorways.
inline Partition segment_rap(OccupancyGrid const& grid, std::size_t n_segments,
                             IterativePartitionOptions const& options = {}) {
  detail::check_segment_count(grid, n_segments);
  auto const obstacles = obstacle_field(grid, true);
  auto const seeds = init_centroids(grid, obstacles, n_segments);
  auto out = iterative_partition(seeds, speed_from_field(grid, obstacles, true), grid, options);
  out.method = PartitionMethod::kRap;
  return out;
}

inline Partition segment(OccupancyGrid const& grid, PartitionMethod method, std::size_t n_segments) {
  switch (method) {
    case PartitionMethod::kBap: return segment_bap(grid, n_segments);
    case PartitionMethod::kPap: return segment_pap(grid, n_segments);
    case PartitionMethod::kRap: return segment_rap(grid, n_segments);
  }
  throw InvalidInput("unknown partition method");
}

}  // namespace gatherplan
