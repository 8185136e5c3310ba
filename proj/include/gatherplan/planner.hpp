#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "gatherplan/communication.hpp"
#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"
#include "gatherplan/routing.hpp"
#include "gatherplan/segmentation.hpp"

namespace gatherplan {

struct PlanConfig {
  std::size_t n_agents = 20;
  std::size_t n_goals = 100;
  double alpha = 0.5;
  double beta = 0.5;
  double worker_speed = 2.0;     // cells per second
  double collector_speed = 2.0;  // cells per second
  double gather_time = 5.0;      // seconds per goal
  double transmit_time = 1.0;    // seconds per package
  double d_com = 10.0;           // cells
  double t_mission = 1000.0;     // seconds
  std::optional<std::size_t> max_collectors;  // default n_agents / 2
  /// When set, only this collector count is evaluated.
  std::optional<std::size_t> fixed_collectors;
  std::vector<PartitionMethod> methods{kAllMethods[0], kAllMethods[1], kAllMethods[2]};

  std::size_t collector_limit() const { return max_collectors.value_or(n_agents / 2); }

  std::vector<std::size_t> collector_counts() const {
    if (fixed_collectors) return {*fixed_collectors};
    std::vector<std::size_t> out(collector_limit() + 1);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }

  void validate() const {
    if (n_agents < 2) throw InvalidInput("at least two agents are required");
    if (n_goals < 1) throw InvalidInput("at least one goal is required");
    if (alpha < 0.0 || beta < 0.0 || std::abs(alpha + beta - 1.0) > 1e-9) {
      throw InvalidInput("alpha and beta must be non-negative and sum to 1");
    }
    if (!(worker_speed > 0.0) || !(collector_speed > 0.0)) throw InvalidInput("speeds must be positive");
    if (gather_time < 0.0 || transmit_time < 0.0) throw InvalidInput("durations must be non-negative");
    if (!(d_com >= 1.0)) throw InvalidInput("communication range must be at least one cell");
    if (t_mission < 0.0) throw InvalidInput("mission time must be non-negative");
    if (collector_limit() >= n_agents) throw InvalidInput("collectors must leave at least one worker");
    if (fixed_collectors && *fixed_collectors >= n_agents) {
      throw InvalidInput("collectors must leave at least one worker");
    }
    if (methods.empty()) throw InvalidInput("at least one partition method is required");
  }
};

/// Out-and-back collector loop between the operation center and its far end.
struct CollectorRoute {
  GridPath outbound;  // operation center -> far end
  double cycle_time = 0.0;
  std::vector<std::size_t> assigned_workers;

  CellIndex far_end() const { return outbound.back(); }
  /// Cells of the full loop: out to the far end and back to the operation center.
  std::vector<CellIndex> loop_cells() const {
    std::vector<CellIndex> cells = outbound.cells;
    cells.insert(cells.end(), outbound.cells.rbegin() + 1, outbound.cells.rend());
    return cells;
  }
};

inline double loop_time(GridPath const& outbound, double speed) { return 2.0 * path_time(outbound, speed); }

inline CollectorRoute make_route(GridPath outbound, double speed) {
  CollectorRoute route;
  route.cycle_time = loop_time(outbound, speed);
  route.outbound = std::move(outbound);
  return route;
}

/// Pseudo-goals of one segment and the travel times among them.
struct SegmentEstimate {
  std::size_t goals = 0;  // expected goals per batch in this segment
  CellIndex centroid = 0;
  std::vector<CellIndex> pseudo_goals;
  std::vector<std::vector<double>> goal_times;  // seconds, symmetric
  std::vector<double> centroid_times;           // centroid -> pseudo-goal, seconds
  double workload = 0.0;                        // centroid tour with gathering, no delivery leg
  std::size_t fmm_calls = 0;
};

struct WorkerPlan {
  std::size_t segment = 0;
  std::optional<std::size_t> collector;  // empty: uploads at the operation center
  std::size_t goals_per_cycle = 0;
  double cycle_time = 0.0;  // seconds per delivery cycle
  double direct_cycle_time = 0.0;
  double load_cycle_time = 0.0;  // full-load cycle through the collector far end, when paired
  double workload = 0.0;
  double latency = 0.0;  // expected request-to-delivery time of a goal in this segment
};

struct PlanTelemetry {
  std::size_t segmentation_iterations = 0;
  std::size_t association_iterations = 0;
  std::size_t contraction_steps = 0;
  std::size_t fmm_segmentation = 0;
  std::size_t fmm_association = 0;
  std::size_t fmm_estimation = 0;

  std::size_t fmm_total() const { return fmm_segmentation + fmm_association + fmm_estimation; }
};

struct PlanCandidate {
  PartitionMethod method = PartitionMethod::kBap;
  std::size_t n_collectors = 0;
  std::size_t n_workers = 0;
  Partition partition;
  std::vector<CollectorRoute> collectors;
  std::vector<WorkerPlan> workers;
  double est_refresh = 0.0;  // mean cycle over collectors and direct uploaders, seconds
  /// Goals delivered over the mission with M goals always outstanding (scored by utility).
  std::size_t est_delivered = 0;
  /// Sum of per-cycle goals times cycles per mission, as if every cycle started fully loaded.
  std::size_t est_delivered_full_load = 0;
  double utility = 0.0;
  bool association_empty = false;
  PlanTelemetry telemetry;

  std::size_t active_collectors() const { return collectors.size(); }
};

struct MissionPlan {
  OccupancyGrid grid;  // the map the plan was made for, unreachable pockets sealed
  PlanConfig config;
  std::vector<PlanCandidate> candidates;
  std::size_t winner = 0;

  PlanCandidate const& best() const { return candidates[winner]; }
};

/// Expected goals per segment: round-half-up of the area share, then adjusted one goal at
/// a time on the largest segments so the counts sum to `total_goals`.
inline std::vector<std::size_t> allocate_goals(Partition const& partition, std::size_t total_goals) {
  std::size_t const n = partition.segment_count();
  double const area = static_cast<double>(partition.total_area());
  std::vector<std::size_t> out(n);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::size_t>(std::floor(total_goals * partition.areas[i] / area + 0.5));
    sum += out[i];
  }
  std::vector<std::size_t> by_area(n);
  std::iota(by_area.begin(), by_area.end(), std::size_t{0});
  std::stable_sort(by_area.begin(), by_area.end(),
                   [&](std::size_t a, std::size_t b) { return partition.areas[a] > partition.areas[b]; });
  std::size_t k = 0;
  while (sum < total_goals) {
    ++out[by_area[k++ % n]];
    ++sum;
  }
  while (sum > total_goals) {
    std::size_t const i = by_area[k++ % n];
    if (out[i] > 0) {
      --out[i];
      --sum;
    }
  }
  return out;
}

namespace detail {

/// Travel times in seconds from every node to every node, solved on a window around the
/// nodes (falling back to the whole grid when the window disconnects them).
inline std::vector<std::vector<double>> node_times(OccupancyGrid const& grid, std::vector<CellIndex> const& nodes,
                                                   double speed, std::size_t& fmm_calls) {
  std::size_t const n = nodes.size();
  std::vector<std::vector<double>> one_way(n, std::vector<double>(n, kUnreached));
  int x0 = grid.width();
  int y0 = grid.height();
  int x1 = 0;
  int y1 = 0;
  for (auto c : nodes) {
    x0 = std::min(x0, grid.x_of(c));
    y0 = std::min(y0, grid.y_of(c));
    x1 = std::max(x1, grid.x_of(c));
    y1 = std::max(y1, grid.y_of(c));
  }
  int const margin = 8;
  auto const window = make_window(grid, x0 - margin, y0 - margin, x1 + margin, y1 + margin,
                                  [](CellIndex) { return true; });
  std::vector<CellIndex> local;
  for (auto c : nodes) local.push_back(window.to_local(c));
  double const scale = 1.0 / (speed * grid.cell_size());
  bool connected = true;
  for (std::size_t i = 0; i < n && connected; ++i) {
    MarchOptions options;
    options.targets = local;
    CellIndex const src[1] = {local[i]};
    auto const field = solve_eikonal(window.grid, src, options);
    ++fmm_calls;
    for (std::size_t j = 0; j < n; ++j) {
      one_way[i][j] = field[local[j]] * scale;
      if (!std::isfinite(one_way[i][j])) connected = false;
    }
  }
  if (!connected) {
    for (std::size_t i = 0; i < n; ++i) {
      MarchOptions options;
      options.targets = nodes;
      CellIndex const src[1] = {nodes[i]};
      auto const field = solve_eikonal(grid, src, options);
      ++fmm_calls;
      for (std::size_t j = 0; j < n; ++j) one_way[i][j] = field[nodes[j]] * scale;
    }
  }
  std::vector<std::vector<double>> times(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) times[i][j] = 0.5 * (one_way[i][j] + one_way[j][i]);
    }
  }
  return times;
}

}  // namespace detail

/// Places the segment's expected goals as balanced centroids inside it and estimates the
/// tour from the segment centroid through them (nearest neighbor + 2-opt, gathering included).
inline SegmentEstimate estimate_segment(OccupancyGrid const& grid, Partition const& partition, std::size_t segment,
                                        std::size_t goals, PlanConfig const& config) {
  SegmentEstimate est;
  est.goals = goals;
  est.centroid = partition.centroids[segment];
  std::size_t const k = std::min(goals, partition.areas[segment]);
  if (k == 0) return est;

  auto const id = static_cast<std::int32_t>(segment);
  int x0 = grid.width();
  int y0 = grid.height();
  int x1 = 0;
  int y1 = 0;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (partition.labels[c] != id) continue;
    x0 = std::min(x0, grid.x_of(c));
    y0 = std::min(y0, grid.y_of(c));
    x1 = std::max(x1, grid.x_of(c));
    y1 = std::max(y1, grid.y_of(c));
  }
  auto const window =
      make_window(grid, x0, y0, x1, y1, [&](CellIndex c) { return partition.labels[c] == id; });
  auto const seeds = init_centroids(window.grid, obstacle_field(window.grid), k);
  auto const placed = iterative_partition(seeds, SpeedField::uniform(window.grid), window.grid);
  est.fmm_calls += 1 + placed.iterations;
  for (auto c : placed.centroids) est.pseudo_goals.push_back(window.to_parent(c));

  std::vector<CellIndex> nodes{est.centroid};
  nodes.insert(nodes.end(), est.pseudo_goals.begin(), est.pseudo_goals.end());
  auto const times = detail::node_times(grid, nodes, config.worker_speed, est.fmm_calls);
  est.goal_times.assign(k, std::vector<double>(k, 0.0));
  est.centroid_times.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    est.centroid_times[i] = times[0][i + 1];
    for (std::size_t j = 0; j < k; ++j) est.goal_times[i][j] = times[i + 1][j + 1];
  }
  std::vector<std::vector<double>> matrix = times;
  TravelOracle const oracle(std::move(matrix), std::vector<double>(k + 1, 0.0), config.gather_time);
  est.workload = two_opt(nn_tour(oracle), oracle).total_time;
  return est;
}

/// Estimated working time in one segment (seconds).
inline double estimate_workload(OccupancyGrid const& grid, Partition const& partition, std::size_t segment,
                                std::size_t total_goals, PlanConfig const& config) {
  auto const goals = allocate_goals(partition, total_goals);
  return estimate_segment(grid, partition, segment, goals[segment], config).workload;
}

/// Oracle for a cycle that starts and ends at a hub (operation center region or a collector
/// far end); `hub_times[i]` is the travel time between the hub and pseudo-goal i.
inline TravelOracle hub_oracle(SegmentEstimate const& est, std::vector<double> const& hub_times,
                               double gather_time) {
  std::size_t const k = est.pseudo_goals.size();
  std::vector<std::vector<double>> times(k + 1, std::vector<double>(k + 1, 0.0));
  std::vector<double> sink(k + 1, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    times[0][i + 1] = times[i + 1][0] = hub_times[i];
    sink[i + 1] = hub_times[i];
    for (std::size_t j = 0; j < k; ++j) times[i + 1][j + 1] = est.goal_times[i][j];
  }
  return TravelOracle(std::move(times), std::move(sink), gather_time);
}

/// Full-load cycle through the hub: route every pseudo-goal, return, transmit all packages.
inline double hub_cycle(SegmentEstimate const& est, std::vector<double> const& hub_times, PlanConfig const& config) {
  if (est.pseudo_goals.empty()) return 0.0;
  auto const oracle = hub_oracle(est, hub_times, config.gather_time);
  return route(oracle).total_time + config.transmit_time * static_cast<double>(est.goals);
}

/// Segment adjacency graph. Segments holding or touching the operation center upload
/// directly and lose their edges.
struct SegmentGraph {
  std::vector<std::set<std::size_t>> adjacency;
  std::vector<bool> direct;
  std::size_t oc_segment = 0;

  std::size_t size() const { return adjacency.size(); }
  std::size_t degree(std::size_t s) const { return adjacency[s].size(); }
};

inline SegmentGraph build_segment_graph(OccupancyGrid const& grid, Partition const& partition) {
  std::size_t const n = partition.segment_count();
  SegmentGraph graph;
  graph.adjacency.resize(n);
  graph.direct.assign(n, false);
  auto const oc_label = partition.labels[grid.oc_cell()];
  if (oc_label < 0) throw InvalidInput("operation center lies outside every segment");
  graph.oc_segment = static_cast<std::size_t>(oc_label);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    auto const a = partition.labels[c];
    if (a < 0) continue;
    for (auto [dx, dy] : detail::kAxisOffsets) {
      int const nx = grid.x_of(c) + dx;
      int const ny = grid.y_of(c) + dy;
      if (!grid.in_bounds(nx, ny)) continue;
      auto const b = partition.labels[grid.index(nx, ny)];
      if (b >= 0 && b != a) {
        graph.adjacency[static_cast<std::size_t>(a)].insert(static_cast<std::size_t>(b));
      }
    }
  }
  graph.direct[graph.oc_segment] = true;
  for (auto s : graph.adjacency[graph.oc_segment]) graph.direct[s] = true;
  for (std::size_t s = 0; s < n; ++s) {
    if (!graph.direct[s]) continue;
    for (auto t : graph.adjacency[s]) graph.adjacency[t].erase(s);
    graph.adjacency[s].clear();
  }
  return graph;
}

struct Association {
  std::vector<CellIndex> far_ends;                      // one per collector
  std::vector<std::optional<std::size_t>> collector_of;  // per segment
  std::size_t iterations = 0;
  std::size_t fmm_calls = 0;
  bool empty = false;  // every segment uploads directly
};

/// Seeds collectors at the best-connected non-direct segments, balances them with fronts
/// that slow down at segment frontiers, and groups each segment with the collector whose
/// region holds its centroid. Collectors left without segments are dropped.
inline Association associate_collectors(OccupancyGrid const& grid, Partition const& partition,
                                        SegmentGraph const& graph, std::size_t n_collectors) {
  if (n_collectors == 0) throw InvalidInput("association needs at least one collector");
  std::size_t const n = partition.segment_count();
  Association out;
  out.collector_of.assign(n, std::nullopt);
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s < n; ++s) {
    if (!graph.direct[s]) candidates.push_back(s);
  }
  if (candidates.empty()) {
    out.empty = true;
    return out;
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    if (graph.degree(a) != graph.degree(b)) return graph.degree(a) > graph.degree(b);
    return partition.areas[a] > partition.areas[b];
  });
  candidates.resize(std::min(candidates.size(), n_collectors));
  std::vector<CellIndex> seeds;
  for (auto s : candidates) seeds.push_back(partition.centroids[s]);

  std::vector<bool> keep(grid.size(), false);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    auto const l = partition.labels[c];
    keep[c] = l >= 0 && !graph.direct[static_cast<std::size_t>(l)];
  }
  auto const region = grid.restricted(keep, seeds.front());
  std::vector<CellIndex> frontier;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (!keep[c]) continue;
    for (auto [dx, dy] : detail::kAxisOffsets) {
      int const nx = grid.x_of(c) + dx;
      int const ny = grid.y_of(c) + dy;
      if (!grid.in_bounds(nx, ny)) continue;
      auto const other = partition.labels[grid.index(nx, ny)];
      if (other >= 0 && other != partition.labels[c]) {
        frontier.push_back(c);
        break;
      }
    }
  }
  SpeedField speed = SpeedField::uniform(region);
  if (!frontier.empty()) {
    speed = speed_from_field(region, solve_eikonal(region, frontier), true);
    ++out.fmm_calls;
  }
  auto const balanced = iterative_partition(seeds, speed, region);
  out.iterations = balanced.iterations;
  out.fmm_calls += balanced.iterations;

  std::vector<std::optional<std::size_t>> raw(n);
  std::vector<bool> used(seeds.size(), false);
  for (std::size_t s = 0; s < n; ++s) {
    if (graph.direct[s]) continue;
    auto const l = balanced.labels[partition.centroids[s]];
    if (l < 0) continue;
    raw[s] = static_cast<std::size_t>(l);
    used[static_cast<std::size_t>(l)] = true;
  }
  std::vector<std::size_t> renumber(seeds.size(), 0);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!used[i]) continue;
    renumber[i] = out.far_ends.size();
    out.far_ends.push_back(balanced.centroids[i]);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (raw[s]) out.collector_of[s] = renumber[*raw[s]];
  }
  out.empty = out.far_ends.empty();
  return out;
}

/// Callbacks that tie a collector's contraction to the rest of the candidate.
struct ContractionModel {
  /// Full-load cycle times of the assigned workers if the far end were at the given cell.
  std::function<std::vector<double>(CellIndex)> worker_cycles;
  /// Candidate refresh estimate with this collector's loop taking the given time.
  std::function<double(double)> refresh;
  /// Candidate refresh estimate with this collector removed and its workers uploading directly.
  std::function<double()> refresh_without;
  /// Cells where a collector is pointless (the operation center and direct segments).
  std::function<bool(CellIndex)> in_direct_zone;
};

struct Contraction {
  CollectorRoute route;
  bool removed = false;
  std::size_t steps = 0;
};

/// Pulls the far end toward the operation center one path cell at a time. Stops when the
/// slowest assigned worker would no longer finish within the loop or the refresh estimate
/// stops decreasing. Reaching the direct zone removes the collector when that helps.
inline Contraction contract_collector_path(OccupancyGrid const& grid, CollectorRoute route, double collector_speed,
                                           ContractionModel const& model) {
  constexpr double kEps = 1e-9;
  Contraction out;
  double refresh = model.refresh(route.cycle_time);
  while (route.outbound.cells.size() > 1) {
    GridPath shorter = route.outbound;
    CellIndex const dropped = shorter.cells.back();
    shorter.cells.pop_back();
    CellIndex const next = shorter.back();
    std::array<CellIndex, 2> const step{next, dropped};
    shorter.length -= cell_sequence_length(grid, step);
    shorter.length = std::max(shorter.length, 0.0);
    double const t_c = loop_time(shorter, collector_speed);
    auto const cycles = model.worker_cycles(next);
    bool const fits = std::all_of(cycles.begin(), cycles.end(), [&](double c) { return c <= t_c + kEps; });
    if (!fits) break;
    if (model.in_direct_zone(next)) {
      if (model.refresh_without && model.refresh_without() < refresh - kEps) out.removed = true;
      break;
    }
    double const candidate = model.refresh(t_c);
    if (!(candidate < refresh - kEps)) break;
    refresh = candidate;
    route.outbound = std::move(shorter);
    route.cycle_time = t_c;
    ++out.steps;
  }
  out.route = std::move(route);
  return out;
}

/// Contraction with fixed worker cycle times and the loop time itself as the refresh estimate.
inline CollectorRoute contract_collector_path(OccupancyGrid const& grid, CollectorRoute route,
                                              std::vector<double> const& worker_times, double collector_speed) {
  ContractionModel model;
  model.worker_cycles = [&](CellIndex) { return worker_times; };
  model.refresh = [](double t_c) { return t_c; };
  model.in_direct_zone = [&](CellIndex c) { return c == grid.oc_cell(); };
  return contract_collector_path(grid, std::move(route), collector_speed, model).route;
}

/// Weighted score of every candidate: short refresh and many deliveries are both rewarded,
/// each relative to the best value in the table.
inline std::vector<double> utility(std::vector<double> const& refresh, std::vector<double> const& delivered,
                                   double alpha, double beta) {
  if (refresh.empty() || refresh.size() != delivered.size()) throw InvalidInput("utility needs matching lists");
  double const max_t = *std::max_element(refresh.begin(), refresh.end());
  double const max_m = *std::max_element(delivered.begin(), delivered.end());
  std::vector<double> out(refresh.size());
  for (std::size_t i = 0; i < refresh.size(); ++i) {
    double const t_term = max_t > 0.0 ? 1.0 - refresh[i] / max_t : 0.0;
    double const m_term = max_m > 0.0 ? delivered[i] / max_m : 0.0;
    out[i] = alpha * t_term + beta * m_term;
  }
  return out;
}

/// Index of the highest utility; ties go to fewer collectors, then to the earlier method.
inline std::size_t select_winner(std::vector<PlanCandidate> const& candidates) {
  constexpr double kTie = 1e-12;
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    auto const& a = candidates[i];
    auto const& b = candidates[best];
    if (a.utility > b.utility + kTie) {
      best = i;
    } else if (std::abs(a.utility - b.utility) <= kTie) {
      if (a.n_collectors != b.n_collectors) {
        if (a.n_collectors < b.n_collectors) best = i;
      } else if (static_cast<int>(a.method) < static_cast<int>(b.method)) {
        best = i;
      }
    }
  }
  return best;
}

/// Deliveries over the mission when the operation center keeps `n_goals` outstanding and
/// replaces each delivered goal with a uniformly placed one. By Little's law the delivery
/// rate is n_goals over the area-weighted mean latency; each segment gets its area share,
/// capped for paired workers by what fits in one collector loop.
inline std::size_t closed_system_deliveries(Partition const& partition, std::vector<WorkerPlan> const& workers,
                                            PlanConfig const& config) {
  double const area = static_cast<double>(partition.total_area());
  double mean_latency = 0.0;
  for (auto const& w : workers) mean_latency += w.latency * static_cast<double>(partition.areas[w.segment]) / area;
  if (!(mean_latency > 0.0) || !std::isfinite(mean_latency)) return 0;
  double const rate = static_cast<double>(config.n_goals) / mean_latency;
  std::size_t total = 0;
  for (auto const& w : workers) {
    double share = rate * static_cast<double>(partition.areas[w.segment]) / area;
    if (w.collector) share = std::min(share, static_cast<double>(w.goals_per_cycle) / w.cycle_time);
    total += static_cast<std::size_t>(std::floor(share * config.t_mission + 1e-9));
  }
  return total;
}

namespace detail {

/// Shared per-map inputs for evaluating candidates.
struct PlanningContext {
  OccupancyGrid const& grid;
  PlanConfig const& config;
  DistanceField oc_field;
  DistanceField comm_field;  // from every cell linked to the operation center
  std::vector<bool> comm_zone;
};

inline double field_seconds(DistanceField const& field, CellIndex c, double speed, double cell_size) {
  return field[c] / (speed * cell_size);
}

inline std::vector<double> hub_times_from(DistanceField const& field, SegmentEstimate const& est, double speed,
                                          double cell_size) {
  std::vector<double> out;
  out.reserve(est.pseudo_goals.size());
  for (auto g : est.pseudo_goals) out.push_back(field_seconds(field, g, speed, cell_size));
  return out;
}

/// Mean over the delivery channels: collectors and workers uploading at the operation center.
inline double refresh_estimate(std::vector<CollectorRoute> const& collectors, std::vector<bool> const& removed,
                               std::vector<WorkerPlan> const& workers) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < collectors.size(); ++c) {
    if (removed[c]) continue;
    sum += collectors[c].cycle_time;
    ++n;
  }
  for (auto const& w : workers) {
    if (w.collector && !removed[*w.collector]) continue;
    if (w.goals_per_cycle == 0) continue;
    sum += w.direct_cycle_time;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline std::size_t deliveries_over(std::size_t goals, double cycle, double t_mission) {
  if (goals == 0 || !(cycle > 0.0) || !std::isfinite(cycle)) return 0;
  return static_cast<std::size_t>(std::floor(static_cast<double>(goals) * t_mission / cycle + 1e-9));
}

inline PlanCandidate evaluate_candidate(PlanningContext const& ctx, PartitionMethod method, std::size_t n_collectors) {
  auto const& grid = ctx.grid;
  auto const& config = ctx.config;
  double const cs = grid.cell_size();
  PlanCandidate cand;
  cand.method = method;
  cand.n_collectors = n_collectors;
  cand.n_workers = config.n_agents - n_collectors;
  cand.partition = segment(grid, method, cand.n_workers);
  auto& tel = cand.telemetry;
  tel.segmentation_iterations = cand.partition.iterations;
  tel.fmm_segmentation = cand.partition.iterations + (method == PartitionMethod::kRap ? 2 : 1);

  std::size_t const n_seg = cand.partition.segment_count();
  auto const goals = allocate_goals(cand.partition, config.n_goals);
  std::vector<SegmentEstimate> est(n_seg);
  cand.workers.resize(n_seg);
  for (std::size_t s = 0; s < n_seg; ++s) {
    est[s] = estimate_segment(grid, cand.partition, s, goals[s], config);
    tel.fmm_estimation += est[s].fmm_calls;
    auto& w = cand.workers[s];
    w.segment = s;
    w.goals_per_cycle = goals[s];
    w.workload = est[s].workload;
    // Segments expecting no goal still receive some; their cycle is priced for one.
    auto const single = goals[s] == 0 ? estimate_segment(grid, cand.partition, s, 1, config) : SegmentEstimate{};
    tel.fmm_estimation += single.fmm_calls;
    auto const& priced = goals[s] == 0 ? single : est[s];
    w.direct_cycle_time = hub_cycle(priced, hub_times_from(ctx.comm_field, priced, config.worker_speed, cs), config);
    w.cycle_time = w.direct_cycle_time;
  }

  std::vector<bool> removed;
  if (n_collectors > 0) {
    auto const graph = build_segment_graph(grid, cand.partition);
    auto const assoc = associate_collectors(grid, cand.partition, graph, n_collectors);
    tel.association_iterations = assoc.iterations;
    tel.fmm_association = assoc.fmm_calls;
    cand.association_empty = assoc.empty;

    auto in_direct_zone = [&](CellIndex c) {
      auto const l = cand.partition.labels[c];
      return c == grid.oc_cell() || (l >= 0 && graph.direct[static_cast<std::size_t>(l)]);
    };

    // Fields from each paired worker's pseudo-goals, evaluated at candidate far ends.
    std::vector<std::vector<DistanceField>> goal_fields(n_seg);
    auto cycle_at = [&](std::size_t s, CellIndex far_end) {
      std::vector<double> hub(est[s].pseudo_goals.size());
      for (std::size_t i = 0; i < hub.size(); ++i) {
        hub[i] = field_seconds(goal_fields[s][i], far_end, config.worker_speed, cs);
      }
      return hub_cycle(est[s], hub, config);
    };

    for (std::size_t k = 0; k < assoc.far_ends.size(); ++k) {
      auto outbound = extract_path(ctx.oc_field, assoc.far_ends[k]);
      cand.collectors.push_back(make_route(std::move(outbound), config.collector_speed));
    }
    removed.assign(cand.collectors.size(), false);
    for (std::size_t k = 0; k < cand.collectors.size(); ++k) {
      auto& route = cand.collectors[k];
      std::vector<std::size_t> members;
      for (std::size_t s = 0; s < n_seg; ++s) {
        if (assoc.collector_of[s] != k || goals[s] == 0) continue;
        goal_fields[s].clear();
        for (auto g : est[s].pseudo_goals) {
          MarchOptions options;
          options.targets = route.outbound.cells;
          CellIndex const src[1] = {g};
          goal_fields[s].push_back(solve_eikonal(grid, src, options));
          ++tel.fmm_estimation;
        }
        // Workers that cannot finish a full load within the uncontracted loop upload directly.
        if (cycle_at(s, route.far_end()) <= route.cycle_time + 1e-9) members.push_back(s);
      }
      if (members.empty()) {
        removed[k] = true;
        continue;
      }
      route.assigned_workers = members;
      for (auto s : members) cand.workers[s].collector = k;

      ContractionModel model;
      model.worker_cycles = [&](CellIndex far_end) {
        std::vector<double> out;
        for (auto s : members) out.push_back(cycle_at(s, far_end));
        return out;
      };
      model.refresh = [&](double t_c) {
        double const saved = route.cycle_time;
        route.cycle_time = t_c;
        double const r = refresh_estimate(cand.collectors, removed, cand.workers);
        route.cycle_time = saved;
        return r;
      };
      model.refresh_without = [&] {
        removed[k] = true;
        double const r = refresh_estimate(cand.collectors, removed, cand.workers);
        removed[k] = false;
        return r;
      };
      model.in_direct_zone = in_direct_zone;
      auto contracted = contract_collector_path(grid, route, config.collector_speed, model);
      tel.contraction_steps += contracted.steps;
      route = std::move(contracted.route);
      if (contracted.removed) removed[k] = true;
    }

    // Drop removed collectors and renumber the pairing.
    std::vector<CollectorRoute> kept;
    std::vector<std::optional<std::size_t>> renumber(cand.collectors.size());
    for (std::size_t k = 0; k < cand.collectors.size(); ++k) {
      if (removed[k]) continue;
      renumber[k] = kept.size();
      kept.push_back(std::move(cand.collectors[k]));
    }
    cand.collectors = std::move(kept);
    removed.assign(cand.collectors.size(), false);
    for (auto& w : cand.workers) {
      if (w.collector) w.collector = renumber[*w.collector];
    }
    for (auto const& route : cand.collectors) {
      for (auto s : route.assigned_workers) {
        auto& w = cand.workers[s];
        std::vector<double> hub(est[s].pseudo_goals.size());
        for (std::size_t i = 0; i < hub.size(); ++i) {
          hub[i] = field_seconds(goal_fields[s][i], route.far_end(), config.worker_speed, cs);
        }
        auto const oracle = hub_oracle(est[s], hub, config.gather_time);
        auto const accepted = tour_with_window(oracle, route.cycle_time, config.transmit_time);
        w.goals_per_cycle = accepted.visited_count();
        w.cycle_time = route.cycle_time;
        w.load_cycle_time = hub_cycle(est[s], hub, config);
      }
    }
  }
  if (removed.empty()) removed.assign(cand.collectors.size(), false);

  cand.est_refresh = refresh_estimate(cand.collectors, removed, cand.workers);
  for (auto& w : cand.workers) {
    double const cycle = w.collector ? w.cycle_time : w.direct_cycle_time;
    cand.est_delivered_full_load += deliveries_over(w.goals_per_cycle, cycle, config.t_mission);
    // A new goal waits half a cycle for its worker to start, then rides one cycle; paired
    // goals also ride the collector back from the far end.
    w.latency = w.collector ? 2.0 * w.cycle_time : 1.5 * w.direct_cycle_time;
  }
  cand.est_delivered = closed_system_deliveries(cand.partition, cand.workers, config);
  return cand;
}

}  // namespace detail

/// Evaluates every (method, collector count) candidate and keeps the highest utility.
inline MissionPlan plan_mission(OccupancyGrid const& input, PlanConfig const& config) {
  config.validate();
  MissionPlan plan{seal_unreachable(input), config, {}, 0};
  auto const& grid = plan.grid;
  auto const region = comm_region(grid, grid.oc_cell(), config.d_com);
  detail::PlanningContext ctx{grid, config, solve_eikonal(grid, grid.oc_cell()), solve_eikonal(grid, region), {}};
  ctx.comm_zone.assign(grid.size(), false);
  for (auto c : region) ctx.comm_zone[c] = true;

  for (auto method : config.methods) {
    for (auto n_c : config.collector_counts()) {
      plan.candidates.push_back(detail::evaluate_candidate(ctx, method, n_c));
    }
  }
  std::vector<double> refresh;
  std::vector<double> delivered;
  for (auto const& c : plan.candidates) {
    refresh.push_back(c.est_refresh);
    delivered.push_back(static_cast<double>(c.est_delivered));
  }
  auto const scores = utility(refresh, delivered, config.alpha, config.beta);
  for (std::size_t i = 0; i < scores.size(); ++i) plan.candidates[i].utility = scores[i];
  plan.winner = select_winner(plan.candidates);
  return plan;
}

}  // namespace gatherplan
