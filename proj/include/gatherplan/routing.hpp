#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"

namespace gatherplan {

/// Travel times between a start, a set of goals and a delivery point. Node 0 is the start,
/// node i + 1 is goal i. Unreachable pairs are +inf.
class TravelOracle {
 public:
  /// `times` is a square matrix over nodes; `sink_times[node]` is the time from the node to
  /// the delivery point (all zeros when there is none).
  TravelOracle(std::vector<std::vector<double>> times, std::vector<double> sink_times, double gather_time)
      : times_(std::move(times)), sink_times_(std::move(sink_times)), gather_time_(gather_time) {
    if (times_.empty()) throw InvalidInput("oracle needs at least the start node");
    for (auto const& row : times_) {
      if (row.size() != times_.size()) throw InvalidInput("oracle time matrix must be square");
    }
    if (sink_times_.size() != times_.size()) throw InvalidInput("one sink time per node required");
    if (gather_time_ < 0.0) throw InvalidInput("gather time must be non-negative");
  }

  std::size_t goal_count() const { return times_.size() - 1; }
  std::size_t node_count() const { return times_.size(); }
  static constexpr std::size_t kStart = 0;
  static std::size_t node_of(std::size_t goal) { return goal + 1; }

  double travel(std::size_t from_node, std::size_t to_node) const { return times_[from_node][to_node]; }
  double to_sink(std::size_t node) const { return sink_times_[node]; }
  double gather_time() const { return gather_time_; }

 private:
  std::vector<std::vector<double>> times_;
  std::vector<double> sink_times_;
  double gather_time_;
};

/// Field-based oracle: one eikonal solve per start/goal (plus `sink_field`'s), times in
/// seconds at `speed` cells per second, pairwise times averaged over both directions.
inline TravelOracle build_oracle(OccupancyGrid const& grid, CellIndex start, std::span<CellIndex const> goals,
                                 DistanceField const* sink_field, double speed, double gather_time) {
  if (start >= grid.size() || !grid.is_free(start)) throw InvalidInput("oracle start must be a free cell");
  if (!(speed > 0.0)) throw InvalidInput("speed must be positive");
  for (auto g : goals) {
    if (g >= grid.size() || !grid.is_free(g)) throw InvalidInput("oracle goal must be a free cell");
  }
  std::vector<CellIndex> nodes{start};
  nodes.insert(nodes.end(), goals.begin(), goals.end());
  std::size_t const n = nodes.size();
  double const scale = 1.0 / (speed * grid.cell_size());
  std::vector<std::vector<double>> one_way(n, std::vector<double>(n, kUnreached));
  for (std::size_t i = 0; i < n; ++i) {
    auto const field = solve_eikonal(grid, nodes[i]);
    for (std::size_t j = 0; j < n; ++j) one_way[i][j] = field[nodes[j]] * scale;
  }
  std::vector<std::vector<double>> times(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) times[i][j] = 0.5 * (one_way[i][j] + one_way[j][i]);
    }
  }
  std::vector<double> sink(n, 0.0);
  if (sink_field) {
    for (std::size_t i = 0; i < n; ++i) sink[i] = (*sink_field)[nodes[i]] * scale;
  }
  return TravelOracle(std::move(times), std::move(sink), gather_time);
}

inline TravelOracle build_oracle(OccupancyGrid const& grid, CellIndex start, std::span<CellIndex const> goals,
                                 std::optional<CellIndex> sink, double speed, double gather_time) {
  if (sink) {
    auto const field = solve_eikonal(grid, *sink);
    return build_oracle(grid, start, goals, &field, speed, gather_time);
  }
  return build_oracle(grid, start, goals, nullptr, speed, gather_time);
}

struct Tour {
  std::vector<std::size_t> order;  // goal indices
  std::vector<double> visit_times;  // seconds at which each goal's gathering ends
  double total_time = 0.0;          // last gathering plus the leg to the sink
  std::size_t visited_count() const { return order.size(); }
};

/// Recomputes visit and total times of `order` from the oracle.
inline Tour evaluate_tour(TravelOracle const& oracle, std::vector<std::size_t> order) {
  Tour tour;
  tour.order = std::move(order);
  tour.visit_times.reserve(tour.order.size());
  double t = 0.0;
  std::size_t at = TravelOracle::kStart;
  for (auto g : tour.order) {
    std::size_t const node = TravelOracle::node_of(g);
    t += oracle.travel(at, node) + oracle.gather_time();
    tour.visit_times.push_back(t);
    at = node;
  }
  tour.total_time = t + oracle.to_sink(at);
  return tour;
}

/// Greedy nearest-unvisited order from the start; unreachable goals are left out.
inline Tour nn_tour(TravelOracle const& oracle) {
  std::size_t const n = oracle.goal_count();
  std::vector<bool> used(n, false);
  std::vector<std::size_t> order;
  std::size_t at = TravelOracle::kStart;
  while (true) {
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < n; ++g) {
      if (used[g]) continue;
      double const t = oracle.travel(at, TravelOracle::node_of(g));
      if (!std::isfinite(t)) continue;
      if (!best || t < oracle.travel(at, TravelOracle::node_of(*best))) best = g;
    }
    if (!best) break;
    used[*best] = true;
    order.push_back(*best);
    at = TravelOracle::node_of(*best);
  }
  return evaluate_tour(oracle, std::move(order));
}

/// Best-improvement 2-opt (symmetric travel times): reverses the sub-sequence with the largest saving until no
/// reversal shortens the tour (the sink leg counts as the closing edge).
inline Tour two_opt(Tour const& tour, TravelOracle const& oracle) {
  auto order = tour.order;
  std::size_t const k = order.size();
  auto node_at = [&](std::size_t pos) { return TravelOracle::node_of(order[pos]); };
  constexpr double kMinGain = 1e-9;
  while (k >= 2) {
    double best_gain = kMinGain;
    std::size_t best_i = 0;
    std::size_t best_j = 0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      std::size_t const before = i == 0 ? TravelOracle::kStart : node_at(i - 1);
      for (std::size_t j = i + 1; j < k; ++j) {
        double const old_in = oracle.travel(before, node_at(i));
        double const new_in = oracle.travel(before, node_at(j));
        double old_out;
        double new_out;
        if (j + 1 < k) {
          old_out = oracle.travel(node_at(j), node_at(j + 1));
          new_out = oracle.travel(node_at(i), node_at(j + 1));
        } else {
          old_out = oracle.to_sink(node_at(j));
          new_out = oracle.to_sink(node_at(i));
        }
        double const gain = (old_in + old_out) - (new_in + new_out);
        if (gain > best_gain) {
          best_gain = gain;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_gain <= kMinGain) break;
    std::reverse(order.begin() + static_cast<std::ptrdiff_t>(best_i),
                 order.begin() + static_cast<std::ptrdiff_t>(best_j) + 1);
  }
  return evaluate_tour(oracle, std::move(order));
}

inline constexpr std::size_t kBruteForceCap = 13;
inline constexpr std::size_t kBruteForceThreshold = 12;

namespace detail {

/// Subset dynamic program over visiting orders. `deadline`, when set, keeps only orders whose
/// every prefix satisfies visit + sink + per_pkg * packages <= deadline, and then prefers
/// more goals before less time. Without it, every goal is visited.
inline Tour subset_route(TravelOracle const& oracle, std::optional<double> deadline, double per_pkg) {
  std::size_t const n = oracle.goal_count();
  if (n > kBruteForceCap) throw InvalidInput("too many goals for exact routing");
  if (n == 0) return evaluate_tour(oracle, {});
  std::size_t const full = std::size_t{1} << n;
  std::vector<double> best(full * n, kUnreached);
  std::vector<std::int8_t> parent(full * n, -1);
  auto at = [&](std::size_t mask, std::size_t last) -> double& { return best[mask * n + last]; };
  auto feasible = [&](double visit, std::size_t last, std::size_t packages) {
    if (!deadline) return std::isfinite(visit);
    return *deadline - per_pkg * static_cast<double>(packages) >=
           visit + oracle.to_sink(TravelOracle::node_of(last));
  };
  for (std::size_t g = 0; g < n; ++g) {
    double const t = oracle.travel(TravelOracle::kStart, TravelOracle::node_of(g)) + oracle.gather_time();
    if (feasible(t, g, 1)) at(std::size_t{1} << g, g) = t;
  }
  for (std::size_t mask = 1; mask < full; ++mask) {
    auto const packages = static_cast<std::size_t>(std::popcount(mask)) + 1;
    for (std::size_t last = 0; last < n; ++last) {
      double const here = at(mask, last);
      if (!std::isfinite(here)) continue;
      for (std::size_t g = 0; g < n; ++g) {
        if (mask & (std::size_t{1} << g)) continue;
        double const t = here + (oracle.travel(TravelOracle::node_of(last), TravelOracle::node_of(g)) +
                                 oracle.gather_time());
        if (!feasible(t, g, packages)) continue;
        std::size_t const next = mask | (std::size_t{1} << g);
        if (t < at(next, g)) {
          at(next, g) = t;
          parent[next * n + g] = static_cast<std::int8_t>(last);
        }
      }
    }
  }
  std::optional<std::size_t> best_mask;
  std::size_t best_last = 0;
  double best_total = kUnreached;
  int best_count = -1;
  for (std::size_t mask = 1; mask < full; ++mask) {
    int const count = std::popcount(mask);
    if (!deadline && mask != full - 1) continue;
    for (std::size_t last = 0; last < n; ++last) {
      double const t = at(mask, last);
      if (!std::isfinite(t)) continue;
      double const total = t + oracle.to_sink(TravelOracle::node_of(last));
      if (count > best_count || (count == best_count && total < best_total)) {
        best_count = count;
        best_total = total;
        best_mask = mask;
        best_last = last;
      }
    }
  }
  if (!best_mask) {
    if (deadline) return evaluate_tour(oracle, {});
    // Some goal is unreachable: route the reachable ones exactly.
    std::vector<std::size_t> reachable;
    for (std::size_t g = 0; g < n; ++g) {
      if (std::isfinite(oracle.travel(TravelOracle::kStart, TravelOracle::node_of(g)))) reachable.push_back(g);
    }
    if (reachable.size() == n) return evaluate_tour(oracle, {});
    std::vector<std::vector<double>> times(reachable.size() + 1, std::vector<double>(reachable.size() + 1));
    std::vector<double> sink(reachable.size() + 1);
    std::vector<std::size_t> nodes{TravelOracle::kStart};
    for (auto g : reachable) nodes.push_back(TravelOracle::node_of(g));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      sink[i] = oracle.to_sink(nodes[i]);
      for (std::size_t j = 0; j < nodes.size(); ++j) times[i][j] = oracle.travel(nodes[i], nodes[j]);
    }
    auto const sub = subset_route(TravelOracle(std::move(times), std::move(sink), oracle.gather_time()),
                                  std::nullopt, per_pkg);
    std::vector<std::size_t> order;
    for (auto g : sub.order) order.push_back(reachable[g]);
    return evaluate_tour(oracle, std::move(order));
  }
  std::vector<std::size_t> order;
  std::size_t mask = *best_mask;
  std::size_t last = best_last;
  while (true) {
    order.push_back(last);
    auto const p = parent[mask * n + last];
    mask &= ~(std::size_t{1} << last);
    if (p < 0) break;
    last = static_cast<std::size_t>(p);
  }
  std::reverse(order.begin(), order.end());
  return evaluate_tour(oracle, std::move(order));
}

}  // namespace detail

/// Exact minimum-time order through all goals (start fixed, sink last). Refuses more than
/// kBruteForceCap goals.
inline Tour bf_tour(TravelOracle const& oracle) { return detail::subset_route(oracle, std::nullopt, 0.0); }

enum class Router { kBruteForce, kNearestTwoOpt };

/// Exact routing up to kBruteForceThreshold goals, nearest neighbor + 2-opt beyond.
inline Router select_router(std::size_t goal_count) {
  return goal_count <= kBruteForceThreshold ? Router::kBruteForce : Router::kNearestTwoOpt;
}

inline Tour route(TravelOracle const& oracle, Router router) {
  if (router == Router::kBruteForce) return bf_tour(oracle);
  return two_opt(nn_tour(oracle), oracle);
}

inline Tour route(TravelOracle const& oracle) { return route(oracle, select_router(oracle.goal_count())); }

/// True iff goal k of the tour (0-based) may be accepted: the worker still reaches the sink
/// with time to transmit its k + 1 packages before `t_c`.
inline bool window_allows(TravelOracle const& oracle, Tour const& tour, std::size_t k, double t_c,
                          double per_pkg) {
  double const tx = per_pkg * static_cast<double>(k + 1);
  return t_c - tx >= tour.visit_times[k] + oracle.to_sink(TravelOracle::node_of(tour.order[k]));
}

/// Largest route that lets the worker reach the sink and transmit everything before `t_c`.
/// The nearest-neighbor family truncates its base tour at the first goal that breaks the
/// deadline; the exact family picks the feasible order with the most goals, then least time.
inline Tour tour_with_window(TravelOracle const& oracle, Router base, double t_c, double per_pkg) {
  if (!(t_c > 0.0)) throw InvalidInput("cycle time must be positive");
  if (base == Router::kBruteForce) return detail::subset_route(oracle, t_c, per_pkg);
  auto const full = two_opt(nn_tour(oracle), oracle);
  std::size_t accepted = 0;
  while (accepted < full.order.size() && window_allows(oracle, full, accepted, t_c, per_pkg)) ++accepted;
  return evaluate_tour(oracle, std::vector<std::size_t>(full.order.begin(),
                                                        full.order.begin() + static_cast<std::ptrdiff_t>(accepted)));
}

inline Tour tour_with_window(TravelOracle const& oracle, double t_c, double per_pkg) {
  return tour_with_window(oracle, select_router(oracle.goal_count()), t_c, per_pkg);
}

}  // namespace gatherplan
