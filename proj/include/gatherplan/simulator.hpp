#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "gatherplan/communication.hpp"
#include "gatherplan/fmm.hpp"
#include "gatherplan/grid.hpp"
#include "gatherplan/planner.hpp"
#include "gatherplan/routing.hpp"

namespace gatherplan {

inline constexpr double kDefaultTimeStep = 0.1;

struct GoalRequest {
  std::size_t id = 0;
  CellIndex cell = 0;
  std::size_t worker = 0;  // segment that owns the cell
  std::size_t batch = 0;
  double t_requested = 0.0;
  std::optional<double> t_gathered;
  std::optional<double> t_delivered;
};

/// Free cells where goals may appear: everything but the operation center.
inline std::vector<CellIndex> spawn_cells(OccupancyGrid const& grid) {
  std::vector<CellIndex> out;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (grid.is_free(c) && c != grid.oc_cell()) out.push_back(c);
  }
  return out;
}

/// `m` distinct cells drawn uniformly from `cells` (Floyd's sampling), each owned by the
/// segment that contains it.
inline std::vector<GoalRequest> spawn_goal_batch(std::mt19937_64& rng, std::vector<CellIndex> const& cells,
                                                 Partition const& partition, std::size_t m, double now,
                                                 std::size_t first_id, std::size_t batch = 0) {
  if (m == 0) throw InvalidInput("goal batch must hold at least one goal");
  if (m > cells.size()) throw InvalidInput("more goals than free cells");
  std::vector<std::size_t> picked;
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = cells.size() - m; j < cells.size(); ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    std::size_t const t = pick(rng);
    std::size_t const chosen = seen.count(t) ? j : t;
    seen.insert(chosen);
    picked.push_back(chosen);
  }
  std::vector<GoalRequest> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    GoalRequest g;
    g.id = first_id + i;
    g.cell = cells[picked[i]];
    auto const label = partition.labels[g.cell];
    if (label < 0) throw InvalidInput("goal cell lies outside every segment");
    g.worker = static_cast<std::size_t>(label);
    g.batch = batch;
    g.t_requested = now;
    out.push_back(g);
  }
  return out;
}

inline std::vector<GoalRequest> spawn_goal_batch(std::mt19937_64& rng, OccupancyGrid const& grid,
                                                 Partition const& partition, std::size_t m, double now = 0.0) {
  return spawn_goal_batch(rng, spawn_cells(grid), partition, m, now, 0);
}

/// Nominal position of a collector running its out-and-back loop from t = 0, and the
/// phases of the loop during which each outbound cell is in range of it and linked to it.
class LoopSchedule {
 public:
  LoopSchedule(OccupancyGrid const& grid, CollectorRoute const& route, double speed, double d_com,
               double dt = kDefaultTimeStep)
      : speed_(speed), dt_(dt), outbound_(route.outbound.cells) {
    if (!(speed > 0.0) || !(dt > 0.0)) throw InvalidInput("schedule needs positive speed and step");
    if (outbound_.empty()) throw InvalidInput("collector route is empty");
    auto const loop = route.loop_cells();
    arcs_.push_back(0.0);
    points_.push_back(grid.center(loop.front()));
    for (std::size_t i = 1; i < loop.size(); ++i) {
      points_.push_back(grid.center(loop[i]));
      arcs_.push_back(arcs_.back() + distance(points_[i - 1], points_[i]));
    }
    length_ = arcs_.back();
    phases_ = length_ > 0.0 ? static_cast<std::size_t>(std::ceil(period() / dt_)) : 1;
    links_.assign(outbound_.size(), std::vector<std::uint8_t>(phases_, 0));
    for (std::size_t i = 0; i < outbound_.size(); ++i) {
      Point const p = grid.center(outbound_[i]);
      for (std::size_t k = 0; k < phases_; ++k) {
        Point const q = at_arc(arc_at(static_cast<double>(k) * dt_));
        if (distance(p, q) < d_com) links_[i][k] = comm_link(grid, p, q, d_com) ? kLinked : kInRange;
      }
    }
  }

  double length() const { return length_; }  // cells
  double period() const { return length_ / speed_; }
  double speed() const { return speed_; }
  double step() const { return dt_; }
  std::vector<CellIndex> const& outbound() const { return outbound_; }
  /// Loop arc of outbound cell i on the way out; the way back passes it at length() - arc.
  double outbound_arc(std::size_t i) const { return arcs_[i]; }
  double far_arc() const { return length_ / 2.0; }

  double arc_at(double t) const {
    if (length_ <= 0.0) return 0.0;
    return std::fmod(t * speed_, length_);
  }

  Point at_arc(double s) const {
    if (s <= 0.0 || points_.size() == 1) return points_.front();
    if (s >= length_) return points_.back();
    auto const it = std::upper_bound(arcs_.begin(), arcs_.end(), s);
    std::size_t const hi = static_cast<std::size_t>(it - arcs_.begin());
    std::size_t const lo = hi - 1;
    double const span = arcs_[hi] - arcs_[lo];
    double const f = span > 0.0 ? (s - arcs_[lo]) / span : 0.0;
    return {points_[lo].x + f * (points_[hi].x - points_[lo].x), points_[lo].y + f * (points_[hi].y - points_[lo].y)};
  }

  Point at_time(double t) const { return at_arc(arc_at(t)); }

  std::size_t phase_index(double t) const {
    if (length_ <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(std::fmod(t, period()) / dt_ + 1e-9)) % phases_;
  }

  /// Whether outbound cell i is linked to the nominal collector at time t (phase resolution dt).
  bool linked(std::size_t i, double t) const { return links_[i][phase_index(t)] == kLinked; }
  /// Whether the nominal collector is within range of outbound cell i, line of sight or not.
  bool in_range(std::size_t i, double t) const { return links_[i][phase_index(t)] != 0; }

  /// Next time at or after `now` when the nominal collector is at the far end.
  double next_far_time(double now) const {
    if (length_ <= 0.0) return now;
    double const target = far_arc() / speed_;
    double wait = std::fmod(target - std::fmod(now, period()) + period(), period());
    return now + wait;
  }

 private:
  static constexpr std::uint8_t kInRange = 1;
  static constexpr std::uint8_t kLinked = 2;

  double speed_;
  double dt_;
  std::vector<CellIndex> outbound_;
  std::vector<Point> points_;
  std::vector<double> arcs_;
  double length_ = 0.0;
  std::size_t phases_ = 1;
  std::vector<std::vector<std::uint8_t>> links_;
};

enum class SyncBehavior { kIntercept, kWait, kFollow };

inline std::string_view to_string(SyncBehavior b) {
  switch (b) {
    case SyncBehavior::kIntercept:
      return "intercept";
    case SyncBehavior::kWait:
      return "wait";
    case SyncBehavior::kFollow:
      return "follow";
  }
  return "?";
}

struct SyncPlan {
  SyncBehavior behavior = SyncBehavior::kIntercept;
  std::size_t path_index = 0;  // meeting cell as an index into the outbound path
  CellIndex cell = 0;
  double arrival = 0.0;  // when the worker reaches the meeting cell
  double start = 0.0;    // when transmission can begin
  double window = 0.0;   // predicted linked time during the collector's pass of the meeting cell
  double until = 0.0;    // last linked moment of that pass
  double follow_arc = 0.0;  // loop arc where the collector passes the meeting cell
  bool immediate = false;   // already linked where the worker stands
};

/// Classifies a meeting by how the transmission compares with the link window.
inline SyncBehavior classify_sync(double t_tx, double window) {
  if (t_tx < 0.5 * window) return SyncBehavior::kIntercept;
  if (t_tx <= window) return SyncBehavior::kWait;
  return SyncBehavior::kFollow;
}

/// Earliest meeting with a collector on its nominal schedule. `travel` holds the worker's
/// travel time in seconds to each outbound cell. A pass is a stretch of time with the
/// collector in range of the cell; obstacles may break line of sight inside it, so its
/// window is the linked time it contains. Returns nothing when no meeting fits in the
/// horizon (the worker keeps its data for a later cycle).
inline std::optional<SyncPlan> plan_sync(LoopSchedule const& schedule, std::vector<double> const& travel,
                                         double t_tx, double now, double horizon) {
  double const dt = schedule.step();
  std::size_t const samples = static_cast<std::size_t>(std::ceil(horizon / dt)) + 1;
  std::optional<SyncPlan> best;
  for (std::size_t i = 0; i < schedule.outbound().size(); ++i) {
    if (!std::isfinite(travel[i])) continue;
    double const arrival = now + travel[i];
    bool in_pass = false;
    bool any_link = false;
    double first_link = 0.0;
    double last_link = 0.0;
    std::size_t linked = 0;
    std::size_t linked_after_arrival = 0;
    for (std::size_t j = 0; j <= samples; ++j) {
      double const t = now + static_cast<double>(j) * dt;
      if (best && !in_pass && t > best->start) break;
      if (j < samples && schedule.in_range(i, t)) {
        if (!in_pass) {
          in_pass = true;
          any_link = false;
          linked = 0;
          linked_after_arrival = 0;
        }
        if (schedule.linked(i, t)) {
          if (!any_link) first_link = t;
          any_link = true;
          last_link = t;
          ++linked;
          if (t >= arrival) ++linked_after_arrival;
        }
        continue;
      }
      if (!in_pass) continue;
      in_pass = false;
      if (!any_link) continue;
      double const t_in = first_link;
      double const t_out = last_link + dt;
      double const window = static_cast<double>(linked) * dt;
      double start = 0.0;
      if (arrival <= t_in) {
        start = t_in;
      } else if (arrival < t_out && static_cast<double>(linked_after_arrival) * dt >= t_tx + dt) {
        start = arrival;
      } else {
        continue;
      }
      if (!best || start < best->start - 1e-9 ||
          (std::abs(start - best->start) <= 1e-9 && travel[i] < best->arrival - now - 1e-9)) {
        SyncPlan plan;
        plan.path_index = i;
        plan.cell = schedule.outbound()[i];
        plan.arrival = arrival;
        plan.start = start;
        plan.window = window;
        plan.until = t_out;
        plan.behavior = arrival <= t_in ? classify_sync(t_tx, window) : SyncBehavior::kIntercept;
        // Pick the pass (out or back) whose arc the collector reaches inside the window.
        double const out_arc = schedule.outbound_arc(i);
        double const back_arc = schedule.length() - out_arc;
        double const mid = schedule.arc_at(0.5 * (t_in + t_out));
        plan.follow_arc = std::abs(mid - out_arc) <= std::abs(mid - back_arc) ? out_arc : back_arc;
        best = plan;
      }
      break;
    }
  }
  return best;
}

/// Same, for a worker at `worker`: when it is already linked to the nominal collector and
/// stays linked long enough it transmits where it stands; otherwise travel times are solved
/// from its cell.
inline std::optional<SyncPlan> plan_sync(OccupancyGrid const& grid, LoopSchedule const& schedule, Point worker,
                                         double worker_speed, double t_tx, double now, double d_com) {
  auto const here = grid.cell_at(worker);
  if (!here) throw InvalidInput("worker is off the grid");
  double const dt = schedule.step();
  if (comm_link(grid, worker, schedule.at_time(now), d_com)) {
    double remaining = 0.0;
    double const limit = t_tx + schedule.period();
    while (remaining < limit && comm_link(grid, worker, schedule.at_time(now + remaining + dt), d_com)) {
      remaining += dt;
    }
    if (remaining >= t_tx + dt) {
      SyncPlan plan;
      plan.immediate = true;
      plan.cell = *here;
      plan.arrival = now;
      plan.start = now;
      plan.window = remaining;
      plan.until = now + remaining;
      plan.behavior = classify_sync(t_tx, remaining);
      auto const& out = schedule.outbound();
      auto const it = std::find(out.begin(), out.end(), *here);
      plan.path_index = it == out.end() ? out.size() : static_cast<std::size_t>(it - out.begin());
      if (plan.behavior == SyncBehavior::kFollow) plan.behavior = SyncBehavior::kWait;
      return plan;
    }
  }
  MarchOptions options;
  options.targets = schedule.outbound();
  CellIndex const src[1] = {*here};
  auto const field = solve_eikonal(grid, src, options);
  double const unit = worker_speed * grid.cell_size();
  std::vector<double> travel;
  for (auto c : schedule.outbound()) travel.push_back(field[c] / unit);
  double const max_travel = *std::max_element(travel.begin(), travel.end());
  double const horizon = (std::isfinite(max_travel) ? max_travel : 0.0) + 2.0 * schedule.period() + t_tx;
  // The walked path is an 8-connected descent, longer than the field value by up to the
  // octile factor; re-plan with the walked time whenever the chosen cell is underestimated.
  double const lead_in = distance(worker, grid.center(*here)) / worker_speed;
  for (std::size_t attempt = 0; attempt <= travel.size(); ++attempt) {
    auto plan = plan_sync(schedule, travel, t_tx, now, horizon);
    if (!plan) return plan;
    double const walked = lead_in + extract_path(field, plan->cell).length / unit;
    if (walked <= travel[plan->path_index] + 1e-9) return plan;
    travel[plan->path_index] = walked;
  }
  return std::nullopt;
}

enum class AgentRole { kWorker, kCollector };

enum class AgentPhase {
  kInit,
  kIdle,
  kTravel,
  kGather,
  kToUpload,
  kUpload,
  kToSync,
  kSync,
  kFallback,
  kLoop,
  kStopped,
};

inline std::string_view to_string(AgentPhase p) {
  switch (p) {
    case AgentPhase::kInit:
      return "init";
    case AgentPhase::kIdle:
      return "idle";
    case AgentPhase::kTravel:
      return "travel";
    case AgentPhase::kGather:
      return "gather";
    case AgentPhase::kToUpload:
      return "to_upload";
    case AgentPhase::kUpload:
      return "upload";
    case AgentPhase::kToSync:
      return "to_sync";
    case AgentPhase::kSync:
      return "sync";
    case AgentPhase::kFallback:
      return "fallback";
    case AgentPhase::kLoop:
      return "loop";
    case AgentPhase::kStopped:
      return "stopped";
  }
  return "?";
}

struct AgentState {
  std::size_t id = 0;
  AgentRole role = AgentRole::kWorker;
  Point position;
  std::vector<std::size_t> carried;  // goal ids
  AgentPhase phase = AgentPhase::kInit;
  double distance = 0.0;  // cells traveled
  bool active = true;
};

enum class TraceKind { kSpawn, kArrive, kGather, kRendezvousStart, kTransfer, kRendezvousEnd, kDelivery, kFallback };

inline std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::kSpawn:
      return "spawn";
    case TraceKind::kArrive:
      return "arrive";
    case TraceKind::kGather:
      return "gather";
    case TraceKind::kRendezvousStart:
      return "rendezvous_start";
    case TraceKind::kTransfer:
      return "transfer";
    case TraceKind::kRendezvousEnd:
      return "rendezvous_end";
    case TraceKind::kDelivery:
      return "delivery";
    case TraceKind::kFallback:
      return "fallback";
  }
  return "?";
}

struct TraceEvent {
  double time = 0.0;
  std::int64_t agent = -1;  // -1: operation center
  TraceKind kind = TraceKind::kSpawn;
  std::vector<std::size_t> goals;
  std::string note;

  bool operator==(TraceEvent const&) const = default;
};

struct MissionMetrics {
  /// Mean over delivery channels (collectors, and workers uploading at the operation center)
  /// of the interval between consecutive data-bearing deliveries.
  double mean_refresh = 0.0;
  std::vector<double> refresh_samples;  // one per channel with at least two deliveries
  /// Mean time from request to delivery over delivered goals.
  double mean_latency = 0.0;
  std::vector<double> latency_samples;
  std::size_t requested_total = 0;
  std::size_t delivered_total = 0;
  std::size_t goals_expired = 0;  // requested but not delivered when the mission ends
  std::vector<double> distance;   // cells traveled per agent
  std::size_t rendezvous = 0;
  std::array<std::size_t, 3> behaviors{};  // intercept, wait, follow counts
  std::size_t fallbacks = 0;

  bool operator==(MissionMetrics const&) const = default;
};

struct MissionResult {
  MissionMetrics metrics;
  std::vector<TraceEvent> trace;
};

struct CollectorFault {
  enum class Kind { kRemove, kDelay };
  Kind kind = Kind::kRemove;
  std::size_t collector = 0;
  double time = 0.0;
  double duration = 0.0;  // delay only
};

struct StepTransmission {
  std::size_t agent = 0;
  std::optional<std::size_t> collector;  // empty: to the operation center
};

struct StepView {
  double time = 0.0;
  double dt = 0.0;
  std::vector<AgentState> const& agents;
  std::vector<StepTransmission> const& transmissions;
  std::size_t requested = 0;
  std::size_t delivered = 0;
  std::size_t in_flight = 0;  // gathered, not yet delivered
  std::size_t pending = 0;    // requested, not yet gathered
};

struct SimOptions {
  double dt = kDefaultTimeStep;
  std::vector<CollectorFault> faults;
  /// Replaces the random first batch (tests).
  std::optional<std::vector<CellIndex>> initial_goals;
  bool record_trace = true;
  std::function<void(StepView const&)> observer;
};

namespace detail {

/// Shortest cell path from `from` to `to`, solved in a window around both when possible.
inline std::vector<CellIndex> path_between(OccupancyGrid const& grid, CellIndex from, CellIndex to) {
  if (from == to) return {from};
  int const margin = 8;
  int const x0 = std::min(grid.x_of(from), grid.x_of(to)) - margin;
  int const y0 = std::min(grid.y_of(from), grid.y_of(to)) - margin;
  int const x1 = std::max(grid.x_of(from), grid.x_of(to)) + margin;
  int const y1 = std::max(grid.y_of(from), grid.y_of(to)) + margin;
  auto const window = make_window(grid, x0, y0, x1, y1, [](CellIndex) { return true; });
  CellIndex const local_to = window.to_local(to);
  CellIndex const local_src[1] = {window.to_local(from)};
  MarchOptions options;
  CellIndex const local_target[1] = {local_to};
  options.targets = local_target;
  auto const field = solve_eikonal(window.grid, local_src, options);
  std::vector<CellIndex> cells;
  if (field.reached(local_to)) {
    for (auto c : extract_path(field, local_to).cells) cells.push_back(window.to_parent(c));
    return cells;
  }
  CellIndex const src[1] = {from};
  CellIndex const target[1] = {to};
  options.targets = target;
  return extract_path(solve_eikonal(grid, src, options), to).cells;
}

}  // namespace detail

/// Executes one plan candidate. Construction precomputes what every seeded run shares.
class MissionRunner {
 public:
  MissionRunner(OccupancyGrid const& grid, PlanCandidate const& candidate, PlanConfig const& config,
                double dt = kDefaultTimeStep)
      : grid_(grid), cand_(candidate), config_(config), dt_(dt) {
    if (candidate.partition.labels.size() != grid.size()) throw InvalidInput("plan was made for another grid");
    for (CellIndex c = 0; c < grid.size(); ++c) {
      if ((candidate.partition.labels[c] >= 0) != grid.is_free(c)) {
        throw InvalidInput("plan was made for another grid");
      }
    }
    if (!(dt > 0.0)) throw InvalidInput("time step must be positive");
    oc_field_ = solve_eikonal(grid, grid.oc_cell());
    auto const region = comm_region(grid, grid.oc_cell(), config.d_com);
    in_region_.assign(grid.size(), false);
    for (auto c : region) in_region_[c] = true;
    comm_field_ = solve_eikonal(grid, region);
    spawn_cells_ = spawn_cells(grid);
    for (auto const& route : candidate.collectors) {
      schedules_.emplace_back(grid, route, config.collector_speed, config.d_com, dt);
      far_fields_.push_back(solve_eikonal(grid, route.far_end()));
    }
  }

  MissionResult run(std::uint64_t seed, SimOptions const& options = {}) const {
    if (std::abs(options.dt - dt_) > 1e-12) throw InvalidInput("runner was built for another time step");
    Run r(*this, seed, options);
    return r.execute();
  }

 private:
  struct Run;

  OccupancyGrid const& grid_;
  PlanCandidate const& cand_;
  PlanConfig const& config_;
  double dt_;
  DistanceField oc_field_;
  DistanceField comm_field_;
  std::vector<bool> in_region_;
  std::vector<CellIndex> spawn_cells_;
  std::vector<LoopSchedule> schedules_;
  std::vector<DistanceField> far_fields_;

  enum class GoalState { kPending, kCarried, kOnCollector, kDelivered };
  enum class AfterMove { kNone, kStartCycle, kGather, kUpload, kSync, kDone };

  struct Worker {
    AgentState agent;
    std::size_t segment = 0;
    std::optional<std::size_t> collector;
    std::vector<Point> waypoints;
    std::size_t next_waypoint = 0;
    AfterMove after = AfterMove::kNone;
    std::deque<std::size_t> tour;
    std::optional<std::size_t> current_goal;
    double timer = 0.0;
    std::optional<SyncPlan> sync;
    double follow_arc = -1.0;
    double tx_progress = 0.0;
    std::optional<std::optional<std::size_t>> tx_target;  // empty: not transmitting
    double last_delivery = -1.0;
    std::vector<double> delivery_times;
  };

  struct Collector {
    AgentState agent;
    double arc = 0.0;
    double paused_until = -1.0;
    std::optional<double> retire_after;
    std::vector<double> upload_times;
  };

  struct Run {
    MissionRunner const& m;
    SimOptions const& options;
    std::mt19937_64 rng;
    std::vector<GoalRequest> goals;
    std::vector<GoalState> state;
    std::vector<std::vector<std::size_t>> pending;  // per worker, not yet in a tour
    std::vector<Worker> workers;
    std::vector<Collector> collectors;
    std::vector<CollectorFault> faults;
    std::vector<bool> fault_applied;
    MissionResult result;
    std::size_t batch = 0;
    std::size_t delivered = 0;
    std::size_t in_flight = 0;
    double now = 0.0;
    std::vector<StepTransmission> transmissions;

    Run(MissionRunner const& runner, std::uint64_t seed, SimOptions const& opts)
        : m(runner), options(opts), rng(seed), faults(opts.faults), fault_applied(opts.faults.size(), false) {}

    PlanConfig const& config() const { return m.config_; }
    OccupancyGrid const& grid() const { return m.grid_; }

    void trace(std::int64_t agent, TraceKind kind, std::vector<std::size_t> ids = {}, std::string note = {}) {
      if (!options.record_trace) return;
      result.trace.push_back({now, agent, kind, std::move(ids), std::move(note)});
    }

    void add_goals(std::vector<GoalRequest> batch_goals) {
      std::vector<std::size_t> ids;
      for (auto& g : batch_goals) {
        g.id = goals.size();
        ids.push_back(g.id);
        pending[g.worker].push_back(g.id);
        goals.push_back(g);
        state.push_back(GoalState::kPending);
      }
      trace(-1, TraceKind::kSpawn, std::move(ids));
      ++batch;
    }

    void spawn(std::size_t count) {
      if (count == 0) return;
      add_goals(spawn_goal_batch(rng, m.spawn_cells_, m.cand_.partition, count, now, goals.size(), batch));
    }

    void deliver(std::vector<std::size_t> const& ids, std::int64_t agent) {
      if (ids.empty()) return;
      for (auto id : ids) {
        goals[id].t_delivered = now;
        state[id] = GoalState::kDelivered;
        result.metrics.latency_samples.push_back(now - goals[id].t_requested);
      }
      delivered += ids.size();
      in_flight -= ids.size();
      trace(agent, TraceKind::kDelivery, ids);
      spawn(ids.size());
    }

    std::size_t worker_id(std::size_t w) const { return w; }
    std::size_t collector_id(std::size_t k) const { return workers.size() + k; }

    CellIndex cell_of(Point p) const {
      auto const c = grid().cell_at(p);
      return c ? *c : grid().oc_cell();
    }

    void set_motion(Worker& w, std::vector<CellIndex> const& cells, AfterMove after) {
      w.waypoints.clear();
      w.waypoints.push_back(w.agent.position);
      for (auto c : cells) {
        Point const p = grid().center(c);
        if (distance(p, w.waypoints.back()) > 1e-12) w.waypoints.push_back(p);
      }
      w.next_waypoint = 1;
      w.after = after;
    }

    bool motion_done(Worker const& w) const { return w.next_waypoint >= w.waypoints.size(); }

    void advance(Worker& w, double speed) {
      double budget = speed * m.dt_;
      while (budget > 1e-12 && !motion_done(w)) {
        Point const target = w.waypoints[w.next_waypoint];
        double const d = distance(w.agent.position, target);
        if (d <= budget) {
          w.agent.position = target;
          w.agent.distance += d;
          budget -= d;
          ++w.next_waypoint;
        } else {
          double const f = budget / d;
          w.agent.position = {w.agent.position.x + f * (target.x - w.agent.position.x),
                              w.agent.position.y + f * (target.y - w.agent.position.y)};
          w.agent.distance += budget;
          budget = 0.0;
        }
      }
    }

    bool linked_to_collector(Worker const& w, std::size_t k) const {
      auto const& c = collectors[k];
      return c.agent.active && comm_link(grid(), w.agent.position, c.agent.position, config().d_com);
    }

    bool linked_to_oc(Worker const& w) const {
      return comm_link(grid(), w.agent.position, grid().center(grid().oc_cell()), config().d_com);
    }

    /// One step of transmission toward `target`; returns true when nothing is left to send.
    bool transmit(Worker& w, std::optional<std::size_t> target) {
      if (!w.tx_target || *w.tx_target != target) {
        w.tx_target = target;
        w.tx_progress = 0.0;
      }
      transmissions.push_back({worker_id(w.segment), target});
      w.tx_progress += m.dt_;
      double const per_pkg = config().transmit_time;
      std::vector<std::size_t> sent;
      while (!w.agent.carried.empty() && w.tx_progress >= per_pkg - 1e-9) {
        sent.push_back(w.agent.carried.front());
        w.agent.carried.erase(w.agent.carried.begin());
        w.tx_progress -= per_pkg;
      }
      if (!sent.empty()) {
        if (target) {
          auto& c = collectors[*target];
          for (auto id : sent) {
            state[id] = GoalState::kOnCollector;
            c.agent.carried.push_back(id);
          }
          trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kTransfer, sent,
                "collector " + std::to_string(*target));
        } else {
          deliver(sent, static_cast<std::int64_t>(worker_id(w.segment)));
          if (w.agent.carried.empty()) w.delivery_times.push_back(now);
        }
      }
      if (w.agent.carried.empty()) {
        w.tx_target.reset();
        w.tx_progress = 0.0;
        return true;
      }
      return false;
    }

    TravelOracle oracle_for(Worker const& w, std::vector<std::size_t> const& ids, DistanceField const& sink) const {
      std::vector<CellIndex> nodes{cell_of(w.agent.position)};
      for (auto id : ids) nodes.push_back(goals[id].cell);
      std::size_t calls = 0;
      auto times = detail::node_times(grid(), nodes, config().worker_speed, calls);
      std::vector<double> sink_times;
      for (auto c : nodes) sink_times.push_back(sink[c] / (config().worker_speed * grid().cell_size()));
      return TravelOracle(std::move(times), std::move(sink_times), config().gather_time);
    }

    void start_cycle(Worker& w) {
      auto& ids = pending[w.segment];
      w.tour.clear();
      if (ids.empty()) {
        if (!w.agent.carried.empty()) {
          finish_tour(w);
        } else {
          w.agent.phase = AgentPhase::kIdle;
        }
        return;
      }
      std::sort(ids.begin(), ids.end());
      std::vector<std::size_t> chosen;
      if (!w.collector) {
        auto const oracle = oracle_for(w, ids, m.comm_field_);
        auto const tour = route(oracle);
        for (auto g : tour.order) chosen.push_back(ids[g]);
      } else {
        auto const& schedule = m.schedules_[*w.collector];
        auto const oracle = oracle_for(w, ids, m.far_fields_[*w.collector]);
        auto const router = select_router(oracle.goal_count());
        double budget = schedule.next_far_time(now) - now;
        double const carried_tx = config().transmit_time * static_cast<double>(w.agent.carried.size());
        for (int pass = 0; pass < 3 && chosen.empty(); ++pass) {
          double const t_c = budget - carried_tx;
          if (t_c > 0.0) {
            auto const tour = tour_with_window(oracle, router, t_c, config().transmit_time);
            for (auto g : tour.order) chosen.push_back(ids[g]);
          }
          budget += schedule.period();
        }
        if (chosen.empty() && w.agent.carried.empty()) {
          // Nothing fits any nearby pass: take the nearest goal and meet whenever possible.
          auto const tour = nn_tour(oracle);
          if (!tour.order.empty()) chosen.push_back(ids[tour.order.front()]);
        }
      }
      std::vector<std::size_t> rest;
      for (auto id : ids) {
        if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) rest.push_back(id);
      }
      ids = std::move(rest);
      w.tour.assign(chosen.begin(), chosen.end());
      next_goal(w);
    }

    void next_goal(Worker& w) {
      if (w.tour.empty()) {
        finish_tour(w);
        return;
      }
      std::size_t const id = w.tour.front();
      w.tour.pop_front();
      w.current_goal = id;
      CellIndex const here = cell_of(w.agent.position);
      set_motion(w, detail::path_between(grid(), here, goals[id].cell), AfterMove::kGather);
      w.agent.phase = AgentPhase::kTravel;
      if (motion_done(w)) begin_gather(w);
    }

    void begin_gather(Worker& w) {
      w.agent.phase = AgentPhase::kGather;
      w.timer = config().gather_time;
      if (w.timer <= 1e-9) end_gather(w);
    }

    void end_gather(Worker& w) {
      std::size_t const id = *w.current_goal;
      w.current_goal.reset();
      goals[id].t_gathered = now;
      state[id] = GoalState::kCarried;
      ++in_flight;
      w.agent.carried.push_back(id);
      trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kGather, {id});
      next_goal(w);
    }

    void finish_tour(Worker& w) {
      if (w.agent.carried.empty()) {
        // Nothing to share this cycle.
        if (pending[w.segment].empty()) {
          w.agent.phase = AgentPhase::kIdle;
        } else {
          start_cycle(w);
        }
        return;
      }
      CellIndex const here = cell_of(w.agent.position);
      if (!w.collector) {
        w.agent.phase = AgentPhase::kToUpload;
        if (m.in_region_[here]) {
          set_motion(w, {here}, AfterMove::kUpload);
        } else {
          auto cells = extract_path(m.comm_field_, here).cells;
          std::reverse(cells.begin(), cells.end());
          set_motion(w, cells, AfterMove::kUpload);
        }
        if (motion_done(w)) w.agent.phase = AgentPhase::kUpload;
        return;
      }
      auto const& schedule = m.schedules_[*w.collector];
      double const t_tx = config().transmit_time * static_cast<double>(w.agent.carried.size());
      auto plan = plan_sync(grid(), schedule, w.agent.position, config().worker_speed, t_tx, now, config().d_com);
      if (!plan) {
        begin_fallback(w, "no meeting in horizon");
        return;
      }
      w.sync = plan;
      w.follow_arc = -1.0;
      ++result.metrics.rendezvous;
      ++result.metrics.behaviors[static_cast<std::size_t>(plan->behavior)];
      trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kRendezvousStart, {},
            std::string(to_string(plan->behavior)) + " collector " + std::to_string(*w.collector));
      if (plan->immediate) {
        w.waypoints.clear();
        w.next_waypoint = 0;
        w.agent.phase = AgentPhase::kSync;
        return;
      }
      MarchOptions opts;
      CellIndex const target[1] = {plan->cell};
      opts.targets = target;
      CellIndex const src[1] = {here};
      auto const field = solve_eikonal(grid(), src, opts);
      set_motion(w, extract_path(field, plan->cell).cells, AfterMove::kSync);
      w.agent.phase = AgentPhase::kToSync;
      if (motion_done(w)) w.agent.phase = AgentPhase::kSync;
    }

    void end_sync(Worker& w) {
      trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kRendezvousEnd);
      w.sync.reset();
      w.follow_arc = -1.0;
      start_cycle(w);
    }

    void begin_fallback(Worker& w, std::string const& why) {
      ++result.metrics.fallbacks;
      trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kFallback, w.agent.carried, why);
      w.sync.reset();
      CellIndex const here = cell_of(w.agent.position);
      auto cells = extract_path(m.oc_field_, here).cells;
      std::reverse(cells.begin(), cells.end());
      set_motion(w, cells, AfterMove::kDone);
      w.agent.phase = AgentPhase::kFallback;
    }

    double sync_timeout(Worker const& w) const {
      double const t_tx = config().transmit_time * static_cast<double>(w.agent.carried.size());
      double const slack = std::max({w.sync->window, t_tx, 1.0});
      return std::max(w.sync->start + 2.0 * slack, w.sync->until + std::max(t_tx, 1.0));
    }

    void step_worker(Worker& w) {
      double const speed = config().worker_speed;
      switch (w.agent.phase) {
        case AgentPhase::kInit:
          advance(w, speed);
          if (motion_done(w)) {
            trace(static_cast<std::int64_t>(worker_id(w.segment)), TraceKind::kArrive);
            start_cycle(w);
          }
          break;
        case AgentPhase::kIdle:
          if (!pending[w.segment].empty() || !w.agent.carried.empty()) start_cycle(w);
          break;
        case AgentPhase::kTravel:
          advance(w, speed);
          if (motion_done(w)) begin_gather(w);
          break;
        case AgentPhase::kGather:
          w.timer -= m.dt_;
          if (w.timer <= 1e-9) end_gather(w);
          break;
        case AgentPhase::kToUpload:
          advance(w, speed);
          if (motion_done(w)) w.agent.phase = AgentPhase::kUpload;
          break;
        case AgentPhase::kUpload:
          if (linked_to_oc(w)) {
            if (transmit(w, std::nullopt)) start_cycle(w);
          }
          break;
        case AgentPhase::kToSync:
          advance(w, speed);
          if (linked_to_collector(w, *w.collector)) {
            if (transmit(w, *w.collector)) {
              end_sync(w);
              break;
            }
          }
          if (motion_done(w)) w.agent.phase = AgentPhase::kSync;
          break;
        case AgentPhase::kSync:
          step_sync(w);
          break;
        case AgentPhase::kFallback: {
          if (w.collector && linked_to_collector(w, *w.collector)) {
            if (transmit(w, *w.collector)) start_cycle(w);
          } else if (linked_to_oc(w)) {
            if (transmit(w, std::nullopt)) start_cycle(w);
          } else {
            advance(w, speed);
          }
          break;
        }
        default:
          break;
      }
    }

    void step_sync(Worker& w) {
      std::size_t const k = *w.collector;
      auto const& schedule = m.schedules_[k];
      auto const& c = collectors[k];
      if (w.sync->behavior == SyncBehavior::kFollow && c.agent.active) {
        // Trail the collector along its loop once it has passed the meeting point.
        double const arc = w.follow_arc >= 0.0 ? w.follow_arc : w.sync->follow_arc;
        double const ahead = c.arc - arc;
        if (ahead > 0.0 && ahead < schedule.length() / 2.0 && linked_to_collector(w, k)) {
          double const next = std::min(c.arc, arc + config().worker_speed * m.dt_);
          Point const p = schedule.at_arc(next);
          w.agent.distance += distance(w.agent.position, p);
          w.agent.position = p;
          w.follow_arc = next;
        }
      }
      if (linked_to_collector(w, k)) {
        if (transmit(w, k)) end_sync(w);
        return;
      }
      if (now > sync_timeout(w)) begin_fallback(w, "rendezvous timeout");
    }

    void step_collector(std::size_t k) {
      auto& c = collectors[k];
      if (!c.agent.active) return;
      auto const& schedule = m.schedules_[k];
      for (std::size_t f = 0; f < faults.size(); ++f) {
        if (fault_applied[f] || faults[f].collector != k || now + 1e-9 < faults[f].time) continue;
        fault_applied[f] = true;
        if (faults[f].kind == CollectorFault::Kind::kDelay) {
          c.paused_until = faults[f].time + faults[f].duration;
        } else {
          c.retire_after = faults[f].time;
        }
      }
      if (now <= c.paused_until + 1e-9) return;
      double const step = schedule.speed() * m.dt_;
      double next = c.arc + step;
      bool wrapped = false;
      if (next >= schedule.length() - 1e-9) {
        next = std::max(0.0, next - schedule.length());
        wrapped = true;
      }
      Point const p = schedule.at_arc(next);
      c.agent.distance += wrapped ? step : distance(c.agent.position, p);
      c.arc = next;
      c.agent.position = p;
      if (wrapped) {
        if (!c.agent.carried.empty()) {
          auto ids = std::move(c.agent.carried);
          c.agent.carried.clear();
          deliver(ids, static_cast<std::int64_t>(collector_id(k)));
          c.upload_times.push_back(now);
        }
        if (c.retire_after && now + 1e-9 >= *c.retire_after) {
          c.agent.active = false;
          c.arc = 0.0;
          c.agent.position = grid().center(grid().oc_cell());
          c.agent.phase = AgentPhase::kStopped;
        }
      }
    }

    std::vector<AgentState> snapshot() const {
      std::vector<AgentState> out;
      for (auto const& w : workers) out.push_back(w.agent);
      for (auto const& c : collectors) out.push_back(c.agent);
      return out;
    }

    void notify() {
      if (!options.observer) return;
      auto const agents = snapshot();
      std::size_t const pending_count =
          static_cast<std::size_t>(std::count(state.begin(), state.end(), GoalState::kPending));
      options.observer(StepView{now, m.dt_, agents, transmissions, goals.size(), delivered, in_flight, pending_count});
    }

    MissionResult execute() {
      auto const& cand = m.cand_;
      pending.assign(cand.workers.size(), {});
      Point const oc = grid().center(grid().oc_cell());
      for (std::size_t s = 0; s < cand.workers.size(); ++s) {
        Worker w;
        w.segment = s;
        w.collector = cand.workers[s].collector;
        w.agent.id = s;
        w.agent.position = oc;
        workers.push_back(std::move(w));
      }
      for (std::size_t k = 0; k < cand.collectors.size(); ++k) {
        Collector c;
        c.agent.id = workers.size() + k;
        c.agent.role = AgentRole::kCollector;
        c.agent.position = oc;
        c.agent.phase = AgentPhase::kLoop;
        collectors.push_back(std::move(c));
      }
      if (options.initial_goals) {
        std::vector<GoalRequest> first;
        for (auto cell : *options.initial_goals) {
          if (cell >= grid().size() || !grid().is_free(cell)) throw InvalidInput("initial goal on a blocked cell");
          GoalRequest g;
          g.cell = cell;
          g.worker = static_cast<std::size_t>(cand.partition.labels[cell]);
          g.t_requested = 0.0;
          first.push_back(g);
        }
        if (!first.empty()) add_goals(std::move(first));
      } else {
        spawn(config().n_goals);
      }
      for (auto& w : workers) {
        set_motion(w, detail::path_between(grid(), grid().oc_cell(), cand.partition.centroids[w.segment]),
                   AfterMove::kStartCycle);
        w.agent.phase = AgentPhase::kInit;
      }

      auto const steps = static_cast<std::size_t>(std::floor(config().t_mission / m.dt_ + 1e-9));
      for (std::size_t n = 0; n < steps; ++n) {
        now = static_cast<double>(n + 1) * m.dt_;
        transmissions.clear();
        for (std::size_t k = 0; k < collectors.size(); ++k) step_collector(k);
        for (auto& w : workers) step_worker(w);
        notify();
      }
      finalize();
      return std::move(result);
    }

    void finalize() {
      auto& metrics = result.metrics;
      metrics.requested_total = goals.size();
      metrics.delivered_total = delivered;
      metrics.goals_expired = goals.size() - delivered;
      auto channel = [&](std::vector<double> const& times) {
        if (times.size() < 2) return;
        metrics.refresh_samples.push_back((times.back() - times.front()) / static_cast<double>(times.size() - 1));
      };
      for (auto const& c : collectors) channel(c.upload_times);
      for (auto const& w : workers) channel(w.delivery_times);
      auto mean = [](std::vector<double> const& v) {
        if (v.empty()) return 0.0;
        double sum = 0.0;
        for (double x : v) sum += x;
        return sum / static_cast<double>(v.size());
      };
      metrics.mean_refresh = mean(metrics.refresh_samples);
      metrics.mean_latency = mean(metrics.latency_samples);
      for (auto const& w : workers) metrics.distance.push_back(w.agent.distance);
      for (auto const& c : collectors) metrics.distance.push_back(c.agent.distance);
    }
  };
};

/// Runs the winning candidate of `plan` once.
inline MissionResult run_mission(MissionPlan const& plan, std::uint64_t seed, SimOptions const& options = {}) {
  MissionRunner const runner(plan.grid, plan.best(), plan.config, options.dt);
  return runner.run(seed, options);
}

}  // namespace gatherplan
