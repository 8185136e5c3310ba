#pragma once

// Scenario and config files, record writers and the plan/simulate/sweep commands behind
// the gatherplan tool. Kept in the library so tests can drive the commands in-process.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <locale>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gatherplan/grid.hpp"
#include "gatherplan/planner.hpp"
#include "gatherplan/segmentation.hpp"
#include "gatherplan/simulator.hpp"

namespace gatherplan::cli {

/// Malformed input file; line and column are 1-based (column 0: whole line).
class ParseError : public InvalidInput {
 public:
  ParseError(std::string const& source, std::size_t line, std::size_t column, std::string const& what)
      : InvalidInput(source + ":" + std::to_string(line) + (column ? ":" + std::to_string(column) : "") + ": " +
                     what),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

inline std::string_view trim(std::string_view s) {
  auto const first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  auto const last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_unsigned(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Fixed-point text independent of the global locale.
inline std::string fixed(double v, int precision = 6) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.setf(std::ios::fixed);
  out.precision(precision);
  out << v;
  return out.str();
}

/// ASCII raster: '#' obstacle, '.' free, 'O' operation center (exactly one). Lines starting
/// with ';' are metadata; a `cell_size=<meters>` token there sets the cell size.
inline OccupancyGrid parse_scenario(std::istream& in, std::string const& source = "<input>") {
  std::vector<CellState> cells;
  std::optional<CellIndex> oc;
  std::optional<std::size_t> oc_line;
  double cell_size = 1.0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t first_row_line = 0;
  std::size_t line_no = 0;
  std::size_t blank_after_rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == ';') {
      std::istringstream tokens(line.substr(1));
      std::string token;
      while (tokens >> token) {
        if (token.rfind("cell_size=", 0) != 0) continue;
        auto const v = parse_double(std::string_view(token).substr(10));
        if (!v || !(*v > 0.0)) throw ParseError(source, line_no, 0, "invalid cell_size");
        cell_size = *v;
      }
      continue;
    }
    if (line.empty()) {
      if (height > 0) blank_after_rows = line_no;
      continue;
    }
    if (blank_after_rows) throw ParseError(source, blank_after_rows, 0, "blank line inside the raster");
    if (height == 0) {
      width = line.size();
      first_row_line = line_no;
    } else if (line.size() != width) {
      throw ParseError(source, line_no, std::min(line.size(), width) + 1,
                       "row has " + std::to_string(line.size()) + " cells, expected " + std::to_string(width) +
                           " (as on line " + std::to_string(first_row_line) + ")");
    }
    for (std::size_t x = 0; x < line.size(); ++x) {
      switch (line[x]) {
        case '.':
          cells.push_back(CellState::kFree);
          break;
        case '#':
          cells.push_back(CellState::kObstacle);
          break;
        case 'O':
          if (oc) {
            throw ParseError(source, line_no, x + 1,
                             "second operation center (first on line " + std::to_string(*oc_line) + ")");
          }
          oc = static_cast<CellIndex>(height * width + x);
          oc_line = line_no;
          cells.push_back(CellState::kFree);
          break;
        default:
          throw ParseError(source, line_no, x + 1, std::string("unknown cell character '") + line[x] + "'");
      }
    }
    ++height;
  }
  if (height == 0) throw ParseError(source, line_no, 0, "no raster rows");
  if (!oc) throw ParseError(source, line_no, 0, "no operation center 'O'");
  return OccupancyGrid(static_cast<int>(width), static_cast<int>(height), std::move(cells), *oc, cell_size);
}

inline OccupancyGrid load_scenario(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read scenario " + path);
  return parse_scenario(in, path);
}

inline void write_scenario(std::ostream& out, OccupancyGrid const& grid) {
  if (grid.cell_size() != 1.0) out << "; cell_size=" << fixed(grid.cell_size(), 9) << '\n';
  for (int y = 0; y < grid.height(); ++y) {
    std::string row(static_cast<std::size_t>(grid.width()), '.');
    for (int x = 0; x < grid.width(); ++x) {
      CellIndex const c = grid.index(x, y);
      if (c == grid.oc_cell()) {
        row[x] = 'O';
      } else if (!grid.is_free(c)) {
        row[x] = '#';
      }
    }
    out << row << '\n';
  }
}

/// Case-insensitive method name.
inline std::optional<PartitionMethod> parse_method(std::string_view name) {
  for (auto m : kAllMethods) {
    auto const label = to_string(m);
    bool const same = std::equal(label.begin(), label.end(), name.begin(), name.end(), [](char a, char b) {
      return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    if (same) return m;
  }
  return std::nullopt;
}

/// "bap", "pap", "rap", "all" or a comma-separated list of the first three.
inline std::vector<PartitionMethod> parse_methods(std::string_view text) {
  text = trim(text);
  if (text == "all") return {kAllMethods[0], kAllMethods[1], kAllMethods[2]};
  std::vector<PartitionMethod> out;
  while (!text.empty()) {
    auto const comma = text.find(',');
    auto const name = trim(text.substr(0, comma));
    auto const m = parse_method(name);
    if (!m) throw InvalidInput("unknown partition method '" + std::string(name) + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  if (out.empty()) throw InvalidInput("no partition method given");
  return out;
}

/// Collector count setting: a number fixes it, "sweep" evaluates 0..limit.
inline std::optional<std::size_t> parse_collectors(std::string_view text) {
  text = trim(text);
  if (text == "sweep") return std::nullopt;
  auto const v = parse_unsigned(text);
  if (!v) throw InvalidInput("collectors must be a count or 'sweep', got '" + std::string(text) + "'");
  return static_cast<std::size_t>(*v);
}

/// Applies one config entry; keys mirror PlanConfig fields.
inline void set_config_value(PlanConfig& config, std::string_view key, std::string_view value) {
  auto number = [&]() {
    auto const v = parse_double(value);
    if (!v) throw InvalidInput("'" + std::string(key) + "' needs a number, got '" + std::string(value) + "'");
    return *v;
  };
  auto count = [&]() {
    auto const v = parse_unsigned(value);
    if (!v) throw InvalidInput("'" + std::string(key) + "' needs a count, got '" + std::string(value) + "'");
    return static_cast<std::size_t>(*v);
  };
  if (key == "n_agents") {
    config.n_agents = count();
  } else if (key == "n_goals") {
    config.n_goals = count();
  } else if (key == "alpha") {
    config.alpha = number();
  } else if (key == "beta") {
    config.beta = number();
  } else if (key == "worker_speed") {
    config.worker_speed = number();
  } else if (key == "collector_speed") {
    config.collector_speed = number();
  } else if (key == "gather_time") {
    config.gather_time = number();
  } else if (key == "transmit_time") {
    config.transmit_time = number();
  } else if (key == "d_com") {
    config.d_com = number();
  } else if (key == "t_mission") {
    config.t_mission = number();
  } else if (key == "max_collectors") {
    config.max_collectors = count();
  } else if (key == "collectors") {
    config.fixed_collectors = parse_collectors(value);
  } else if (key == "methods" || key == "method") {
    config.methods = parse_methods(value);
  } else {
    throw InvalidInput("unknown config key '" + std::string(key) + "'");
  }
}

/// Flat `key = value` file; '#' starts a comment.
inline PlanConfig parse_config(std::istream& in, std::string const& source = "<config>", PlanConfig config = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    text = trim(text.substr(0, text.find('#')));
    if (text.empty()) continue;
    auto const eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, 0, "expected key = value");
    try {
      set_config_value(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (ParseError const&) {
      throw;
    } catch (InvalidInput const& e) {
      throw ParseError(source, line_no, 0, e.what());
    }
  }
  return config;
}

inline PlanConfig load_config(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path);
  return parse_config(in, path);
}

inline std::string candidate_label(PlanCandidate const& c) {
  return std::string(to_string(c.method)) + "/" + std::to_string(c.n_collectors);
}

inline void write_plan_report(std::ostream& out, MissionPlan const& plan, std::string const& scenario) {
  auto const& cfg = plan.config;
  auto const& best = plan.best();
  out << "# scenario=" << scenario << " width=" << plan.grid.width() << " height=" << plan.grid.height()
      << " free_cells=" << plan.grid.free_count() << " n_agents=" << cfg.n_agents << " n_goals=" << cfg.n_goals
      << " alpha=" << fixed(cfg.alpha) << " beta=" << fixed(cfg.beta) << " d_com=" << fixed(cfg.d_com)
      << " t_mission=" << fixed(cfg.t_mission) << '\n';
  out << "# winner=" << candidate_label(best) << " active_collectors=" << best.active_collectors()
      << " utility=" << fixed(best.utility) << '\n';
  out << "method,n_collectors,active_collectors,n_workers,est_refresh,est_delivered,utility,winner\n";
  for (std::size_t i = 0; i < plan.candidates.size(); ++i) {
    auto const& c = plan.candidates[i];
    out << to_string(c.method) << ',' << c.n_collectors << ',' << c.active_collectors() << ',' << c.n_workers << ','
        << fixed(c.est_refresh) << ',' << fixed(c.est_delivered) << ',' << fixed(c.utility) << ','
        << (i == plan.winner ? 1 : 0) << '\n';
  }
}

/// Per-cell segment labels, one CSV row per grid row; obstacles are -1.
inline void write_segments(std::ostream& out, OccupancyGrid const& grid, Partition const& partition) {
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (x) out << ',';
      out << partition.labels[grid.index(x, y)];
    }
    out << '\n';
  }
}

inline void write_trace(std::ostream& out, std::vector<TraceEvent> const& trace) {
  for (auto const& e : trace) {
    nlohmann::json record{{"time", e.time},
                          {"agent", e.agent},
                          {"kind", std::string(to_string(e.kind))},
                          {"goals", e.goals}};
    if (!e.note.empty()) record["note"] = e.note;
    out << record.dump() << '\n';
  }
}

struct Trial {
  std::uint64_t seed = 0;
  MissionMetrics metrics;
  std::vector<TraceEvent> trace;
};

/// Seeded missions `seed`, `seed + 1`, ... of one candidate.
inline std::vector<Trial> run_trials(MissionPlan const& plan, PlanCandidate const& candidate, std::uint64_t seed,
                                     std::size_t trials, bool keep_trace = false) {
  MissionRunner const runner(plan.grid, candidate, plan.config);
  SimOptions options;
  options.record_trace = keep_trace;
  std::vector<Trial> out;
  for (std::size_t t = 0; t < trials; ++t) {
    auto result = runner.run(seed + t, options);
    out.push_back({seed + t, std::move(result.metrics), std::move(result.trace)});
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

template <typename Get>
Summary summarize(std::vector<Trial> const& trials, Get get) {
  Summary s;
  if (trials.empty()) return s;
  s.min = s.max = get(trials.front());
  double sum = 0.0;
  for (auto const& t : trials) {
    double const v = get(t);
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(trials.size());
  return s;
}

/// One row per trial then an aggregate row (mean, with min and max bands).
inline void write_simulation(std::ostream& out, std::vector<Trial> const& trials) {
  out << "row,seed,mean_refresh,delivered,mean_latency,requested,rendezvous,fallbacks,"
         "refresh_min,refresh_max,delivered_min,delivered_max\n";
  auto refresh = [](Trial const& t) { return t.metrics.mean_refresh; };
  auto delivered = [](Trial const& t) { return static_cast<double>(t.metrics.delivered_total); };
  auto latency = [](Trial const& t) { return t.metrics.mean_latency; };
  auto requested = [](Trial const& t) { return static_cast<double>(t.metrics.requested_total); };
  auto rendezvous = [](Trial const& t) { return static_cast<double>(t.metrics.rendezvous); };
  auto fallbacks = [](Trial const& t) { return static_cast<double>(t.metrics.fallbacks); };
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto const& t = trials[i];
    out << i << ',' << t.seed << ',' << fixed(refresh(t)) << ',' << fixed(delivered(t)) << ',' << fixed(latency(t))
        << ',' << fixed(requested(t)) << ',' << fixed(rendezvous(t)) << ',' << fixed(fallbacks(t)) << ','
        << fixed(refresh(t)) << ',' << fixed(refresh(t)) << ',' << fixed(delivered(t)) << ','
        << fixed(delivered(t)) << '\n';
  }
  auto const r = summarize(trials, refresh);
  auto const d = summarize(trials, delivered);
  out << "aggregate,," << fixed(r.mean) << ',' << fixed(d.mean) << ',' << fixed(summarize(trials, latency).mean)
      << ',' << fixed(summarize(trials, requested).mean) << ',' << fixed(summarize(trials, rendezvous).mean) << ','
      << fixed(summarize(trials, fallbacks).mean) << ',' << fixed(r.min) << ',' << fixed(r.max) << ','
      << fixed(d.min) << ',' << fixed(d.max) << '\n';
}

struct SweepRow {
  std::size_t candidate = 0;
  double exec_refresh = 0.0;
  double exec_delivered = 0.0;
  double exec_latency = 0.0;
  double exec_utility = 0.0;
};

/// Executed means over `trials` seeds for every candidate, with the utility recomputed over
/// the executed values.
inline std::vector<SweepRow> sweep(MissionPlan const& plan, std::uint64_t seed, std::size_t trials) {
  std::vector<SweepRow> rows;
  std::vector<double> refresh;
  std::vector<double> delivered;
  for (std::size_t i = 0; i < plan.candidates.size(); ++i) {
    auto const runs = run_trials(plan, plan.candidates[i], seed, trials);
    SweepRow row;
    row.candidate = i;
    row.exec_refresh = summarize(runs, [](Trial const& t) { return t.metrics.mean_refresh; }).mean;
    row.exec_delivered =
        summarize(runs, [](Trial const& t) { return static_cast<double>(t.metrics.delivered_total); }).mean;
    row.exec_latency = summarize(runs, [](Trial const& t) { return t.metrics.mean_latency; }).mean;
    refresh.push_back(row.exec_refresh);
    delivered.push_back(row.exec_delivered);
    rows.push_back(row);
  }
  if (!rows.empty()) {
    auto const u = utility(refresh, delivered, plan.config.alpha, plan.config.beta);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].exec_utility = u[i];
  }
  return rows;
}

inline void write_sweep(std::ostream& out, MissionPlan const& plan, std::vector<SweepRow> const& rows) {
  out << "method,n_collectors,active_collectors,est_refresh,exec_refresh,est_delivered,exec_delivered,"
         "exec_latency,est_utility,exec_utility,winner\n";
  for (auto const& row : rows) {
    auto const& c = plan.candidates[row.candidate];
    out << to_string(c.method) << ',' << c.n_collectors << ',' << c.active_collectors() << ','
        << fixed(c.est_refresh) << ',' << fixed(row.exec_refresh) << ',' << fixed(c.est_delivered) << ','
        << fixed(row.exec_delivered) << ',' << fixed(row.exec_latency) << ',' << fixed(c.utility) << ','
        << fixed(row.exec_utility) << ',' << (row.candidate == plan.winner ? 1 : 0) << '\n';
  }
}

struct Options {
  std::string command;  // plan, simulate or sweep
  std::string scenario;
  std::optional<std::string> config;
  std::optional<std::string> method;
  std::optional<std::string> collectors;
  std::uint64_t seed = 1;
  std::size_t trials = 20;
  std::optional<std::string> out_dir;
  bool export_segments = false;
  bool export_trace = false;
};

/// Config file values, then command-line flags on top.
inline PlanConfig resolve_config(Options const& options) {
  PlanConfig config = options.config ? load_config(*options.config) : PlanConfig{};
  if (options.method) config.methods = parse_methods(*options.method);
  if (options.collectors) config.fixed_collectors = parse_collectors(*options.collectors);
  config.validate();
  return config;
}

namespace detail {

inline std::filesystem::path output_dir(Options const& options) {
  std::filesystem::path dir = options.out_dir.value_or(".");
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::ofstream open_output(std::filesystem::path const& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

/// Writes `text` to the output stream and, with --out, to `name` inside that directory.
inline void emit(Options const& options, std::ostream& out, std::string const& name, std::string const& text) {
  out << text;
  if (options.out_dir) open_output(output_dir(options) / name) << text;
}

}  // namespace detail

inline int cmd_plan(Options const& options, std::ostream& out, std::ostream& err) {
  auto const grid = load_scenario(options.scenario);
  auto const config = resolve_config(options);
  auto const plan = plan_mission(grid, config);
  std::ostringstream report;
  write_plan_report(report, plan, std::filesystem::path(options.scenario).filename().string());
  detail::emit(options, out, "plan.csv", report.str());
  if (options.export_segments) {
    auto const path = detail::output_dir(options) / "segments.csv";
    auto file = detail::open_output(path);
    write_segments(file, plan.grid, plan.best().partition);
    err << "segments written to " << path.string() << '\n';
  }
  return 0;
}

inline int cmd_simulate(Options const& options, std::ostream& out, std::ostream& err) {
  if (options.trials == 0) throw InvalidInput("trials must be at least 1");
  auto const grid = load_scenario(options.scenario);
  auto const config = resolve_config(options);
  auto const plan = plan_mission(grid, config);
  auto const& best = plan.best();
  err << "running " << candidate_label(best) << " for " << options.trials << " trial(s)\n";
  auto const trials = run_trials(plan, best, options.seed, options.trials, options.export_trace);
  std::ostringstream table;
  write_simulation(table, trials);
  detail::emit(options, out, "simulate.csv", table.str());
  if (options.export_trace) {
    auto const dir = detail::output_dir(options);
    for (auto const& t : trials) {
      auto file = detail::open_output(dir / ("trace_" + std::to_string(t.seed) + ".jsonl"));
      write_trace(file, t.trace);
    }
    err << "traces written to " << dir.string() << '\n';
  }
  if (options.export_segments) {
    auto file = detail::open_output(detail::output_dir(options) / "segments.csv");
    write_segments(file, plan.grid, best.partition);
  }
  return 0;
}

inline int cmd_sweep(Options const& options, std::ostream& out, std::ostream& err) {
  if (options.trials == 0) throw InvalidInput("trials must be at least 1");
  auto const grid = load_scenario(options.scenario);
  auto const config = resolve_config(options);
  auto const plan = plan_mission(grid, config);
  err << "sweeping " << plan.candidates.size() << " candidate(s) x " << options.trials << " trial(s)\n";
  std::ostringstream table;
  write_sweep(table, plan, sweep(plan, options.seed, options.trials));
  detail::emit(options, out, "sweep.csv", table.str());
  return 0;
}

/// Runs a command; errors go to `err` and give a nonzero status.
inline int run(Options const& options, std::ostream& out, std::ostream& err) {
  try {
    if (options.command == "plan") return cmd_plan(options, out, err);
    if (options.command == "simulate") return cmd_simulate(options, out, err);
    if (options.command == "sweep") return cmd_sweep(options, out, err);
    err << "error: unknown command '" << options.command << "'\n";
    return 2;
  } catch (std::exception const& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gatherplan::cli
