#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "gatherplan/cli.hpp"
#include "support.hpp"

namespace gatherplan::cli {
namespace {

namespace fs = std::filesystem;

using Table = std::vector<std::vector<std::string>>;

std::vector<std::string> split(std::string const& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

/// CSV rows after the '#' header lines; the first row is the column header.
Table read_csv(std::string const& text) {
  Table rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(split(line));
  }
  return rows;
}

std::size_t column(Table const& t, std::string const& name) {
  auto const it = std::find(t.front().begin(), t.front().end(), name);
  EXPECT_NE(it, t.front().end()) << name;
  return static_cast<std::size_t>(it - t.front().begin());
}

/// Scratch directory removed at scope exit.
struct TempDir {
  fs::path path;

  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("gatherplan_cli_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string write(std::string const& name, std::string const& text) const {
    auto const file = path / name;
    std::ofstream(file) << text;
    return file.string();
  }
};

OccupancyGrid parse(std::string const& text) {
  std::istringstream in(text);
  return parse_scenario(in, "test.map");
}

void expect_parse_error(std::string const& text, std::size_t line, std::size_t col) {
  try {
    parse(text);
    ADD_FAILURE() << "no error for:\n" << text;
  } catch (ParseError const& e) {
    EXPECT_EQ(e.line(), line) << e.what();
    EXPECT_EQ(e.column(), col) << e.what();
    EXPECT_NE(std::string(e.what()).find("test.map:" + std::to_string(line)), std::string::npos);
  }
}

std::string const kSmallMap =
    "; small test map\n"
    "....................\n"
    "..O.................\n"
    "..........##........\n"
    "..........##........\n"
    "....................\n"
    "....................\n";

std::string const kSmallConfig =
    "# desk-scale run\n"
    "n_agents = 6\n"
    "n_goals = 10   # per batch\n"
    "t_mission = 150\n";

TEST(Scenario, CenteredOperationCenter) {
  auto const grid = parse("...\n.O.\n...\n");
  EXPECT_EQ(grid.width(), 3);
  EXPECT_EQ(grid.height(), 3);
  EXPECT_EQ(grid.free_count(), 9u);
  EXPECT_EQ(grid.oc_cell(), grid.index(1, 1));
}

TEST(Scenario, MetadataAndCellSize) {
  auto const grid = parse("; generated\n; cell_size=0.5 origin=lab\n#O\r\n..\r\n");
  EXPECT_DOUBLE_EQ(grid.cell_size(), 0.5);
  EXPECT_FALSE(grid.is_free(grid.index(0, 0)));
  EXPECT_EQ(grid.free_count(), 3u);
}

TEST(Scenario, ErrorsNameLineAndColumn) {
  expect_parse_error("O..\n..O\n", 2, 3);          // second operation center
  expect_parse_error("...\n.O.\n....\n", 3, 4);     // ragged row
  expect_parse_error("...\n.O.\n..x\n", 3, 3);      // unknown character
  expect_parse_error("...\n...\n", 2, 0);           // no operation center
  expect_parse_error("; only metadata\n", 1, 0);    // no rows
  expect_parse_error("O..\n\n...\n", 2, 0);         // hole in the raster
  expect_parse_error("; cell_size=-1\nO\n", 1, 0);  // bad metadata
}

TEST(Scenario, TrailingBlankLinesAreIgnored) {
  EXPECT_EQ(parse("O.\n..\n\n\n").height(), 2);
}

TEST(Scenario, ExportReloadRoundTrip) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto const grid = testing::random_map(rng, 5 + trial, 3 + trial % 7, 0.3);
    std::stringstream text;
    write_scenario(text, grid);
    EXPECT_EQ(parse_scenario(text), grid);
  }
  auto const scaled = testing::grid_from_rows({"O.#", "..."}, 0.25);
  std::stringstream text;
  write_scenario(text, scaled);
  EXPECT_EQ(parse_scenario(text), scaled);
}

TEST(Scenario, BundledMapsRoundTrip) {
  for (std::string name : {"rooms.map", "homogeneous.map"}) {
    auto const grid = load_scenario(std::string(GATHERPLAN_MAPS_DIR) + "/" + name);
    EXPECT_EQ(grid.width(), 100);
    EXPECT_EQ(grid.height(), 100);
    std::stringstream text;
    write_scenario(text, grid);
    EXPECT_EQ(parse_scenario(text), grid) << name;
  }
}

TEST(Scenario, MissingFileIsAnError) {
  EXPECT_THROW(load_scenario("/nonexistent/gatherplan.map"), InvalidInput);
}

TEST(Config, ParsesKeysAndComments) {
  std::istringstream in(
      "n_agents = 12\nn_goals=40\nalpha = 0.25\nbeta = 0.75\nworker_speed = 1.5\ncollector_speed = 3\n"
      "gather_time = 4\ntransmit_time = 0.5\nd_com = 8\nt_mission = 600\nmax_collectors = 4\n"
      "collectors = 2\nmethods = pap, RAP\n\n# done\n");
  auto const c = parse_config(in);
  EXPECT_EQ(c.n_agents, 12u);
  EXPECT_EQ(c.n_goals, 40u);
  EXPECT_DOUBLE_EQ(c.alpha, 0.25);
  EXPECT_DOUBLE_EQ(c.beta, 0.75);
  EXPECT_DOUBLE_EQ(c.worker_speed, 1.5);
  EXPECT_DOUBLE_EQ(c.collector_speed, 3.0);
  EXPECT_DOUBLE_EQ(c.gather_time, 4.0);
  EXPECT_DOUBLE_EQ(c.transmit_time, 0.5);
  EXPECT_DOUBLE_EQ(c.d_com, 8.0);
  EXPECT_DOUBLE_EQ(c.t_mission, 600.0);
  EXPECT_EQ(c.max_collectors, std::optional<std::size_t>(4));
  EXPECT_EQ(c.fixed_collectors, std::optional<std::size_t>(2));
  EXPECT_EQ(c.methods, (std::vector<PartitionMethod>{PartitionMethod::kPap, PartitionMethod::kRap}));
}

TEST(Config, DefaultsMatchTheReferenceSetup) {
  std::istringstream in("");
  auto const c = parse_config(in);
  EXPECT_EQ(c.n_agents, 20u);
  EXPECT_EQ(c.n_goals, 100u);
  EXPECT_DOUBLE_EQ(c.alpha, 0.5);
  EXPECT_DOUBLE_EQ(c.d_com, 10.0);
  EXPECT_DOUBLE_EQ(c.t_mission, 1000.0);
  EXPECT_EQ(c.methods.size(), 3u);
  EXPECT_FALSE(c.fixed_collectors);
}

TEST(Config, ErrorsNameTheLine) {
  auto line_of = [](std::string const& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_config(in, "run.cfg");
    } catch (ParseError const& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("n_agents = 4\nspeed = 2\n"), 2u);
  EXPECT_EQ(line_of("n_agents = four\n"), 1u);
  EXPECT_EQ(line_of("# c\n\nn_goals\n"), 3u);
  EXPECT_EQ(line_of("methods = bap,xyz\n"), 1u);
  EXPECT_EQ(line_of("collectors = lots\n"), 1u);
}

TEST(Config, FlagsOverrideFile) {
  TempDir const dir;
  Options options;
  options.config = dir.write("run.cfg", "n_agents = 8\nmethods = rap\ncollectors = 3\n");
  auto from_file = resolve_config(options);
  EXPECT_EQ(from_file.methods, std::vector<PartitionMethod>{PartitionMethod::kRap});
  EXPECT_EQ(from_file.fixed_collectors, std::optional<std::size_t>(3));
  options.method = "pap";
  options.collectors = "sweep";
  auto const flagged = resolve_config(options);
  EXPECT_EQ(flagged.n_agents, 8u);
  EXPECT_EQ(flagged.methods, std::vector<PartitionMethod>{PartitionMethod::kPap});
  EXPECT_FALSE(flagged.fixed_collectors);
  options.method = "all";
  EXPECT_EQ(resolve_config(options).methods.size(), 3u);
}

TEST(Format, FixedPointText) {
  EXPECT_EQ(fixed(1.5), "1.500000");
  EXPECT_EQ(fixed(-0.25, 2), "-0.25");
  EXPECT_EQ(fixed(1234567.0, 1), "1234567.0");
  EXPECT_EQ(fixed(2.0 / 3.0), "0.666667");
  EXPECT_DOUBLE_EQ(*parse_double(fixed(2.0 / 3.0)), 0.666667);
}

struct CommandRun {
  int status = 0;
  std::string out;
  std::string err;
};

CommandRun run_command(Options const& options) {
  std::ostringstream out;
  std::ostringstream err;
  CommandRun r;
  r.status = run(options, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

Options small_options(TempDir const& dir, std::string command) {
  Options options;
  options.command = std::move(command);
  options.scenario = dir.write("small.map", kSmallMap);
  options.config = dir.write("small.cfg", kSmallConfig);
  return options;
}

TEST(PlanCommand, CandidateTableAndHeader) {
  TempDir const dir;
  auto const r = run_command(small_options(dir, "plan"));
  ASSERT_EQ(r.status, 0) << r.err;
  auto const table = read_csv(r.out);
  ASSERT_EQ(table.size(), 1u + 3u * (6u / 2u + 1u));
  EXPECT_EQ(table.front().front(), "method");
  EXPECT_NE(r.out.find("alpha=0.500000 beta=0.500000"), std::string::npos);
  std::size_t winners = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    EXPECT_EQ(table[i].size(), table.front().size());
    winners += table[i][column(table, "winner")] == "1";
  }
  EXPECT_EQ(winners, 1u);
}

TEST(PlanCommand, MethodFilterAndFixedCollectors) {
  TempDir const dir;
  auto options = small_options(dir, "plan");
  options.method = "pap";
  auto r = run_command(options);
  ASSERT_EQ(r.status, 0) << r.err;
  auto table = read_csv(r.out);
  ASSERT_EQ(table.size(), 1u + 4u);
  for (std::size_t i = 1; i < table.size(); ++i) EXPECT_EQ(table[i][0], "PAP");
  options.collectors = "2";
  table = read_csv(run_command(options).out);
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(table[1][column(table, "n_collectors")], "2");
}

TEST(PlanCommand, WritesFilesAndSegments) {
  TempDir const dir;
  auto options = small_options(dir, "plan");
  options.out_dir = (dir.path / "out").string();
  options.export_segments = true;
  auto const r = run_command(options);
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream plan_file(dir.path / "out" / "plan.csv");
  std::stringstream saved;
  saved << plan_file.rdbuf();
  EXPECT_EQ(saved.str(), r.out);
  std::ifstream seg_file(dir.path / "out" / "segments.csv");
  std::stringstream seg_text;
  seg_text << seg_file.rdbuf();
  auto const rows = read_csv(seg_text.str());
  auto const grid = parse(kSmallMap);
  ASSERT_EQ(rows.size(), static_cast<std::size_t>(grid.height()));
  for (int y = 0; y < grid.height(); ++y) {
    ASSERT_EQ(rows[y].size(), static_cast<std::size_t>(grid.width()));
    for (int x = 0; x < grid.width(); ++x) EXPECT_EQ(rows[y][x] == "-1", !grid.is_free(x, y));
  }
}

TEST(PlanCommand, ErrorsGiveNonzeroStatus) {
  TempDir const dir;
  auto options = small_options(dir, "plan");
  options.scenario = dir.write("bad.map", "O..\n..O\n");
  auto r = run_command(options);
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("bad.map:2:3"), std::string::npos) << r.err;

  options = small_options(dir, "plan");
  options.method = "fast";
  r = run_command(options);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("fast"), std::string::npos);

  options = small_options(dir, "plan");
  options.config = dir.write("many.cfg", "n_agents = 4\ncollectors = 4\n");
  EXPECT_NE(run_command(options).status, 0);

  options = small_options(dir, "launch");
  EXPECT_NE(run_command(options).status, 0);
}

TEST(SimulateCommand, TrialRowsAndAggregate) {
  TempDir const dir;
  auto options = small_options(dir, "simulate");
  options.trials = 4;
  options.seed = 11;
  auto const r = run_command(options);
  ASSERT_EQ(r.status, 0) << r.err;
  auto const table = read_csv(r.out);
  ASSERT_EQ(table.size(), 1u + 4u + 1u);
  EXPECT_EQ(table.back()[0], "aggregate");
  for (std::string name : {"mean_refresh", "delivered", "mean_latency"}) {
    std::size_t const col = column(table, name);
    double sum = 0.0;
    double lo = 1e300;
    double hi = -1e300;
    for (std::size_t i = 1; i <= 4; ++i) {
      double const v = *parse_double(table[i][col]);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_NEAR(*parse_double(table.back()[col]), sum / 4.0, 1e-6) << name;
    if (name == "mean_refresh") {
      EXPECT_NEAR(*parse_double(table.back()[column(table, "refresh_min")]), lo, 1e-6);
      EXPECT_NEAR(*parse_double(table.back()[column(table, "refresh_max")]), hi, 1e-6);
    }
  }
  EXPECT_EQ(table[1][column(table, "seed")], "11");
  EXPECT_EQ(table[4][column(table, "seed")], "14");
}

TEST(SimulateCommand, StableAcrossInvocations) {
  TempDir const dir;
  auto options = small_options(dir, "simulate");
  options.trials = 1;
  options.seed = 3;
  auto const a = run_command(options);
  auto const b = run_command(options);
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(SimulateCommand, TraceExportIsJsonLines) {
  TempDir const dir;
  auto options = small_options(dir, "simulate");
  options.trials = 2;
  options.seed = 5;
  options.out_dir = (dir.path / "traces").string();
  options.export_trace = true;
  ASSERT_EQ(run_command(options).status, 0);
  for (std::uint64_t seed : {5u, 6u}) {
    std::ifstream in(dir.path / "traces" / ("trace_" + std::to_string(seed) + ".jsonl"));
    ASSERT_TRUE(in.good());
    std::string line;
    std::size_t lines = 0;
    double last = 0.0;
    std::set<std::string> kinds;
    while (std::getline(in, line)) {
      auto const record = nlohmann::json::parse(line);
      EXPECT_GE(record.at("time").get<double>(), last);
      last = record.at("time").get<double>();
      kinds.insert(record.at("kind").get<std::string>());
      EXPECT_TRUE(record.at("goals").is_array());
      ++lines;
    }
    EXPECT_GT(lines, 1u);
    EXPECT_TRUE(kinds.count("spawn"));
    EXPECT_TRUE(kinds.count("delivery"));
  }
}

TEST(SweepCommand, OneRowPerCandidate) {
  TempDir const dir;
  auto options = small_options(dir, "sweep");
  options.method = "bap";
  options.trials = 2;
  auto const r = run_command(options);
  ASSERT_EQ(r.status, 0) << r.err;
  auto const table = read_csv(r.out);
  ASSERT_EQ(table.size(), 1u + 4u);
  for (std::string name : {"est_refresh", "exec_refresh", "est_delivered", "exec_delivered", "exec_utility"}) {
    std::size_t const col = column(table, name);
    for (std::size_t i = 1; i < table.size(); ++i) EXPECT_TRUE(parse_double(table[i][col]).has_value());
  }
}

}  // namespace
}  // namespace gatherplan::cli
