#include <gtest/gtest.h>

#include <random>

#include "gatherplan/communication.hpp"
#include "gatherplan/fmm.hpp"
#include "gatherplan/line_of_sight.hpp"
#include "support.hpp"

namespace gatherplan {
namespace {

using testing::grid_from_rows;

OccupancyGrid corridor(int length, double cell_size = 1.0) {
  return OccupancyGrid::open(length, 1, 0, cell_size);
}

TEST(OccupancyGrid, RejectsOperationCenterOnObstacle) {
  std::vector<CellState> cells(4, CellState::kFree);
  cells[2] = CellState::kObstacle;
  EXPECT_THROW(OccupancyGrid(2, 2, cells, 2), InvalidInput);
  EXPECT_THROW(OccupancyGrid(0, 2, {}, 0), InvalidInput);
  EXPECT_NO_THROW(OccupancyGrid(2, 2, cells, 1));
}

TEST(SolveEikonal, CorridorIsCumulativeDistance) {
  for (double cell_size : {1.0, 0.5}) {
    auto const grid = corridor(10, cell_size);
    auto const field = solve_eikonal(grid, CellIndex{0});
    for (CellIndex c = 0; c < 10; ++c) {
      EXPECT_NEAR(field[c], static_cast<double>(c) * cell_size, 1e-12);
    }
  }
}

TEST(SolveEikonal, SourceValueIsZero) {
  std::mt19937_64 rng(7);
  auto const grid = testing::random_map(rng, 25, 25, 0.2);
  for (int i = 0; i < 10; ++i) {
    auto const s = testing::random_free_cell(rng, grid);
    EXPECT_EQ(solve_eikonal(grid, s)[s], 0.0);
  }
}

TEST(SolveEikonal, WallLeavesOtherSideUnreached) {
  std::vector<std::string> rows(15, std::string(15, '.'));
  for (auto& r : rows) r[7] = '#';
  rows[3][2] = 'O';
  auto const grid = grid_from_rows(rows);
  auto const field = solve_eikonal(grid, grid.oc_cell());
  for (int y = 0; y < 15; ++y) {
    for (int x = 0; x < 15; ++x) {
      auto const c = grid.index(x, y);
      EXPECT_EQ(field.reached(c), x < 7) << x << "," << y;
      if (x == 7) {
        EXPECT_EQ(field.labels[c], -1);
      }
    }
  }
}

TEST(SolveEikonal, RejectsBadSources) {
  std::vector<std::string> rows = {"O.#", "..."};
  auto const grid = grid_from_rows(rows);
  std::vector<CellIndex> none;
  EXPECT_THROW(solve_eikonal(grid, none), InvalidInput);
  std::vector<CellIndex> on_wall{2};
  EXPECT_THROW(solve_eikonal(grid, on_wall), InvalidInput);
  std::vector<CellIndex> outside{99};
  EXPECT_THROW(solve_eikonal(grid, outside), InvalidInput);
  SpeedField zero{std::vector<double>(grid.size(), 0.0)};
  std::vector<CellIndex> ok{0};
  EXPECT_THROW(solve_eikonal(grid, ok, zero), InvalidInput);
}

TEST(SolveEikonal, MultiSourceIsBoundedByPointwiseMinimum) {
  auto const grid = OccupancyGrid::open(20, 20, 0);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto const a = testing::random_free_cell(rng, grid);
    auto b = testing::random_free_cell(rng, grid);
    while (b == a) b = testing::random_free_cell(rng, grid);
    auto const fa = solve_eikonal(grid, a);
    auto const fb = solve_eikonal(grid, b);
    std::vector<CellIndex> both{a, b};
    auto const fab = solve_eikonal(grid, both);
    // Cells whose whole upwind cone stays clear of the collision front match exactly.
    double const clear = 0.5 * testing::euclidean(grid, a, b) - 2.0;
    for (CellIndex c = 0; c < grid.size(); ++c) {
      double const lo = std::min(fa[c], fb[c]);
      EXPECT_LE(fab[c], lo + 1e-9);
      if (fab[c] < clear) {
        EXPECT_NEAR(fab[c], lo, 1e-9);
      }
    }
  }
}

TEST(SolveEikonal, DijkstraSandwichOnRandomMaps) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> side(10, 50);
  for (int trial = 0; trial < 20; ++trial) {
    auto const grid = testing::random_map(rng, side(rng), side(rng), 0.15 + 0.01 * trial);
    auto const s = testing::random_free_cell(rng, grid);
    auto const field = solve_eikonal(grid, s);
    auto const dijkstra = testing::dijkstra8(grid, s);
    for (CellIndex c = 0; c < grid.size(); ++c) {
      ASSERT_EQ(field.reached(c), std::isfinite(dijkstra[c]));
      if (!field.reached(c)) continue;
      EXPECT_LE(field[c], dijkstra[c] + 1e-9);
      EXPECT_GE(field[c], testing::euclidean(grid, s, c) - 1e-9);
    }
  }
}

TEST(SolveEikonal, UpwindUpdateHoldsAtEveryCell) {
  std::mt19937_64 rng(5);
  auto const grid = testing::random_map(rng, 40, 30, 0.2);
  std::vector<CellIndex> sources{testing::random_free_cell(rng, grid),
                                 testing::random_free_cell(rng, grid)};
  auto const field = solve_eikonal(grid, sources);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (!field.reached(c) || field[c] == 0.0) continue;
    EXPECT_NEAR(upwind_residual_value(field, c), field[c], 1e-9);
  }
  // The same holds under a non-uniform speed.
  auto const speed = speed_from_field(grid, obstacle_field(grid, true));
  auto const slow = solve_eikonal(grid, sources, speed);
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (!slow.reached(c) || slow[c] == 0.0) continue;
    EXPECT_NEAR(upwind_residual_value(slow, c, speed.values[c]), slow[c], 1e-9 * slow[c]);
  }
}

TEST(SolveEikonal, EveryReachedCellHasASmallerNeighbor) {
  std::mt19937_64 rng(9);
  auto const grid = testing::random_map(rng, 30, 30, 0.25);
  auto const field = solve_eikonal(grid, grid.oc_cell());
  for (CellIndex c = 0; c < grid.size(); ++c) {
    if (!field.reached(c) || field[c] == 0.0) continue;
    bool smaller = false;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        int const nx = grid.x_of(c) + dx;
        int const ny = grid.y_of(c) + dy;
        if (grid.in_bounds(nx, ny) && field[grid.index(nx, ny)] < field[c]) smaller = true;
      }
    }
    EXPECT_TRUE(smaller);
  }
}

TEST(SolveEikonal, SlowCellsDelayTheFront) {
  auto const grid = corridor(10);
  auto speed = SpeedField::uniform(grid);
  speed.values[5] = 0.5;
  auto const field = solve_eikonal(grid, std::vector<CellIndex>{0}, speed);
  EXPECT_NEAR(field[5], 6.0, 1e-12);
  EXPECT_NEAR(field[9], 10.0, 1e-12);
  // A zero speed on a free cell is clamped, never blocking.
  speed.values[5] = 0.0;
  auto const clamped = solve_eikonal(grid, std::vector<CellIndex>{0}, speed);
  EXPECT_TRUE(clamped.reached(9));
  EXPECT_GT(clamped[9], 1e5);
}

TEST(SolveEikonal, AcceptanceLimitStopsEarly) {
  auto const grid = OccupancyGrid::open(10, 10, 0);
  std::vector<CellIndex> order;
  MarchOptions options;
  options.max_accepted = 7;
  options.accepted_order = &order;
  std::vector<CellIndex> src{0};
  auto const field = solve_eikonal(grid, src, options);
  EXPECT_EQ(order.size(), 7u);
  std::size_t reached = 0;
  for (CellIndex c = 0; c < grid.size(); ++c) reached += field.reached(c);
  EXPECT_EQ(reached, 7u);
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_LE(field[order[i - 1]], field[order[i]]);
}

TEST(ExtractPath, SourceGivesSingleCell) {
  auto const grid = corridor(10);
  auto const field = solve_eikonal(grid, CellIndex{3});
  auto const path = extract_path(field, 3);
  ASSERT_EQ(path.cells.size(), 1u);
  EXPECT_EQ(path.length, 0.0);
}

TEST(ExtractPath, CorridorPath) {
  auto const grid = corridor(10);
  auto const field = solve_eikonal(grid, CellIndex{0});
  auto const path = extract_path(field, 9);
  ASSERT_EQ(path.cells.size(), 10u);
  EXPECT_EQ(path.front(), 0u);
  EXPECT_EQ(path.back(), 9u);
  EXPECT_NEAR(path.length, 9.0, 1e-12);
}

TEST(ExtractPath, UnreachedStartThrows) {
  std::vector<std::string> rows = {"O.#."};
  auto const grid = grid_from_rows(rows);
  auto const field = solve_eikonal(grid, grid.oc_cell());
  EXPECT_THROW(extract_path(field, 3), NoPath);
}

// 8-connected paths are octile: for a straight segment at angle theta they exceed the
// euclidean length by at most (cos + (sqrt2 - 1) sin) at 22.5 degrees, i.e. 8.24%.
TEST(ExtractPath, OpenGridLengthTracksFieldValue) {
  auto const grid = OccupancyGrid::open(30, 30, 0);
  std::mt19937_64 rng(3);
  auto const source = grid.index(15, 15);
  auto const field = solve_eikonal(grid, source);
  double const octile_bound = std::cos(M_PI / 8) + (std::sqrt(2.0) - 1.0) * std::sin(M_PI / 8);
  for (int i = 0; i < 200; ++i) {
    auto const from = testing::random_free_cell(rng, grid);
    auto const path = extract_path(field, from);
    EXPECT_EQ(path.front(), source);
    EXPECT_EQ(path.back(), from);
    EXPECT_GE(path.length, field[from] * 0.98 - 1e-9);
    EXPECT_LE(path.length, field[from] * octile_bound + 1e-9);
  }
}

TEST(ExtractPath, DescentTerminatesAtSourceFromRandomStarts) {
  std::mt19937_64 rng(1000);
  auto const grid = testing::random_map(rng, 50, 50, 0.25);
  std::vector<CellIndex> sources{grid.oc_cell(), testing::random_free_cell(rng, grid)};
  auto const field = solve_eikonal(grid, sources);
  int checked = 0;
  while (checked < 1000) {
    auto const from = testing::random_free_cell(rng, grid);
    if (!field.reached(from)) continue;
    ++checked;
    auto const path = extract_path(field, from);
    EXPECT_EQ(field[path.front()], 0.0);
    for (std::size_t i = 0; i < path.cells.size(); ++i) {
      ASSERT_TRUE(grid.is_free(path.cells[i]));
      if (i == 0) continue;
      EXPECT_LT(field[path.cells[i - 1]], field[path.cells[i]]);
      int const dx = std::abs(grid.x_of(path.cells[i]) - grid.x_of(path.cells[i - 1]));
      int const dy = std::abs(grid.y_of(path.cells[i]) - grid.y_of(path.cells[i - 1]));
      EXPECT_LE(std::max(dx, dy), 1);
    }
    EXPECT_NEAR(path.length, cell_sequence_length(grid, path.cells), 1e-9);
  }
}

TEST(ObstacleField, AdjacentCellIsOneCell) {
  std::vector<std::string> rows(9, std::string(9, '.'));
  rows[4][4] = '#';
  rows[0][0] = 'O';
  auto const grid = grid_from_rows(rows, 0.5);
  auto const field = obstacle_field(grid, false);
  EXPECT_NEAR(field[grid.index(5, 4)], 0.5, 1e-12);
  EXPECT_NEAR(field[grid.index(4, 3)], 0.5, 1e-12);
  EXPECT_EQ(field[grid.index(4, 4)], 0.0);
}

TEST(ObstacleField, RoomCenterMatchesBruteForceDistance) {
  for (int side : {9, 16, 21}) {
    auto const grid = OccupancyGrid::open(side, side, 0);
    auto const field = obstacle_field(grid, true);
    // Brute force: distance to the nearest cell of the implicit ring around the map.
    auto ring_distance = [&](CellIndex c) {
      double best = 1e18;
      for (int i = -1; i <= side; ++i) {
        for (Point ring : {Point{-1.0, double(i)}, Point{double(side), double(i)},
                           Point{double(i), -1.0}, Point{double(i), double(side)}}) {
          best = std::min(best, distance(grid.center(c), ring));
        }
      }
      return best;
    };
    auto const center = grid.index(side / 2, side / 2);
    EXPECT_NEAR(field[center], ring_distance(center), 1.0);
    EXPECT_NEAR(field[center], side / 2.0, 1.0);
  }
}

TEST(ObstacleField, OpenGridWithoutRingIsInvalid) {
  auto const grid = OccupancyGrid::open(5, 5, 0);
  EXPECT_THROW(obstacle_field(grid, false), InvalidInput);
}

TEST(LineOfSight, SameCellAndWalls) {
  std::vector<std::string> rows = {
      "O...#....",
      "....#....",
      "....#....",
  };
  auto const grid = grid_from_rows(rows);
  EXPECT_TRUE(line_of_sight(grid, 0, 0));
  EXPECT_FALSE(line_of_sight(grid, grid.index(1, 1), grid.index(7, 1)));
  EXPECT_TRUE(line_of_sight(grid, grid.index(0, 0), grid.index(3, 2)));
}

TEST(LineOfSight, CornerTouchBlocks) {
  // The segment from (0,0) to (2,2) passes exactly through the corners of (1,0)/(0,1);
  // supercover includes both, so one obstacle there blocks it.
  std::vector<std::string> rows = {
      "O#.",
      "...",
      "...",
  };
  auto const grid = grid_from_rows(rows);
  EXPECT_FALSE(line_of_sight(grid, grid.index(0, 0), grid.index(2, 2)) &&
               line_of_sight(grid, grid.index(0, 0), grid.index(2, 1)));
  EXPECT_FALSE(line_of_sight(grid, grid.index(0, 0), grid.index(2, 1)));
}

TEST(LineOfSight, OpenGridIsAlwaysVisible) {
  auto const grid = OccupancyGrid::open(10, 10, 0);
  for (CellIndex a = 0; a < grid.size(); ++a) {
    for (CellIndex b = 0; b < grid.size(); ++b) ASSERT_TRUE(line_of_sight(grid, a, b));
  }
}

TEST(LineOfSight, IsSymmetric) {
  std::mt19937_64 rng(17);
  auto const grid = testing::random_map(rng, 20, 20, 0.3);
  for (CellIndex a = 0; a < grid.size(); a += 3) {
    for (CellIndex b = 0; b < grid.size(); b += 5) {
      ASSERT_EQ(line_of_sight(grid, a, b), line_of_sight(grid, b, a));
    }
  }
}

TEST(PathTime, ScalesWithSpeed) {
  auto const grid = corridor(10);
  auto const field = solve_eikonal(grid, CellIndex{0});
  auto const empty = extract_path(field, 0);
  EXPECT_EQ(path_time(empty, 2.0), 0.0);
  auto const path = extract_path(field, 9);
  EXPECT_NEAR(path_time(path, 2.0), 4.5, 1e-12);
  EXPECT_NEAR(path_time(path, 4.0), path_time(path, 2.0) / 2.0, 1e-12);
  EXPECT_THROW(path_time(path, 0.0), InvalidInput);
  EXPECT_THROW(path_time(path, -1.0), InvalidInput);
}

TEST(PathTime, IndependentOfCellSize) {
  auto const grid = corridor(10, 0.25);
  auto const path = extract_path(solve_eikonal(grid, CellIndex{0}), 9);
  EXPECT_NEAR(path.length, 9 * 0.25, 1e-12);
  EXPECT_NEAR(path_time(path, 2.0), 4.5, 1e-12);
}

TEST(SealUnreachable, ClosesDisconnectedPockets) {
  std::vector<std::string> rows = {"O.#..", "..#..", "..#.."};
  auto const grid = grid_from_rows(rows);
  auto const sealed = seal_unreachable(grid);
  EXPECT_EQ(sealed.free_count(), 6u);
  EXPECT_EQ(sealed.oc_cell(), grid.oc_cell());
}

TEST(SolveEikonal, TargetsStopEarlyWithExactValues) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto const grid = testing::random_connected_map(rng, 30, 30, 0.2);
    auto const full = solve_eikonal(grid, grid.oc_cell());
    std::vector<CellIndex> targets;
    for (int k = 0; k < 3; ++k) targets.push_back(testing::random_free_cell(rng, grid));
    MarchOptions options;
    options.targets = targets;
    CellIndex const src[1] = {grid.oc_cell()};
    auto const partial = solve_eikonal(grid, src, options);
    for (auto t : targets) EXPECT_DOUBLE_EQ(partial[t], full[t]);
    double const horizon = std::max({full[targets[0]], full[targets[1]], full[targets[2]]});
    for (CellIndex c = 0; c < grid.size(); ++c) {
      if (partial.reached(c)) {
        EXPECT_DOUBLE_EQ(partial[c], full[c]);
        EXPECT_LE(partial[c], horizon + 1e-12);
      }
    }
  }
}

TEST(GridWindow, MapsCellsBothWays) {
  auto const grid = testing::rooms_map(10);
  auto const window = make_window(grid, 5, 3, 20, 12, [](CellIndex) { return true; });
  EXPECT_EQ(window.grid.width(), 16);
  EXPECT_EQ(window.grid.height(), 10);
  for (CellIndex local = 0; local < window.grid.size(); ++local) {
    auto const parent = window.to_parent(local);
    EXPECT_TRUE(window.contains(parent));
    EXPECT_EQ(window.to_local(parent), local);
    EXPECT_EQ(window.grid.is_free(local), grid.is_free(parent));
  }
  EXPECT_FALSE(window.contains(grid.index(0, 0)));
}

TEST(GridWindow, ClipsAndMasks) {
  auto const grid = grid_from_rows({"O....", ".....", "....."});
  auto const window = make_window(grid, -3, -3, 10, 10, [&](CellIndex c) { return grid.x_of(c) >= 2; });
  EXPECT_EQ(window.grid.width(), 5);
  EXPECT_EQ(window.grid.height(), 3);
  EXPECT_EQ(window.grid.free_count(), 9u);
  EXPECT_EQ(window.to_parent(window.grid.oc_cell()), grid.index(2, 0));
  EXPECT_THROW(make_window(grid, 0, 0, 1, 2, [](CellIndex) { return false; }), InvalidInput);
}

TEST(CommLink, Examples) {
  auto const grid = grid_from_rows({"O.........", "..........", ".....#....", "..........", ".........."});
  Point const p{1.0, 1.0};
  EXPECT_TRUE(comm_link(grid, p, p, 1.0));
  EXPECT_FALSE(comm_link(grid, Point{0.0, 0.0}, Point{3.0, 4.0}, 5.0));
  EXPECT_TRUE(comm_link(grid, Point{0.0, 0.0}, Point{3.0, 4.0}, 5.0001));
  EXPECT_FALSE(comm_link(grid, Point{3.0, 2.0}, Point{7.0, 2.0}, 10.0));
  EXPECT_TRUE(comm_link(grid, Point{3.0, 0.0}, Point{7.0, 0.0}, 10.0));
  EXPECT_EQ(comm_link(grid, grid.index(3, 2), grid.index(8, 3), 10.0),
            comm_link(grid, grid.index(8, 3), grid.index(3, 2), 10.0));
}

TEST(CommLink, RegionMatchesPairwiseLinks) {
  std::mt19937_64 rng(8);
  auto const grid = testing::random_connected_map(rng, 25, 25, 0.25);
  auto const region = comm_region(grid, grid.oc_cell(), 6.0);
  std::vector<bool> in(grid.size(), false);
  for (auto c : region) in[c] = true;
  for (CellIndex c = 0; c < grid.size(); ++c) {
    bool const linked = grid.is_free(c) && comm_link(grid, grid.oc_cell(), c, 6.0);
    EXPECT_EQ(in[c], linked) << c;
  }
  EXPECT_TRUE(in[grid.oc_cell()]);
}

}  // namespace
}  // namespace gatherplan
