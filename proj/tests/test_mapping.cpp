#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "unav/mapping.hpp"
#include "unav/world.hpp"

using namespace unav;

TEST_CASE("traverse_ray_2d visits cells in order with increasing t") {
  struct Visit {
    int cx, cy;
    double t_in, t_out;
  };
  std::vector<Visit> visits;
  traverse_ray_2d(0.05, 0.05, 1.0, 0.0, 0.1, 0.35,
                  [&](int cx, int cy, double t_in, double t_out) {
                    visits.push_back({cx, cy, t_in, t_out});
                    return true;
                  });
  // A cell whose entry parameter equals max_t is still visited.
  REQUIRE(visits.size() == 5);
  CHECK(visits.front().cx == 0);
  CHECK(visits.front().cy == 0);
  for (std::size_t i = 0; i < visits.size(); ++i) {
    CHECK(visits[i].cx == static_cast<int>(i));
    CHECK(visits[i].t_in <= visits[i].t_out);
    if (i > 0) CHECK(visits[i].t_in == doctest::Approx(visits[i - 1].t_out));
  }
  // First exit is the distance to the first x boundary: 0.1 - 0.05.
  CHECK(visits.front().t_out == doctest::Approx(0.05));
}

TEST_CASE("traverse_ray_2d diagonal ray crosses both axes") {
  std::vector<std::pair<int, int>> cells;
  const double inv = 1.0 / std::sqrt(2.0);
  traverse_ray_2d(0.01, 0.01, inv, inv, 0.1, 0.5,
                  [&](int cx, int cy, double, double) {
                    cells.push_back({cx, cy});
                    return true;
                  });
  REQUIRE(!cells.empty());
  // Neighboring visits differ by exactly one axis step.
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const int d = std::abs(cells[i].first - cells[i - 1].first) +
                  std::abs(cells[i].second - cells[i - 1].second);
    CHECK(d == 1);
  }
}

TEST_CASE("traverse_ray_2d stops when the callback returns false") {
  int count = 0;
  traverse_ray_2d(0.0, 0.0, 1.0, 0.0, 0.1, 10.0,
                  [&](int, int, double, double) { return ++count < 3; });
  CHECK(count == 3);
}

TEST_CASE("traverse_ray_3d visits the straight column under a vertical ray") {
  std::vector<int> zs;
  traverse_ray_3d(0.05, 0.05, 0.05, 0.0, 0.0, 1.0, 0.1, 0.45,
                  [&](int cx, int cy, int cz, double, double) {
                    CHECK(cx == 0);
                    CHECK(cy == 0);
                    zs.push_back(cz);
                    return true;
                  });
  REQUIRE(zs.size() == 6);
  for (std::size_t i = 0; i < zs.size(); ++i) CHECK(zs[i] == static_cast<int>(i));
}

TEST_CASE("occupancy grid state transitions") {
  OccupancyGrid g(0.05);
  CHECK(g.empty());
  CHECK(g.at(3, 4) == CellState::unknown);

  g.set(3, 4, CellState::free);
  CHECK(g.at(3, 4) == CellState::free);

  SUBCASE("occupied overrides free") {
    g.set(3, 4, CellState::occupied);
    CHECK(g.at(3, 4) == CellState::occupied);
  }
  SUBCASE("free never overrides occupied") {
    g.set(3, 4, CellState::occupied);
    g.set(3, 4, CellState::free);
    CHECK(g.at(3, 4) == CellState::occupied);
  }
}

TEST_CASE("occupancy grid grows to cover negative indices") {
  OccupancyGrid g(0.05);
  g.set(10, 10, CellState::free);
  g.set(-5, -7, CellState::occupied);
  CHECK(g.at(10, 10) == CellState::free);
  CHECK(g.at(-5, -7) == CellState::occupied);
  CHECK(g.min_x() <= -5);
  CHECK(g.min_y() <= -7);
  CHECK(g.at(100, 100) == CellState::unknown);  // outside stored extent
}

TEST_CASE("world_to_cell floors toward negative infinity") {
  OccupancyGrid g(0.05);
  CHECK(g.world_to_cell(0.12) == 2);
  CHECK(g.world_to_cell(-0.01) == -1);
  CHECK(g.cell_center(2) == doctest::Approx(0.125));
}

TEST_CASE("known_cells and known_fraction") {
  OccupancyGrid g(1.0);
  CHECK(g.known_fraction() == 0.0);
  g.set(0, 0, CellState::free);
  g.set(1, 1, CellState::occupied);
  CHECK(g.known_cells() == 2);
  // Bounding box of known cells is 2x2.
  CHECK(g.known_fraction() == doctest::Approx(0.5));
}

TEST_CASE("dump uses '.' unknown, ' ' free, '#' occupied") {
  OccupancyGrid g(1.0);
  g.set(0, 0, CellState::free);
  g.set(1, 0, CellState::occupied);
  const std::string text = g.dump();
  CHECK(text.find('#') != std::string::npos);
  CHECK(text.find(' ') != std::string::npos);
}

TEST_CASE("3-D occupancy volume mirrors the 2-D contract") {
  OccupancyGrid3 v(1.0);
  CHECK(v.empty());
  v.set(1, 2, 3, CellState::free);
  v.set(1, 2, 3, CellState::occupied);
  v.set(1, 2, 3, CellState::free);
  CHECK(v.at(1, 2, 3) == CellState::occupied);
  v.set(-2, 0, 1, CellState::free);
  CHECK(v.at(-2, 0, 1) == CellState::free);
  CHECK(v.at(1, 2, 3) == CellState::occupied);
}

namespace {

// One-view panorama looking along +y with a uniform wall at `depth` meters.
PanoramaObservation wall_panorama(double depth) {
  PanoramaObservation pano;
  pano.intrinsics = default_intrinsics();
  View view;
  view.yaw_offset = 0.0;
  view.width = pano.intrinsics.width;
  view.height = pano.intrinsics.height;
  view.depth.assign(static_cast<std::size_t>(view.width) * view.height, depth);
  view.semantic.assign(view.depth.size(), 0);
  pano.views["front"] = view;
  return pano;
}

}  // namespace

TEST_CASE("integrate_panorama frees cells up to the hit and marks the hit") {
  OccupancyGrid g(0.05);
  Pose pose;
  pose.x = 1.0;
  pose.y = 1.0;
  integrate_panorama(g, pose, wall_panorama(2.0), 10.0);

  // Straight ahead: free space for the first two meters, then the wall.
  CHECK(g.at_world(1.0, 1.5) == CellState::free);
  CHECK(g.at_world(1.0, 2.5) == CellState::free);
  CHECK(g.at_world(1.0, 3.05) == CellState::occupied);
  // Behind the agent stays unknown (single forward view).
  CHECK(g.at_world(1.0, 0.2) == CellState::unknown);
}

TEST_CASE("integrate_panorama marks no-return rays free to max range") {
  OccupancyGrid g(0.05);
  Pose pose;
  pose.x = 1.0;
  pose.y = 1.0;
  integrate_panorama(g, pose, wall_panorama(kNoReturn), 4.0);
  CHECK(g.at_world(1.0, 4.5) == CellState::free);
  int occupied = 0;
  for (int cy = g.min_y(); cy < g.min_y() + g.height(); ++cy) {
    for (int cx = g.min_x(); cx < g.min_x() + g.width(); ++cx) {
      occupied += g.at(cx, cy) == CellState::occupied;
    }
  }
  CHECK(occupied == 0);
}
