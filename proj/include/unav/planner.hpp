#pragma once

#include <vector>

#include "unav/geometry.hpp"
#include "unav/mapping.hpp"
#include "unav/world.hpp"

namespace unav {

inline constexpr double kGroundInflation = 0.18;
inline constexpr double kAerialInflation = 0.5;

/// First-order upwind Fast-Marching distance field on a 2-D occupancy grid.
/// Distances are meters; occupied/inflated cells hold infinity. Unknown
/// cells travel at unit speed so targets in unexplored space stay reachable.
struct DistanceField {
  int min_x = 0, min_y = 0;
  int width = 0, height = 0;
  double resolution = 0.0;
  int source_cx = 0, source_cy = 0;
  std::vector<double> dist;

  double at(int cx, int cy) const {
    if (cx < min_x || cy < min_y || cx >= min_x + width ||
        cy >= min_y + height) {
      return std::numeric_limits<double>::infinity();
    }
    return dist[(cy - min_y) * static_cast<std::size_t>(width) + (cx - min_x)];
  }
  double at_world(double x, double y) const {
    return at(static_cast<int>(std::floor(x / resolution)),
              static_cast<int>(std::floor(y / resolution)));
  }
};

struct PlanPath {
  std::vector<Point3> waypoints;
  double length = 0.0;
};

DistanceField fmm_field(const OccupancyGrid& grid, const Point3& source,
                        double inflate_radius = kGroundInflation,
                        const std::vector<Point3>& cover = {});

/// Multi-seed variant: each seed starts at the given distance value. Used
/// for multi-floor geodesics where stair landings carry accumulated cost.
DistanceField fmm_field_multi(
    const OccupancyGrid& grid,
    const std::vector<std::pair<Point3, double>>& seeds,
    double inflate_radius, const std::vector<Point3>& cover = {});

/// Steepest-descent walk from start down to the field source, one cell per
/// step, with collinear waypoint decimation (tolerance 1e-3 rad).
PlanPath extract_path(const DistanceField& field, const Point3& start);

/// fmm_field from the target plus extract_path from the start pose. An
/// occupied target is retargeted to the nearest traversable cell within 1 m.
PlanPath plan_to(const OccupancyGrid& grid, const Pose& start,
                 const Point3& target,
                 double inflate_radius = kGroundInflation);

/// Visibility-graph search over 3-D free space: nodes are start, goal and
/// outer-corner voxels of inflated obstacles; edges are collision-free
/// segments; uniform-cost search with lexicographic tie-break.
PlanPath plan_3d(const OccupancyGrid3& voxels, const Point3& start,
                 const Point3& goal, double inflate_radius = kAerialInflation);

/// Aerial fallback when visual grounding fails: a waypoint at
/// min(5 m, 0.5 x min finite front depth) along the goal bearing, altitude
/// clamped to the flight corridor [2 m, 40 m].
Point3 direction_constrained_waypoint(const Pose& start_pose,
                                      const Pose& current_pose,
                                      const Point3& goal_direction,
                                      const View& front_depth);

/// True when every segment of the path stays on traversable cells.
bool path_collision_free(const OccupancyGrid& grid, const PlanPath& path,
                         double inflate_radius = kGroundInflation);

}  // namespace unav
