#include "unav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <tuple>

namespace unav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Region {
  int min_x, min_y, width, height;
  bool contains(int cx, int cy) const {
    return cx >= min_x && cy >= min_y && cx < min_x + width &&
           cy < min_y + height;
  }
  std::size_t index(int cx, int cy) const {
    return (cy - min_y) * static_cast<std::size_t>(width) + (cx - min_x);
  }
};

Region planning_region(const OccupancyGrid& grid,
                       const std::vector<Point3>& points) {
  int x0, y0, x1, y1;
  if (!grid.empty()) {
    x0 = grid.min_x();
    y0 = grid.min_y();
    x1 = grid.min_x() + grid.width() - 1;
    y1 = grid.min_y() + grid.height() - 1;
  } else {
    x0 = y0 = std::numeric_limits<int>::max();
    x1 = y1 = std::numeric_limits<int>::min();
  }
  for (const Point3& p : points) {
    const int cx = grid.world_to_cell(p.x);
    const int cy = grid.world_to_cell(p.y);
    x0 = std::min(x0, cx);
    y0 = std::min(y0, cy);
    x1 = std::max(x1, cx);
    y1 = std::max(y1, cy);
  }
  const int margin = 2;
  return Region{x0 - margin, y0 - margin, x1 - x0 + 1 + 2 * margin,
                y1 - y0 + 1 + 2 * margin};
}

/// Blocked mask after Euclidean obstacle inflation.
std::vector<std::uint8_t> inflate(const OccupancyGrid& grid, const Region& r,
                                  double radius) {
  std::vector<std::uint8_t> blocked(
      static_cast<std::size_t>(r.width) * r.height, 0);
  const double res = grid.resolution();
  const int rad_cells = static_cast<int>(std::floor(radius / res + 1e-9));
  std::vector<std::pair<int, int>> disk;
  for (int dy = -rad_cells; dy <= rad_cells; ++dy) {
    for (int dx = -rad_cells; dx <= rad_cells; ++dx) {
      if (std::sqrt(static_cast<double>(dx * dx + dy * dy)) * res <=
          radius + 1e-9) {
        disk.emplace_back(dx, dy);
      }
    }
  }
  for (int cy = r.min_y; cy < r.min_y + r.height; ++cy) {
    for (int cx = r.min_x; cx < r.min_x + r.width; ++cx) {
      if (grid.at(cx, cy) != CellState::occupied) continue;
      for (const auto& [dx, dy] : disk) {
        if (r.contains(cx + dx, cy + dy)) {
          blocked[r.index(cx + dx, cy + dy)] = 1;
        }
      }
    }
  }
  return blocked;
}

}  // namespace

DistanceField fmm_field_multi(
    const OccupancyGrid& grid,
    const std::vector<std::pair<Point3, double>>& seeds,
    double inflate_radius, const std::vector<Point3>& cover) {
  std::vector<Point3> pts = cover;
  for (const auto& s : seeds) pts.push_back(s.first);
  const Region r = planning_region(grid, pts);
  const std::vector<std::uint8_t> blocked = inflate(grid, r, inflate_radius);

  DistanceField field;
  field.min_x = r.min_x;
  field.min_y = r.min_y;
  field.width = r.width;
  field.height = r.height;
  field.resolution = grid.resolution();
  field.source_cx = grid.world_to_cell(seeds.front().first.x);
  field.source_cy = grid.world_to_cell(seeds.front().first.y);
  field.dist.assign(static_cast<std::size_t>(r.width) * r.height, kInf);

  const double h = grid.resolution();
  using Item = std::pair<double, std::pair<int, int>>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  std::vector<std::uint8_t> frozen(field.dist.size(), 0);

  bool any_seed = false;
  for (const auto& [p, d0] : seeds) {
    const int cx = grid.world_to_cell(p.x);
    const int cy = grid.world_to_cell(p.y);
    if (!r.contains(cx, cy) || blocked[r.index(cx, cy)]) continue;
    any_seed = true;
    if (d0 < field.dist[r.index(cx, cy)]) {
      field.dist[r.index(cx, cy)] = d0;
      heap.push({d0, {cx, cy}});
    }
  }
  if (!any_seed) {
    throw Error(ErrorCode::SourceBlocked, "FMM source inside an obstacle");
  }

  const auto is_blocked = [&](int cx, int cy) {
    return r.contains(cx, cy) && blocked[r.index(cx, cy)] != 0;
  };
  const auto dist_at = [&](int cx, int cy) {
    return r.contains(cx, cy) ? field.dist[r.index(cx, cy)] : kInf;
  };
  // Upwind value along +/-(ux,uy). Legs of the rotated stencil are diagonal
  // moves: they are rejected when either straddled cell is blocked, so the
  // front never cuts an obstacle corner or leaks through thin walls.
  const auto leg_min = [&](int cx, int cy, int ux, int uy) {
    double best = kInf;
    for (int s = -1; s <= 1; s += 2) {
      if (ux != 0 && uy != 0 && (is_blocked(cx + s * ux, cy) ||
                                 is_blocked(cx, cy + s * uy))) {
        continue;
      }
      best = std::min(best, dist_at(cx + s * ux, cy + s * uy));
    }
    return best;
  };
  const auto stencil = [&](int cx, int cy, int ax, int ay, int bx, int by,
                           double hs) {
    double a = leg_min(cx, cy, ax, ay);
    double b = leg_min(cx, cy, bx, by);
    if (a > b) std::swap(a, b);
    if (a == kInf) return kInf;
    if (b - a >= hs) return a + hs;
    const double s = 2.0 * hs * hs - (b - a) * (b - a);
    return 0.5 * (a + b + std::sqrt(s));
  };
  // Multistencil update: the axis-aligned cross plus the 45-degree rotated
  // cross (spacing h*sqrt(2)). The second stencil resolves characteristics
  // running diagonally, which the axis cross alone smears by O(h) at every
  // obstacle corner.
  const double hd = h * std::sqrt(2.0);
  const auto solve = [&](int cx, int cy) {
    return std::min(stencil(cx, cy, 1, 0, 0, 1, h),
                    stencil(cx, cy, 1, 1, 1, -1, hd));
  };

  while (!heap.empty()) {
    const auto [d, cell] = heap.top();
    heap.pop();
    const auto [cx, cy] = cell;
    const std::size_t i = r.index(cx, cy);
    if (frozen[i] || d > field.dist[i]) continue;
    frozen[i] = 1;
    // Diagonal neighbors relax too: their rotated stencil reads this cell.
    static const int nb[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                 {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
    for (const auto& n : nb) {
      const int nx = cx + n[0], ny = cy + n[1];
      if (!r.contains(nx, ny)) continue;
      const std::size_t j = r.index(nx, ny);
      if (frozen[j] || blocked[j]) continue;
      const double t = solve(nx, ny);
      if (t < field.dist[j]) {
        field.dist[j] = t;
        heap.push({t, {nx, ny}});
      }
    }
  }
  return field;
}

DistanceField fmm_field(const OccupancyGrid& grid, const Point3& source,
                        double inflate_radius,
                        const std::vector<Point3>& cover) {
  return fmm_field_multi(grid, {{source, 0.0}}, inflate_radius, cover);
}

PlanPath extract_path(const DistanceField& field, const Point3& start) {
  const double res = field.resolution;
  int cx = static_cast<int>(std::floor(start.x / res));
  int cy = static_cast<int>(std::floor(start.y / res));
  if (!std::isfinite(field.at(cx, cy))) {
    throw Error(ErrorCode::Unreachable, "start not covered by distance field");
  }

  std::vector<std::pair<int, int>> cells = {{cx, cy}};
  double cur = field.at(cx, cy);
  const std::size_t max_steps =
      static_cast<std::size_t>(field.width) * field.height + 4;
  while (cur > 0.0 && cells.size() < max_steps) {
    int best_x = cx, best_y = cy;
    double best = cur;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const double v = field.at(cx + dx, cy + dy);
        if (v < best) {
          best = v;
          best_x = cx + dx;
          best_y = cy + dy;
        }
      }
    }
    if (best >= cur) break;  // local minimum: as close to the source as we get
    cx = best_x;
    cy = best_y;
    cur = best;
    cells.emplace_back(cx, cy);
  }

  PlanPath path;
  auto center = [&](const std::pair<int, int>& c) {
    return Point3::world((c.first + 0.5) * res, (c.second + 0.5) * res,
                         start.z);
  };
  if (cells.size() == 1) {
    path.waypoints = {start};
    return path;
  }
  // Collinearity decimation, 1e-3 rad tolerance.
  path.waypoints.push_back(center(cells.front()));
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
    const Point3 a = path.waypoints.back();
    const Point3 b = center(cells[i]);
    const Point3 c = center(cells[i + 1]);
    const double a1 = std::atan2(b.y - a.y, b.x - a.x);
    const double a2 = std::atan2(c.y - b.y, c.x - b.x);
    double diff = std::abs(a1 - a2);
    if (diff > kPi) diff = 2.0 * kPi - diff;
    if (diff > 1e-3) path.waypoints.push_back(b);
  }
  path.waypoints.push_back(center(cells.back()));
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    path.length += distance(path.waypoints[i - 1], path.waypoints[i]);
  }
  return path;
}

namespace {

/// Nearest traversable cell center within max_radius of p, or nullopt.
/// Deterministic: candidates ordered by (distance, cy, cx).
std::optional<Point3> nearest_traversable(const OccupancyGrid& grid,
                                          const Point3& p,
                                          double inflate_radius,
                                          double max_radius) {
  const double res = grid.resolution();
  const int pc_x = grid.world_to_cell(p.x);
  const int pc_y = grid.world_to_cell(p.y);
  const int rad = static_cast<int>(std::ceil(max_radius / res)) + 1;
  const Region r = planning_region(
      grid, {Point3::world(p.x - max_radius, p.y - max_radius, p.z),
             Point3::world(p.x + max_radius, p.y + max_radius, p.z)});
  const std::vector<std::uint8_t> blocked = inflate(grid, r, inflate_radius);

  std::vector<std::tuple<double, int, int>> candidates;
  for (int dy = -rad; dy <= rad; ++dy) {
    for (int dx = -rad; dx <= rad; ++dx) {
      const int cx = pc_x + dx, cy = pc_y + dy;
      if (!r.contains(cx, cy) || blocked[r.index(cx, cy)]) continue;
      const double wx = (cx + 0.5) * res, wy = (cy + 0.5) * res;
      const double d = std::hypot(wx - p.x, wy - p.y);
      if (d <= max_radius) candidates.emplace_back(d, cy, cx);
    }
  }
  if (candidates.empty()) return std::nullopt;
  const auto [d, cy, cx] = *std::min_element(candidates.begin(),
                                             candidates.end());
  return Point3::world((cx + 0.5) * res, (cy + 0.5) * res, p.z);
}

}  // namespace

PlanPath plan_to(const OccupancyGrid& grid, const Pose& start,
                 const Point3& target, double inflate_radius) {
  Point3 from = start.position();
  // The agent may sit inside the inflation band next to a wall; nudge the
  // descent start to the closest traversable cell.
  {
    const Region sr = planning_region(grid, {from});
    const std::vector<std::uint8_t> sb = inflate(grid, sr, inflate_radius);
    const int sx = grid.world_to_cell(from.x);
    const int sy = grid.world_to_cell(from.y);
    if (sr.contains(sx, sy) && sb[sr.index(sx, sy)]) {
      auto moved = nearest_traversable(grid, from, inflate_radius, 0.5);
      if (!moved) {
        throw Error(ErrorCode::SourceBlocked, "start inside inflated obstacle");
      }
      from = *moved;
    }
  }

  // Wavefront from the start; the goal is the target cell itself when it is
  // reachable, else the reachable cell nearest the target within 1 m. Picking
  // by reachability (not just traversability) avoids retargets into sealed
  // pockets of unexplored space behind inflated walls.
  const DistanceField field = fmm_field(grid, from, inflate_radius, {target});
  const double res = grid.resolution();
  const int tx = grid.world_to_cell(target.x);
  const int ty = grid.world_to_cell(target.y);
  Point3 goal = target;
  if (!std::isfinite(field.at(tx, ty))) {
    const int rad = static_cast<int>(std::ceil(1.0 / res)) + 1;
    std::vector<std::tuple<double, int, int>> candidates;
    for (int dy = -rad; dy <= rad; ++dy) {
      for (int dx = -rad; dx <= rad; ++dx) {
        const int cx = tx + dx, cy = ty + dy;
        if (!std::isfinite(field.at(cx, cy))) continue;
        const double wx = (cx + 0.5) * res, wy = (cy + 0.5) * res;
        const double d = std::hypot(wx - target.x, wy - target.y);
        if (d <= 1.0) candidates.emplace_back(d, cy, cx);
      }
    }
    if (candidates.empty()) {
      throw Error(ErrorCode::NoNearbyTraversable,
                  "no reachable traversable cell within 1 m of the target");
    }
    const auto [d, cy, cx] = *std::min_element(candidates.begin(),
                                               candidates.end());
    goal = Point3::world((cx + 0.5) * res, (cy + 0.5) * res, target.z);
  }

  PlanPath path = extract_path(field, goal);
  std::reverse(path.waypoints.begin(), path.waypoints.end());
  // The descent ends at the start cell's center; anchor the first waypoint to
  // the actual pose so controllers do not chase a phantom offset.
  if (!path.waypoints.empty()) path.waypoints.front() = from;
  path.length = 0.0;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    path.length += distance(path.waypoints[i - 1], path.waypoints[i]);
  }
  return path;
}

// ---------------------------------------------------------------------------
// 3-D visibility graph
// ---------------------------------------------------------------------------

namespace {

struct Blocked3 {
  const OccupancyGrid3* grid;
  int rad_cells;
  std::vector<std::tuple<int, int, int>> ball;

  bool operator()(int cx, int cy, int cz) const {
    for (const auto& [dx, dy, dz] : ball) {
      if (grid->at(cx + dx, cy + dy, cz + dz) == CellState::occupied) {
        return true;
      }
    }
    return false;
  }
};

Blocked3 make_blocked3(const OccupancyGrid3& grid, double radius) {
  Blocked3 b;
  b.grid = &grid;
  const double res = grid.resolution();
  b.rad_cells = static_cast<int>(std::floor(radius / res + 1e-9));
  for (int dz = -b.rad_cells; dz <= b.rad_cells; ++dz) {
    for (int dy = -b.rad_cells; dy <= b.rad_cells; ++dy) {
      for (int dx = -b.rad_cells; dx <= b.rad_cells; ++dx) {
        if (std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz)) * res <=
            radius + 1e-9) {
          b.ball.emplace_back(dx, dy, dz);
        }
      }
    }
  }
  return b;
}

// Inline Amanatides-Woo voxel walk; this sits on the hot path of the
// visibility test, so it avoids the std::function-based traverse_ray_3d.
bool segment_free_3d(const OccupancyGrid3& grid, const Blocked3& blocked,
                     const Point3& a, const Point3& b) {
  const double len = distance(a, b);
  if (len < 1e-12) return true;
  const double res = grid.resolution();
  const double dx = (b.x - a.x) / len, dy = (b.y - a.y) / len,
               dz = (b.z - a.z) / len;
  int cx = static_cast<int>(std::floor(a.x / res));
  int cy = static_cast<int>(std::floor(a.y / res));
  int cz = static_cast<int>(std::floor(a.z / res));
  const auto axis = [&](double o, double d, int c, int& step, double& tmax,
                        double& tdelta) {
    if (std::abs(d) < 1e-12) {
      step = 0;
      tmax = kInf;
      tdelta = kInf;
      return;
    }
    step = d > 0 ? 1 : -1;
    const double edge = d > 0 ? (c + 1) * res : c * res;
    tmax = (edge - o) / d;
    tdelta = res / std::abs(d);
  };
  int sx, sy, sz;
  double tx, ty, tz, dtx, dty, dtz;
  axis(a.x, dx, cx, sx, tx, dtx);
  axis(a.y, dy, cy, sy, ty, dty);
  axis(a.z, dz, cz, sz, tz, dtz);
  double t = 0.0;
  while (t <= len + 1e-12) {
    if (blocked(cx, cy, cz)) return false;
    if (tx <= ty && tx <= tz) {
      t = tx;
      tx += dtx;
      cx += sx;
    } else if (ty <= tz) {
      t = ty;
      ty += dty;
      cy += sy;
    } else {
      t = tz;
      tz += dtz;
      cz += sz;
    }
  }
  return true;
}

}  // namespace

PlanPath plan_3d(const OccupancyGrid3& voxels, const Point3& start,
                 const Point3& goal, double inflate_radius) {
  const Blocked3 blocked = make_blocked3(voxels, inflate_radius);
  auto cell_of = [&](const Point3& p) {
    return std::tuple<int, int, int>{voxels.world_to_cell(p.x),
                                     voxels.world_to_cell(p.y),
                                     voxels.world_to_cell(p.z)};
  };
  {
    const auto [sx, sy, sz] = cell_of(start);
    const auto [gx, gy, gz] = cell_of(goal);
    if (blocked(sx, sy, sz) || blocked(gx, gy, gz)) {
      throw Error(ErrorCode::Unreachable, "3-D endpoint inside an obstacle");
    }
  }

  // Node set: start, goal, and free voxels diagonally adjacent to an
  // inflated-obstacle corner. Corners are collected in lexicographic
  // (z, y, x) order so ties break deterministically. Candidates are limited
  // to a corridor around the endpoints: detours beyond 10 m off the
  // start-goal bounding box never pay for themselves in these worlds, and
  // the pruning keeps partially-observed belief volumes (whose ragged
  // surfaces sprout corners everywhere) tractable.
  std::vector<Point3> nodes = {start, goal};
  const int pad = 1;
  const int margin =
      static_cast<int>(std::ceil(10.0 / voxels.resolution()));
  const auto [scx, scy, scz] = cell_of(start);
  const auto [gcx, gcy, gcz] = cell_of(goal);
  const int bx0 = std::min(scx, gcx) - margin, bx1 = std::max(scx, gcx) + margin;
  const int by0 = std::min(scy, gcy) - margin, by1 = std::max(scy, gcy) + margin;
  const int bz0 = std::min(scz, gcz) - margin, bz1 = std::max(scz, gcz) + margin;
  for (int cz = voxels.min_z() - pad; cz < voxels.min_z() + voxels.nz() + pad;
       ++cz) {
    if (cz < bz0 || cz > bz1) continue;
    for (int cy = voxels.min_y() - pad;
         cy < voxels.min_y() + voxels.ny() + pad; ++cy) {
      if (cy < by0 || cy > by1) continue;
      for (int cx = voxels.min_x() - pad;
           cx < voxels.min_x() + voxels.nx() + pad; ++cx) {
        if (cx < bx0 || cx > bx1) continue;
        if (blocked(cx, cy, cz)) continue;
        bool corner = false;
        for (int sz = -1; sz <= 1 && !corner; sz += 2) {
          for (int sy = -1; sy <= 1 && !corner; sy += 2) {
            for (int sx = -1; sx <= 1 && !corner; sx += 2) {
              if (blocked(cx + sx, cy + sy, cz + sz) &&
                  !blocked(cx + sx, cy, cz) && !blocked(cx, cy + sy, cz) &&
                  !blocked(cx, cy, cz + sz)) {
                corner = true;
              }
            }
          }
        }
        if (corner) {
          nodes.push_back(Point3::world(voxels.cell_center(cx),
                                        voxels.cell_center(cy),
                                        voxels.cell_center(cz)));
        }
      }
    }
  }

  const std::size_t n = nodes.size();
  std::vector<double> dist(n, kInf);
  std::vector<int> prev(n, -1);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[0] = 0.0;
  heap.push({0.0, 0});
  std::vector<std::uint8_t> done(n, 0);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u] || d > dist[u]) continue;
    done[u] = 1;
    if (u == 1) break;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u || done[v]) continue;
      // Relaxation test first: the visibility walk is only worth running
      // when the edge would actually improve the tentative distance.
      const double nd = d + distance(nodes[u], nodes[v]);
      if (nd >= dist[v] - 1e-12) continue;
      if (!segment_free_3d(voxels, blocked, nodes[u], nodes[v])) continue;
      dist[v] = nd;
      prev[v] = static_cast<int>(u);
      heap.push({nd, v});
    }
  }
  if (!std::isfinite(dist[1])) {
    throw Error(ErrorCode::Unreachable, "3-D goal disconnected from start");
  }

  PlanPath path;
  std::vector<Point3> rev;
  for (int u = 1; u != -1; u = prev[u]) rev.push_back(nodes[u]);
  path.waypoints.assign(rev.rbegin(), rev.rend());
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    path.length += distance(path.waypoints[i - 1], path.waypoints[i]);
  }
  return path;
}

Point3 direction_constrained_waypoint(const Pose& /*start_pose*/,
                                      const Pose& current_pose,
                                      const Point3& goal_direction,
                                      const View& front_depth) {
  double min_depth = kNoReturn;
  for (double d : front_depth.depth) {
    if (std::isfinite(d)) min_depth = std::min(min_depth, d);
  }
  if (std::isfinite(min_depth) && min_depth < 1.0) {
    throw Error(ErrorCode::BlockedAhead, "obstacle closer than 1 m ahead");
  }
  const double reach =
      std::isfinite(min_depth) ? std::min(5.0, 0.5 * min_depth) : 5.0;
  const double norm = std::sqrt(goal_direction.x * goal_direction.x +
                                goal_direction.y * goal_direction.y +
                                goal_direction.z * goal_direction.z);
  Point3 wp = Point3::world(current_pose.x + goal_direction.x / norm * reach,
                            current_pose.y + goal_direction.y / norm * reach,
                            current_pose.z + goal_direction.z / norm * reach);
  wp.z = std::clamp(wp.z, 2.0, 40.0);
  return wp;
}

bool path_collision_free(const OccupancyGrid& grid, const PlanPath& path,
                         double inflate_radius) {
  if (path.waypoints.size() < 2) return true;
  const Region r = planning_region(grid, path.waypoints);
  const std::vector<std::uint8_t> blocked = inflate(grid, r, inflate_radius);
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    const Point3& a = path.waypoints[i - 1];
    const Point3& b = path.waypoints[i];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len < 1e-12) continue;
    bool ok = true;
    traverse_ray_2d(a.x, a.y, (b.x - a.x) / len, (b.y - a.y) / len,
                    grid.resolution(), len,
                    [&](int cx, int cy, double, double) {
                      if (r.contains(cx, cy) && blocked[r.index(cx, cy)]) {
                        ok = false;
                        return false;
                      }
                      return true;
                    });
    if (!ok) return false;
  }
  return true;
}

}  // namespace unav
