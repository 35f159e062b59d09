#include "unav/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unav/planner.hpp"

namespace unav {

using ordered_json = nlohmann::ordered_json;

const char* to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::VLN: return "VLN";
    case TaskFamily::ObjectNav: return "ObjectNav";
    case TaskFamily::EQA: return "EQA";
    case TaskFamily::AerialVLN: return "AerialVLN";
  }
  return "ObjectNav";
}

TaskFamily task_family_from_string(const std::string& s) {
  if (s == "VLN") return TaskFamily::VLN;
  if (s == "ObjectNav") return TaskFamily::ObjectNav;
  if (s == "EQA") return TaskFamily::EQA;
  if (s == "AerialVLN") return TaskFamily::AerialVLN;
  throw Error(ErrorCode::SchemaMismatch, "unknown task family " + s);
}

const char* to_string(LowLevelAction a) {
  switch (a) {
    case LowLevelAction::move_forward: return "move_forward";
    case LowLevelAction::turn_left: return "turn_left";
    case LowLevelAction::turn_right: return "turn_right";
    case LowLevelAction::stop: return "stop";
  }
  return "stop";
}

double direction_to_yaw_offset(const std::string& dir) {
  if (dir == "front") return 0.0;
  if (dir == "left") return 90.0;
  if (dir == "back") return 180.0;
  if (dir == "right") return 270.0;
  if (dir == "down") return 0.0;
  throw Error(ErrorCode::SchemaMismatch, "unknown direction " + dir);
}

Intrinsics default_intrinsics() {
  Intrinsics k;
  k.width = 128;
  k.height = 96;
  k.fx = 64.0;  // 90 degree horizontal FOV
  k.fy = 64.0;
  k.cx = 64.0;
  k.cy = 48.0;
  return k;
}

namespace {

bool pose_valid(const WorldModel& world, const Pose& pose) {
  if (world.variant == WorldVariant::aerial3d) {
    const int cx = static_cast<int>(std::floor(pose.x / world.voxel_resolution));
    const int cy = static_cast<int>(std::floor(pose.y / world.voxel_resolution));
    const int cz = static_cast<int>(std::floor(pose.z / world.voxel_resolution));
    if (!world.voxels.in_bounds(cx, cy, cz)) return true;  // open sky
    return world.voxels.occupied[world.voxels.index(cx, cy, cz)] == 0;
  }
  if (pose.floor_id < 0 ||
      pose.floor_id >= static_cast<int>(world.floors.size())) {
    return false;
  }
  const SemanticGrid2D& g = world.floors[pose.floor_id];
  const int cx = static_cast<int>(std::floor(pose.x / world.resolution));
  const int cy = static_cast<int>(std::floor(pose.y / world.resolution));
  return g.in_bounds(cx, cy) && !g.at(cx, cy).occupied;
}

View render_view_ground(const WorldModel& world, const Pose& pose,
                        double yaw_offset) {
  const Intrinsics k = default_intrinsics();
  View view;
  view.yaw_offset = yaw_offset;
  view.width = k.width;
  view.height = k.height;
  view.depth.assign(static_cast<std::size_t>(k.width) * k.height, kNoReturn);
  view.semantic.assign(static_cast<std::size_t>(k.width) * k.height, 0);

  const SemanticGrid2D& grid = world.floors[pose.floor_id];
  const double total_yaw = normalize_yaw(pose.yaw + yaw_offset);
  for (int u = 0; u < k.width; ++u) {
    const double xc = (u + 0.5 - k.cx) / k.fx;
    const double norm = std::sqrt(xc * xc + 1.0);
    const Point3 dir =
        cam_dir_to_world(Point3::cam(xc / norm, 0.0, 1.0 / norm), total_yaw);
    double t_hit = -1.0;
    int label = 0;
    traverse_ray_2d(pose.x, pose.y, dir.x, dir.y, world.resolution,
                    kGroundMaxRange,
                    [&](int cx, int cy, double t_entry, double) {
                      if (!grid.in_bounds(cx, cy)) return true;
                      const GridCell& cell = grid.at(cx, cy);
                      if (cell.occupied) {
                        t_hit = t_entry;
                        label = cell.label_id;
                        return false;
                      }
                      return true;
                    });
    if (t_hit < 0.0 || t_hit > kGroundMaxRange) continue;
    const double z = t_hit / norm;
    // Fixed wall-height band so boxes are 2-D intervals.
    const double v_top = k.cy + k.fy * (kCameraHeight - kWallHeight) / z;
    const double v_bot = k.cy + k.fy * kCameraHeight / z;
    const int v0 = std::max(0, static_cast<int>(std::floor(v_top)));
    const int v1 = std::min(k.height, static_cast<int>(std::ceil(v_bot)));
    for (int v = v0; v < v1; ++v) {
      view.depth[v * k.width + u] = z;
      view.semantic[v * k.width + u] = label;
    }
  }
  return view;
}

View render_view_aerial(const WorldModel& world, const Pose& pose,
                        double yaw_offset, double pitch) {
  const Intrinsics k = default_intrinsics();
  View view;
  view.yaw_offset = yaw_offset;
  view.pitch = pitch;
  view.width = k.width;
  view.height = k.height;
  view.depth.assign(static_cast<std::size_t>(k.width) * k.height, kNoReturn);
  view.semantic.assign(static_cast<std::size_t>(k.width) * k.height, 0);

  const double total_yaw = normalize_yaw(pose.yaw + yaw_offset);
  const VoxelGrid& vox = world.voxels;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double xc = (u + 0.5 - k.cx) / k.fx;
      const double yc = (v + 0.5 - k.cy) / k.fy;
      const double norm = std::sqrt(xc * xc + yc * yc + 1.0);
      const Point3 dir = cam_dir_to_world(
          Point3::cam(xc / norm, yc / norm, 1.0 / norm), total_yaw, pitch);
      double t_hit = -1.0;
      int label = 0;
      traverse_ray_3d(pose.x, pose.y, pose.z, dir.x, dir.y, dir.z,
                      world.voxel_resolution, kAerialMaxRange,
                      [&](int cx, int cy, int cz, double t_entry, double) {
                        if (cz < 0) {  // ground plane
                          t_hit = t_entry;
                          label = 0;
                          return false;
                        }
                        if (!vox.in_bounds(cx, cy, cz)) return true;
                        const std::size_t i = vox.index(cx, cy, cz);
                        if (vox.occupied[i]) {
                          t_hit = t_entry;
                          label = vox.label.empty() ? 0 : vox.label[i];
                          return false;
                        }
                        return true;
                      });
      if (t_hit < 0.0 || t_hit > kAerialMaxRange) continue;
      view.depth[v * k.width + u] = t_hit / norm;
      view.semantic[v * k.width + u] = label;
    }
  }
  return view;
}

}  // namespace

View render_view(const WorldModel& world, const Pose& pose, double yaw_offset,
                 double pitch) {
  if (!pose_valid(world, pose)) {
    throw Error(ErrorCode::InvalidPose, "pose not in a free cell");
  }
  if (world.variant == WorldVariant::aerial3d) {
    return render_view_aerial(world, pose, yaw_offset, pitch);
  }
  return render_view_ground(world, pose, yaw_offset);
}

PanoramaObservation render_panorama(const WorldModel& world,
                                    const Pose& pose) {
  PanoramaObservation pano;
  pano.intrinsics = default_intrinsics();
  pano.views["front"] = render_view(world, pose, 0.0);
  pano.views["left"] = render_view(world, pose, 90.0);
  pano.views["right"] = render_view(world, pose, 270.0);
  pano.views["back"] = render_view(world, pose, 180.0);
  if (world.variant == WorldVariant::aerial3d) {
    pano.views["down"] = render_view(world, pose, 0.0, -90.0);
  }
  return pano;
}

AgentState step(const WorldModel& world, const AgentState& agent,
                LowLevelAction a) {
  if (agent.stopped) {
    throw Error(ErrorCode::EpisodeTerminated, "action after stop");
  }
  AgentState next = agent;
  next.collided_last_step = false;
  switch (a) {
    case LowLevelAction::turn_left:
      next.pose.yaw = normalize_yaw(agent.pose.yaw + kTurnStep);
      break;
    case LowLevelAction::turn_right:
      next.pose.yaw = normalize_yaw(agent.pose.yaw - kTurnStep);
      break;
    case LowLevelAction::stop:
      next.stopped = true;
      break;
    case LowLevelAction::move_forward: {
      double hx, hy;
      heading(agent.pose.yaw, hx, hy);
      const double nx = agent.pose.x + hx * kForwardStep;
      const double ny = agent.pose.y + hy * kForwardStep;
      // Sweep the whole segment so a thin wall cannot be jumped over.
      bool blocked = false;
      const SemanticGrid2D& grid = world.floors[agent.pose.floor_id];
      traverse_ray_2d(agent.pose.x, agent.pose.y, hx, hy, world.resolution,
                      kForwardStep,
                      [&](int cx, int cy, double, double) {
                        if (grid.in_bounds(cx, cy) && grid.at(cx, cy).occupied) {
                          blocked = true;
                          return false;
                        }
                        return true;
                      });
      if (blocked) {
        next.collided_last_step = true;
      } else {
        next.pose.x = nx;
        next.pose.y = ny;
      }
      break;
    }
  }
  return next;
}

namespace {

OccupancyGrid true_grid(const WorldModel& world, int floor) {
  OccupancyGrid grid(world.resolution);
  const SemanticGrid2D& g = world.floors[floor];
  grid.ensure(0, 0, g.width - 1, g.height - 1);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      grid.set(x, y, g.at(x, y).occupied ? CellState::occupied
                                         : CellState::free);
    }
  }
  return grid;
}

Point3 stair_point(const WorldModel& world, int cx, int cy) {
  return Point3::world((cx + 0.5) * world.resolution,
                       (cy + 0.5) * world.resolution, 0.0);
}

}  // namespace

double geodesic_distance(const WorldModel& world, const Pose& from,
                         const Point3& to, int to_floor) {
  if (world.variant == WorldVariant::aerial3d) {
    OccupancyGrid3 vox(world.voxel_resolution);
    const VoxelGrid& v = world.voxels;
    if (v.nx > 0) {
      vox.ensure(0, 0, 0, v.nx - 1, v.ny - 1, v.nz - 1);
      for (int z = 0; z < v.nz; ++z) {
        for (int y = 0; y < v.ny; ++y) {
          for (int x = 0; x < v.nx; ++x) {
            vox.set(x, y, z, v.occupied[v.index(x, y, z)]
                                 ? CellState::occupied
                                 : CellState::free);
          }
        }
      }
    }
    try {
      return plan_3d(vox, from.position(), to, 0.0).length;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  const int n_floors = static_cast<int>(world.floors.size());
  // Distance-from-`to` fields per floor, seeded across stair links until
  // no landing improves. Few floors and links, so a handful of passes.
  std::vector<std::vector<std::pair<Point3, double>>> seeds(n_floors);
  seeds[to_floor].push_back({to, 0.0});
  std::vector<OccupancyGrid> grids;
  grids.reserve(n_floors);
  for (int f = 0; f < n_floors; ++f) grids.push_back(true_grid(world, f));

  std::vector<std::optional<DistanceField>> fields(n_floors);
  double result = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass <= n_floors; ++pass) {
    bool improved = false;
    for (int f = 0; f < n_floors; ++f) {
      if (seeds[f].empty()) continue;
      DistanceField df;
      try {
        df = fmm_field_multi(grids[f], seeds[f], 0.0,
                             {from.position()});
      } catch (const Error&) {
        continue;
      }
      if (!fields[f] ||
          (f == from.floor_id &&
           df.at_world(from.x, from.y) <
               fields[f]->at_world(from.x, from.y) - 1e-9)) {
        improved = true;
      }
      fields[f] = std::move(df);
    }
    for (const StairLink& link : world.stair_links) {
      auto propagate = [&](int fa, int ax, int ay, int fb, int bx, int by) {
        if (!fields[fa]) return;
        const Point3 pa = stair_point(world, ax, ay);
        const double da = fields[fa]->at_world(pa.x, pa.y);
        if (!std::isfinite(da)) return;
        const Point3 pb = stair_point(world, bx, by);
        for (auto& s : seeds[fb]) {
          if (std::abs(s.first.x - pb.x) < 1e-9 &&
              std::abs(s.first.y - pb.y) < 1e-9) {
            if (da < s.second - 1e-9) {
              s.second = da;
              improved = true;
            }
            return;
          }
        }
        seeds[fb].push_back({pb, da});
        improved = true;
      };
      propagate(link.floor_a, link.ax, link.ay, link.floor_b, link.bx,
                link.by);
      propagate(link.floor_b, link.bx, link.by, link.floor_a, link.ax,
                link.ay);
    }
    if (fields[from.floor_id]) {
      result = fields[from.floor_id]->at_world(from.x, from.y);
    }
    if (!improved) break;
  }
  return result;
}

GoalStatus check_goal(const WorldModel& world, const Pose& pose) {
  GoalStatus status;
  status.distance = std::numeric_limits<double>::infinity();
  for (const Point3& goal : world.task.goal_positions) {
    status.distance = std::min(
        status.distance,
        geodesic_distance(world, pose, goal, world.task.goal_floor));
  }
  status.within_radius = status.distance <= world.task.success_radius;
  return status;
}

double shortest_path_length(const WorldModel& world) {
  GoalStatus s = check_goal(world, world.start_pose);
  return s.distance;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr int kWorldFormatVersion = 1;

ordered_json point_to_json(const Point3& p) {
  return ordered_json::array({p.x, p.y, p.z});
}

Point3 point_from_json(const nlohmann::json& j) {
  return Point3::world(j.at(0).get<double>(), j.at(1).get<double>(),
                       j.at(2).get<double>());
}

ordered_json floor_to_json(const SemanticGrid2D& g) {
  ordered_json runs = ordered_json::array();
  std::size_t i = 0;
  const std::size_t n = g.cells.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && g.cells[j].occupied == g.cells[i].occupied &&
           g.cells[j].label_id == g.cells[i].label_id) {
      ++j;
    }
    runs.push_back(ordered_json::array(
        {j - i, g.cells[i].occupied ? 1 : 0, g.cells[i].label_id}));
    i = j;
  }
  return ordered_json{{"width", g.width}, {"height", g.height},
                      {"runs", runs}};
}

SemanticGrid2D floor_from_json(const nlohmann::json& j) {
  SemanticGrid2D g;
  g.width = j.at("width").get<int>();
  g.height = j.at("height").get<int>();
  g.cells.reserve(static_cast<std::size_t>(g.width) * g.height);
  for (const auto& run : j.at("runs")) {
    const std::size_t count = run.at(0).get<std::size_t>();
    GridCell cell;
    cell.occupied = run.at(1).get<int>() != 0;
    cell.label_id = run.at(2).get<int>();
    for (std::size_t i = 0; i < count; ++i) g.cells.push_back(cell);
  }
  if (g.cells.size() != static_cast<std::size_t>(g.width) * g.height) {
    throw Error(ErrorCode::SchemaMismatch, "floor RLE length mismatch");
  }
  return g;
}

}  // namespace

std::string world_to_json(const WorldModel& world) {
  ordered_json j;
  j["format"] = "unav-world";
  j["version"] = kWorldFormatVersion;
  j["variant"] =
      world.variant == WorldVariant::aerial3d ? "aerial3d" : "ground2d";
  j["resolution"] = world.resolution;
  j["label_table"] = world.label_table;
  j["floors"] = ordered_json::array();
  for (const SemanticGrid2D& f : world.floors) {
    j["floors"].push_back(floor_to_json(f));
  }
  j["stair_links"] = ordered_json::array();
  for (const StairLink& link : world.stair_links) {
    j["stair_links"].push_back(ordered_json::array(
        {link.floor_a, link.ax, link.ay, link.floor_b, link.bx, link.by}));
  }
  if (world.variant == WorldVariant::aerial3d) {
    const VoxelGrid& v = world.voxels;
    ordered_json runs = ordered_json::array();
    std::size_t i = 0;
    while (i < v.occupied.size()) {
      std::size_t k = i;
      const int lab = v.label.empty() ? 0 : v.label[i];
      while (k < v.occupied.size() && v.occupied[k] == v.occupied[i] &&
             (v.label.empty() ? 0 : v.label[k]) == lab) {
        ++k;
      }
      runs.push_back(ordered_json::array({k - i, v.occupied[i], lab}));
      i = k;
    }
    j["voxels"] = ordered_json{{"nx", v.nx}, {"ny", v.ny}, {"nz", v.nz},
                               {"runs", runs}};
    j["voxel_resolution"] = world.voxel_resolution;
  }
  const TaskSpec& t = world.task;
  ordered_json jt;
  jt["family"] = to_string(t.family);
  jt["instruction"] = t.instruction;
  jt["goal_positions"] = ordered_json::array();
  for (const Point3& g : t.goal_positions) {
    jt["goal_positions"].push_back(point_to_json(g));
  }
  jt["goal_floor"] = t.goal_floor;
  jt["success_radius"] = t.success_radius;
  jt["ordered_subgoal_positions"] = ordered_json::array();
  for (const Point3& g : t.ordered_subgoal_positions) {
    jt["ordered_subgoal_positions"].push_back(point_to_json(g));
  }
  jt["subgoal_floors"] = t.subgoal_floors;
  jt["subgoal_labels"] = t.subgoal_labels;
  jt["goal_label"] = t.goal_label;
  jt["eqa_answer"] = t.eqa_answer;
  j["task"] = jt;
  j["start_pose"] = ordered_json::array({world.start_pose.x,
                                         world.start_pose.y,
                                         world.start_pose.z,
                                         world.start_pose.yaw,
                                         world.start_pose.floor_id});
  return j.dump(2);
}

WorldModel world_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, e.what());
  }
  if (j.value("format", "") != "unav-world") {
    throw Error(ErrorCode::SchemaMismatch, "not a unav world file");
  }
  WorldModel world;
  world.variant = j.at("variant").get<std::string>() == "aerial3d"
                      ? WorldVariant::aerial3d
                      : WorldVariant::ground2d;
  world.resolution = j.at("resolution").get<double>();
  world.label_table = j.at("label_table").get<std::vector<std::string>>();
  for (const auto& f : j.at("floors")) {
    world.floors.push_back(floor_from_json(f));
  }
  for (const auto& l : j.at("stair_links")) {
    world.stair_links.push_back(StairLink{l.at(0).get<int>(),
                                          l.at(1).get<int>(),
                                          l.at(2).get<int>(),
                                          l.at(3).get<int>(),
                                          l.at(4).get<int>(),
                                          l.at(5).get<int>()});
  }
  if (j.contains("voxels")) {
    const auto& jv = j.at("voxels");
    VoxelGrid& v = world.voxels;
    v.nx = jv.at("nx").get<int>();
    v.ny = jv.at("ny").get<int>();
    v.nz = jv.at("nz").get<int>();
    for (const auto& run : jv.at("runs")) {
      const std::size_t count = run.at(0).get<std::size_t>();
      for (std::size_t i = 0; i < count; ++i) {
        v.occupied.push_back(run.at(1).get<int>() != 0 ? 1 : 0);
        v.label.push_back(run.at(2).get<int>());
      }
    }
    world.voxel_resolution = j.value("voxel_resolution", 1.0);
  }
  const auto& jt = j.at("task");
  TaskSpec& t = world.task;
  t.family = task_family_from_string(jt.at("family").get<std::string>());
  t.instruction = jt.at("instruction").get<std::string>();
  for (const auto& g : jt.at("goal_positions")) {
    t.goal_positions.push_back(point_from_json(g));
  }
  t.goal_floor = jt.value("goal_floor", 0);
  t.success_radius = jt.at("success_radius").get<double>();
  for (const auto& g : jt.at("ordered_subgoal_positions")) {
    t.ordered_subgoal_positions.push_back(point_from_json(g));
  }
  t.subgoal_floors = jt.value("subgoal_floors", std::vector<int>{});
  t.subgoal_labels = jt.value("subgoal_labels", std::vector<std::string>{});
  t.goal_label = jt.value("goal_label", "");
  t.eqa_answer = jt.value("eqa_answer", "");
  const auto& sp = j.at("start_pose");
  world.start_pose.x = sp.at(0).get<double>();
  world.start_pose.y = sp.at(1).get<double>();
  world.start_pose.z = sp.at(2).get<double>();
  world.start_pose.yaw = sp.at(3).get<double>();
  world.start_pose.floor_id = sp.at(4).get<int>();
  return world;
}

void save_world(const WorldModel& world, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::BadConfig, "cannot write " + path);
  out << world_to_json(world) << "\n";
}

WorldModel load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return world_from_json(buf.str());
}

}  // namespace unav
