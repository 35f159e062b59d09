#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unav/geometry.hpp"
#include "unav/mapping.hpp"

namespace unav {

inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

enum class TaskFamily { VLN, ObjectNav, EQA, AerialVLN };

const char* to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& s);

struct TaskSpec {
  TaskFamily family = TaskFamily::ObjectNav;
  std::string instruction;
  std::vector<Point3> goal_positions;
  double success_radius = 3.0;
  int goal_floor = 0;
  std::vector<Point3> ordered_subgoal_positions;
  std::vector<int> subgoal_floors;  // empty means all on floor 0
  std::vector<std::string> subgoal_labels;
  std::string goal_label;
  std::string eqa_answer;

  int subgoal_floor(std::size_t i) const {
    return i < subgoal_floors.size() ? subgoal_floors[i] : 0;
  }
};

struct GridCell {
  bool occupied = false;
  int label_id = 0;  // 0 = unlabeled
};

struct SemanticGrid2D {
  int width = 0;
  int height = 0;
  std::vector<GridCell> cells;

  const GridCell& at(int x, int y) const { return cells[y * width + x]; }
  GridCell& at(int x, int y) { return cells[y * width + x]; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

struct VoxelGrid {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> occupied;  // 1 = solid
  std::vector<int> label;

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
};

struct StairLink {
  int floor_a = 0;
  int ax = 0, ay = 0;
  int floor_b = 0;
  int bx = 0, by = 0;
};

enum class WorldVariant { ground2d, aerial3d };

struct WorldModel {
  WorldVariant variant = WorldVariant::ground2d;
  double resolution = 0.05;
  std::vector<SemanticGrid2D> floors;
  std::vector<StairLink> stair_links;
  VoxelGrid voxels;             // aerial only
  double voxel_resolution = 1.0;
  std::vector<std::string> label_table;  // label_table[0] is ""
  TaskSpec task;
  Pose start_pose;

  const std::string& label_text(int id) const { return label_table[id]; }
  bool is_free(int floor, int cx, int cy) const {
    const SemanticGrid2D& g = floors[floor];
    return g.in_bounds(cx, cy) && !g.at(cx, cy).occupied;
  }
};

struct View {
  double yaw_offset = 0.0;  // relative to agent yaw
  double pitch = 0.0;       // -90 for the aerial downward view
  int width = 0, height = 0;
  std::vector<double> depth;     // z-depth meters, kNoReturn sentinel
  std::vector<int> semantic;     // label ids, 0 = none

  double depth_at(int u, int v) const { return depth[v * width + u]; }
  int semantic_at(int u, int v) const { return semantic[v * width + u]; }
};

/// Panorama direction names in a fixed order. Ground panoramas have the
/// first four; the aerial variant appends "down".
inline const std::vector<std::string>& panorama_directions() {
  static const std::vector<std::string> dirs = {"front", "left", "right",
                                                "back", "down"};
  return dirs;
}

double direction_to_yaw_offset(const std::string& dir);

struct PanoramaObservation {
  std::map<std::string, View> views;
  Intrinsics intrinsics;
};

struct AgentState {
  Pose pose;
  bool collided_last_step = false;
  bool stopped = false;
};

enum class LowLevelAction { move_forward, turn_left, turn_right, stop };

const char* to_string(LowLevelAction a);

struct GoalStatus {
  double distance = 0.0;
  bool within_radius = false;
};

/// Default sensor model: 90 degree horizontal FOV at 128x96.
Intrinsics default_intrinsics();

inline constexpr double kGroundMaxRange = 10.0;
inline constexpr double kAerialMaxRange = 60.0;
inline constexpr double kCameraHeight = 0.8;
inline constexpr double kWallHeight = 2.0;
inline constexpr double kForwardStep = 0.25;
inline constexpr double kTurnStep = 30.0;

/// Per-column ray cast of one view at the given yaw offset from the pose.
View render_view(const WorldModel& world, const Pose& pose, double yaw_offset,
                 double pitch = 0.0);

PanoramaObservation render_panorama(const WorldModel& world, const Pose& pose);

AgentState step(const WorldModel& world, const AgentState& agent,
                LowLevelAction a);

/// Geodesic distance on the true map (multi-floor, through stair links).
/// Returns infinity when unreachable.
double geodesic_distance(const WorldModel& world, const Pose& from,
                         const Point3& to, int to_floor = 0);

GoalStatus check_goal(const WorldModel& world, const Pose& pose);

/// Shortest geodesic from the start pose to the nearest goal (the metric
/// reference length l*).
double shortest_path_length(const WorldModel& world);

// --- Serialization (versioned JSON world file, RLE occupancy) ---

std::string world_to_json(const WorldModel& world);
WorldModel world_from_json(const std::string& text);
void save_world(const WorldModel& world, const std::string& path);
WorldModel load_world(const std::string& path);

}  // namespace unav
