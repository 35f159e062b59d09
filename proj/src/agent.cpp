#include "unav/agent.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "unav/image.hpp"
#include "unav/planner.hpp"
#include "unav/scb.hpp"

namespace unav {

using ordered_json = nlohmann::ordered_json;

// --- Direction helpers ---

const char* to_string(TurnDirection d) {
  switch (d) {
    case TurnDirection::front: return "front";
    case TurnDirection::left: return "left";
    case TurnDirection::right: return "right";
    case TurnDirection::back: return "back";
  }
  return "front";
}

std::optional<TurnDirection> turn_direction_from_string(const std::string& s) {
  if (s == "front") return TurnDirection::front;
  if (s == "left") return TurnDirection::left;
  if (s == "right") return TurnDirection::right;
  if (s == "back") return TurnDirection::back;
  return std::nullopt;
}

std::string action_to_text(const LangAction& a) {
  if (const auto* t = std::get_if<TurnAction>(&a)) {
    return std::string("turn(") + to_string(t->dir) + ")";
  }
  if (const auto* b = std::get_if<BacktrackAction>(&a)) {
    return "backtrack(" + std::to_string(b->waypoint_id) + ")";
  }
  if (const auto* g = std::get_if<GoStairAction>(&a)) {
    return std::string("go_stair(") + (g->up ? "up" : "down") + ")";
  }
  const auto& d = std::get<DoubleCheckAction>(a);
  return d.answer.empty() ? "double_check(stop)"
                          : "double_check(stop, " + d.answer + ")";
}

// --- Serialization (the oracle speaks the same wire text a model would) ---

namespace {

ordered_json op_to_json(const TodoUpdateOp& op) {
  ordered_json j;
  switch (op.kind) {
    case TodoUpdateOp::Kind::update:
      j["op"] = "update";
      j["index"] = op.index;
      j["status"] = to_string(op.status);
      j["result"] = op.result;
      break;
    case TodoUpdateOp::Kind::rewrite:
      j["op"] = "rewrite";
      j["index"] = op.index;
      j["content"] = op.content;
      break;
    case TodoUpdateOp::Kind::add:
      j["op"] = "add";
      j["content"] = op.content;
      if (op.has_index) j["index"] = op.index;
      break;
    case TodoUpdateOp::Kind::remove:
      j["op"] = "remove";
      j["index"] = op.index;
      break;
  }
  return j;
}

ordered_json action_to_json(const LangAction& a) {
  ordered_json j;
  if (const auto* t = std::get_if<TurnAction>(&a)) {
    j["name"] = "turn";
    j["direction"] = to_string(t->dir);
  } else if (const auto* b = std::get_if<BacktrackAction>(&a)) {
    j["name"] = "backtrack";
    j["waypoint_id"] = b->waypoint_id;
  } else if (const auto* g = std::get_if<GoStairAction>(&a)) {
    j["name"] = "go_stair";
    j["direction"] = g->up ? "up" : "down";
  } else {
    const auto& d = std::get<DoubleCheckAction>(a);
    j["name"] = "double_check";
    j["stop"] = d.stop;
    if (!d.answer.empty()) j["answer"] = d.answer;
  }
  return j;
}

}  // namespace

std::string serialize_lang_decision(const LangDecision& d) {
  ordered_json j;
  j["progress_analysis"] = d.progress_analysis;
  j["reasoning_todo"] = d.reasoning_todo;
  j["reasoning_action"] = d.reasoning_action;
  j["todo_ops"] = ordered_json::array();
  for (const TodoUpdateOp& op : d.todo_ops) j["todo_ops"].push_back(op_to_json(op));
  j["action"] = action_to_json(d.action);
  return j.dump();
}

std::string serialize_vis_decision(const VisDecision& d) {
  ordered_json j;
  if (d.is_box) {
    j["select"] = {d.box.u_min, d.box.v_min, d.box.u_max, d.box.v_max};
  } else {
    j["select"] = {d.point.u, d.point.v};
  }
  j["target_desc"] = d.target_desc;
  return j.dump();
}

// --- Fault-tolerant parsing ---

namespace {

// Drops markdown fence lines (``` or ```json) wholesale.
std::string strip_fences(const std::string& raw) {
  std::istringstream in(raw);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t i = line.find_first_not_of(" \t");
    if (i != std::string::npos && line.compare(i, 3, "```") == 0) continue;
    out << line << '\n';
  }
  return out.str();
}

// First balanced {...} substring, string-literal aware.
std::string first_balanced_object(const std::string& raw) {
  const std::size_t start = raw.find('{');
  if (start == std::string::npos) return "";
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return raw.substr(start, i - start + 1);
    }
  }
  return "";
}

// Recovery ladder shared by every response parser.
ordered_json parse_object_ladder(const std::string& raw) {
  ordered_json j = ordered_json::parse(raw, nullptr, false);
  if (!j.is_discarded() && j.is_object()) return j;
  j = ordered_json::parse(strip_fences(raw), nullptr, false);
  if (!j.is_discarded() && j.is_object()) return j;
  const std::string candidate = first_balanced_object(raw);
  if (!candidate.empty()) {
    j = ordered_json::parse(candidate, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  throw Error(ErrorCode::UnparseableDecision,
              "no JSON object recoverable from response");
}

std::string string_field(const ordered_json& j,
                         std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = j.find(n);
    if (it != j.end() && it->is_string()) return it->get<std::string>();
  }
  return "";
}

std::vector<TodoUpdateOp> parse_todo_ops(const ordered_json& j,
                                         std::vector<std::string>& warnings) {
  std::vector<TodoUpdateOp> ops;
  auto it = j.find("todo_ops");
  if (it == j.end()) it = j.find("todo_updates");
  if (it == j.end() || !it->is_array()) return ops;
  for (const ordered_json& o : *it) {
    if (!o.is_object()) {
      warnings.push_back("todo op is not an object; skipped");
      continue;
    }
    const std::string kind = string_field(o, {"op", "kind", "name"});
    const int index = o.value("index", 0);
    if (kind == "update") {
      const std::string status = string_field(o, {"status"});
      ops.push_back(TodoUpdateOp::update_op(
          index,
          status == "completed" ? TodoStatus::completed : TodoStatus::pending,
          string_field(o, {"result"})));
    } else if (kind == "rewrite") {
      ops.push_back(TodoUpdateOp::rewrite_op(index, string_field(o, {"content"})));
    } else if (kind == "add") {
      std::optional<int> at;
      if (o.contains("index")) at = index;
      ops.push_back(TodoUpdateOp::add_op(string_field(o, {"content"}), at));
    } else if (kind == "remove") {
      ops.push_back(TodoUpdateOp::remove_op(index));
    } else {
      warnings.push_back("unknown todo op kind '" + kind + "'; skipped");
    }
  }
  return ops;
}

LangAction parse_action(const ordered_json& j) {
  auto it = j.find("action");
  if (it == j.end() || !it->is_object()) {
    throw Error(ErrorCode::UnparseableDecision, "missing action object");
  }
  const ordered_json& a = *it;
  const std::string name = string_field(a, {"name", "tool", "type"});
  if (name == "turn") {
    const auto dir = turn_direction_from_string(string_field(a, {"direction", "dir"}));
    if (!dir) {
      throw Error(ErrorCode::UnparseableDecision, "turn without a direction");
    }
    return TurnAction{*dir};
  }
  if (name == "backtrack") {
    auto id = a.find("waypoint_id");
    if (id == a.end()) id = a.find("id");
    if (id == a.end() || !id->is_number_integer()) {
      throw Error(ErrorCode::UnparseableDecision, "backtrack without waypoint id");
    }
    return BacktrackAction{id->get<int>()};
  }
  if (name == "go_stair") {
    const std::string dir = string_field(a, {"direction", "dir"});
    if (dir != "up" && dir != "down") {
      throw Error(ErrorCode::UnparseableDecision, "go_stair needs up or down");
    }
    return GoStairAction{dir == "up"};
  }
  if (name == "double_check") {
    DoubleCheckAction d;
    d.stop = a.value("stop", true);
    d.answer = string_field(a, {"answer"});
    return d;
  }
  throw Error(ErrorCode::UnparseableDecision, "unknown action '" + name + "'");
}

}  // namespace

LangDecision parse_lang_response(const std::string& raw) {
  const ordered_json j = parse_object_ladder(raw);
  LangDecision d;
  d.progress_analysis = string_field(j, {"progress_analysis", "analysis"});
  d.reasoning_todo = string_field(j, {"reasoning_todo", "todo_reasoning"});
  d.reasoning_action = string_field(j, {"reasoning_action", "action_reasoning"});
  d.todo_ops = parse_todo_ops(j, d.warnings);
  d.action = parse_action(j);
  return d;
}

VisDecision parse_vis_response(const std::string& raw, int image_width,
                               int image_height) {
  const ordered_json j = parse_object_ladder(raw);
  auto it = j.find("select");
  if (it == j.end()) it = j.find("box");
  if (it == j.end()) it = j.find("point");
  if (it == j.end() || !it->is_array() ||
      (it->size() != 2 && it->size() != 4)) {
    throw Error(ErrorCode::UnparseableDecision,
                "select must be [u,v] or [u0,v0,u1,v1]");
  }
  VisDecision d;
  d.target_desc = string_field(j, {"target_desc", "description"});
  auto clamp_u = [&](int u) { return std::clamp(u, 0, image_width - 1); };
  auto clamp_v = [&](int v) { return std::clamp(v, 0, image_height - 1); };
  if (it->size() == 2) {
    d.is_box = false;
    const int u = (*it)[0].get<int>(), v = (*it)[1].get<int>();
    d.point = {clamp_u(u), clamp_v(v)};
    if (d.point.u != u || d.point.v != v) {
      d.warnings.push_back("point outside image clamped");
    }
    return d;
  }
  int u0 = (*it)[0].get<int>(), v0 = (*it)[1].get<int>();
  int u1 = (*it)[2].get<int>(), v1 = (*it)[3].get<int>();
  if (u0 > u1) std::swap(u0, u1);
  if (v0 > v1) std::swap(v0, v1);
  BBox clamped{clamp_u(u0), clamp_v(v0), clamp_u(u1), clamp_v(v1)};
  if (clamped.u_min != u0 || clamped.v_min != v0 || clamped.u_max != u1 ||
      clamped.v_max != v1) {
    d.warnings.push_back("box outside image clamped");
  }
  if (clamped.u_min == clamped.u_max || clamped.v_min == clamped.v_max) {
    d.is_box = false;
    d.point = {(clamped.u_min + clamped.u_max) / 2,
               (clamped.v_min + clamped.v_max) / 2};
    d.warnings.push_back("degenerate box collapsed to point");
    return d;
  }
  d.is_box = true;
  d.box = clamped;
  return d;
}

bool parse_verification_response(const std::string& raw) {
  const ordered_json j = parse_object_ladder(raw);
  const std::string confirm = string_field(j, {"confirm"});
  return confirm == "yes" || confirm == "true";
}

std::vector<std::string> parse_init_response(const std::string& raw) {
  const ordered_json j = parse_object_ladder(raw);
  std::vector<std::string> items;
  auto it = j.find("items");
  if (it != j.end() && it->is_array()) {
    for (const ordered_json& e : *it) {
      if (e.is_string()) items.push_back(e.get<std::string>());
    }
  }
  return items;
}

// --- Prompt builders ---

namespace {

const char* kLangSchema =
    "Respond with one JSON object: {\"progress_analysis\": str, "
    "\"reasoning_todo\": str, \"reasoning_action\": str, \"todo_ops\": "
    "[{\"op\": \"update|rewrite|add|remove\", \"index\": int, \"status\": "
    "\"pending|completed\", \"result\": str, \"content\": str}], \"action\": "
    "{\"name\": \"turn|backtrack|go_stair|double_check\", \"direction\": "
    "\"front|left|right|back|up|down\", \"waypoint_id\": int, \"stop\": "
    "bool, \"answer\": str}}. Emit the checklist update operations before "
    "choosing the action.";

const char* kVisSchema =
    "Respond with one JSON object: {\"select\": [u_min, v_min, u_max, "
    "v_max] or [u, v], \"target_desc\": str}. Pick a navigable target; "
    "avoid targets closer than 2 meters.";

std::vector<EncodedImage> encode_panorama(const PanoramaObservation& pano,
                                          double max_range) {
  std::vector<EncodedImage> images;
  for (const std::string& dir : panorama_directions()) {
    auto it = pano.views.find(dir);
    if (it == pano.views.end()) continue;
    const View& v = it->second;
    images.push_back(EncodedImage{
        "depth view: " + dir,
        encode_gray_png(v.width, v.height, depth_to_gray(v, max_range))});
  }
  return images;
}

std::string task_block(const TaskSpec& task) {
  return std::string("Task (") + to_string(task.family) +
         "): " + task.instruction;
}

}  // namespace

PromptPayload build_lang_prompt(const TaskSpec& task,
                                const PanoramaObservation& panorama,
                                const std::vector<HistoryEntry>& history,
                                const TodoList* todo, int step_index,
                                double max_range) {
  PromptPayload p;
  p.role = "lang";
  p.task_family = to_string(task.family);
  p.step_index = step_index;
  p.text_blocks.push_back(task_block(task));
  if (todo != nullptr) {
    p.text_blocks.push_back("Checklist:\n" + render_text(*todo));
  }
  std::ostringstream hist;
  hist << "History:\n";
  const std::size_t first = history.size() > 20 ? history.size() - 20 : 0;
  for (std::size_t i = first; i < history.size(); ++i) {
    hist << "wp" << history[i].waypoint_id << ": " << history[i].caption
         << "\n";
  }
  p.text_blocks.push_back(hist.str());
  p.text_blocks.push_back(kLangSchema);
  p.images = encode_panorama(panorama, max_range);
  return p;
}

PromptPayload build_vis_prompt(const TaskSpec& task, const View& view,
                               const std::string& direction, int step_index,
                               double max_range) {
  PromptPayload p;
  p.role = "vis";
  p.task_family = to_string(task.family);
  p.step_index = step_index;
  p.text_blocks.push_back(task_block(task));
  p.text_blocks.push_back("Chosen view direction: " + direction);
  p.text_blocks.push_back(kVisSchema);
  p.images.push_back(EncodedImage{
      "depth view: " + direction,
      encode_gray_png(view.width, view.height,
                      depth_to_gray(view, max_range))});
  return p;
}

PromptPayload build_recovery_prompt(const TaskSpec& task,
                                    const PanoramaObservation& waypoint_pano,
                                    TurnDirection failed_dir,
                                    const std::vector<EncodedImage>& frames,
                                    int step_index, double max_range) {
  PromptPayload p;
  p.role = "lang";
  p.task_family = to_string(task.family);
  p.step_index = step_index;
  p.recovery = true;
  p.text_blocks.push_back(task_block(task));
  p.text_blocks.push_back(
      "You are back at a previously visited waypoint after a failed "
      "attempt. Evidence 1: the panorama at this waypoint (images below). "
      "Evidence 2: the failed direction was: " +
      std::string(to_string(failed_dir)) +
      ". Evidence 3: the egocentric frames of the failed sub-trajectory, in "
      "chronological order (appended after the panorama).");
  p.text_blocks.push_back(
      "Diagnose why the previous action failed, then choose a new "
      "direction. " +
      std::string(kLangSchema));
  p.images = encode_panorama(waypoint_pano, max_range);
  for (const EncodedImage& f : frames) p.images.push_back(f);
  return p;
}

PromptPayload build_init_prompt(const TaskSpec& task) {
  PromptPayload p;
  p.role = "lang";
  p.task_family = to_string(task.family);
  p.init = true;
  p.text_blocks.push_back(task_block(task));
  p.text_blocks.push_back(
      "Break the task into an ordered checklist of sub-goals. Respond with "
      "one JSON object: {\"items\": [str, ...]}.");
  return p;
}

PromptPayload build_verification_prompt(const TaskSpec& task,
                                        const PanoramaObservation& panorama,
                                        int step_index, double max_range) {
  PromptPayload p;
  p.role = "lang";
  p.task_family = to_string(task.family);
  p.step_index = step_index;
  p.verification = true;
  p.text_blocks.push_back(task_block(task));
  p.text_blocks.push_back(
      "You proposed stopping here. Verify against the views below. Respond "
      "with one JSON object: {\"confirm\": \"yes\"|\"no\", \"reasoning\": "
      "str}.");
  p.images = encode_panorama(panorama, max_range);
  return p;
}

// --- Oracle decision functions ---

namespace {

// Bearing (our yaw convention) of the world-frame direction (dx, dy).
double bearing_deg(double dx, double dy) {
  return normalize_yaw(rad_to_deg(std::atan2(-dx, dy)));
}

TurnDirection sector_for(double delta_deg) {
  const double d = normalize_yaw(delta_deg);
  if (d < 45.0 || d >= 315.0) return TurnDirection::front;
  if (d < 135.0) return TurnDirection::left;
  if (d < 225.0) return TurnDirection::back;
  return TurnDirection::right;
}

OccupancyGrid true_grid(const WorldModel& world, int floor) {
  OccupancyGrid grid(world.resolution);
  const SemanticGrid2D& f = world.floors[floor];
  grid.ensure(0, 0, f.width - 1, f.height - 1);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      grid.set(x, y, f.at(x, y).occupied ? CellState::occupied
                                         : CellState::free);
    }
  }
  return grid;
}

OccupancyGrid3 true_voxels(const WorldModel& world) {
  OccupancyGrid3 grid(world.voxel_resolution);
  const VoxelGrid& v = world.voxels;
  grid.ensure(0, 0, 0, v.nx - 1, v.ny - 1, v.nz - 1);
  for (int z = 0; z < v.nz; ++z) {
    for (int y = 0; y < v.ny; ++y) {
      for (int x = 0; x < v.nx; ++x) {
        grid.set(x, y, z,
                 v.occupied[v.index(x, y, z)] ? CellState::occupied
                                              : CellState::free);
      }
    }
  }
  return grid;
}

// Bearing toward the point roughly `lookahead` meters of arc length along
// the path, so single-cell diagonal stair-steps near the start do not skew
// the chosen sector.
double path_bearing(const PlanPath& path, const Pose& pose, double lookahead) {
  double walked = 0.0;
  Point3 prev = pose.position();
  for (const Point3& wp : path.waypoints) {
    const double seg = std::hypot(wp.x - prev.x, wp.y - prev.y);
    if (walked + seg >= lookahead && seg > 1e-9) {
      const double f = (lookahead - walked) / seg;
      const double px = prev.x + (wp.x - prev.x) * f;
      const double py = prev.y + (wp.y - prev.y) * f;
      return bearing_deg(px - pose.x, py - pose.y);
    }
    walked += seg;
    prev = wp;
  }
  return bearing_deg(prev.x - pose.x, prev.y - pose.y);
}

// First stretch of the true-map route from the pose toward the target;
// falls back to the straight bearing when planning fails.
double route_bearing(const WorldModel& world, const Pose& pose,
                     const Point3& target, int target_floor) {
  if (world.variant == WorldVariant::aerial3d) {
    try {
      OccupancyGrid3 vox = true_voxels(world);
      PlanPath path = plan_3d(vox, pose.position(), target, 0.0);
      if (!path.waypoints.empty()) return path_bearing(path, pose, 2.0);
    } catch (const Error&) {
    }
    return bearing_deg(target.x - pose.x, target.y - pose.y);
  }
  Point3 local_target = target;
  if (target_floor != pose.floor_id) {
    // Head for a stair link endpoint on the current floor instead.
    for (const StairLink& link : world.stair_links) {
      if (link.floor_a == pose.floor_id) {
        local_target = Point3::world((link.ax + 0.5) * world.resolution,
                                     (link.ay + 0.5) * world.resolution, 0.0);
        break;
      }
      if (link.floor_b == pose.floor_id) {
        local_target = Point3::world((link.bx + 0.5) * world.resolution,
                                     (link.by + 0.5) * world.resolution, 0.0);
        break;
      }
    }
  }
  try {
    OccupancyGrid grid = true_grid(world, pose.floor_id);
    PlanPath path = plan_to(grid, pose, local_target);
    if (!path.waypoints.empty()) return path_bearing(path, pose, 1.0);
  } catch (const Error&) {
  }
  return bearing_deg(local_target.x - pose.x, local_target.y - pose.y);
}

// Stair endpoint on the agent's floor within reach, with its up/down sense.
std::optional<bool> stair_within_reach(const WorldModel& world,
                                       const Pose& pose, int target_floor,
                                       double reach = 1.0) {
  for (const StairLink& link : world.stair_links) {
    int cx = 0, cy = 0, other = -1;
    if (link.floor_a == pose.floor_id) {
      cx = link.ax;
      cy = link.ay;
      other = link.floor_b;
    } else if (link.floor_b == pose.floor_id) {
      cx = link.bx;
      cy = link.by;
      other = link.floor_a;
    } else {
      continue;
    }
    const double d = std::hypot(pose.x - (cx + 0.5) * world.resolution,
                                pose.y - (cy + 0.5) * world.resolution);
    if (d <= reach) return other > pose.floor_id;
    (void)target_floor;
  }
  return std::nullopt;
}

// Current route objective redirected onto the agent's floor: the first
// unfinished sub-goal (or the nearest goal), swapped for a stair endpoint
// when it lives on another floor.
Point3 oracle_local_objective(const WorldModel& world, const AgentState& agent,
                              int next_subgoal_index) {
  const TaskSpec& task = world.task;
  int idx = std::max(0, next_subgoal_index);
  const int n = static_cast<int>(task.ordered_subgoal_positions.size());
  while (idx < n &&
         geodesic_distance(world, agent.pose,
                           task.ordered_subgoal_positions[idx],
                           task.subgoal_floor(idx)) <= task.success_radius) {
    ++idx;
  }
  Point3 target;
  int target_floor = 0;
  if (idx < n) {
    target = task.ordered_subgoal_positions[idx];
    target_floor = task.subgoal_floor(idx);
  } else {
    target_floor = task.goal_floor;
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& g : task.goal_positions) {
      const double dist = geodesic_distance(world, agent.pose, g, target_floor);
      if (dist < best) {
        best = dist;
        target = g;
      }
    }
  }
  if (world.variant == WorldVariant::ground2d &&
      target_floor != agent.pose.floor_id) {
    for (const StairLink& link : world.stair_links) {
      if (link.floor_a == agent.pose.floor_id) {
        return Point3::world((link.ax + 0.5) * world.resolution,
                             (link.ay + 0.5) * world.resolution, 0.0);
      }
      if (link.floor_b == agent.pose.floor_id) {
        return Point3::world((link.bx + 0.5) * world.resolution,
                             (link.by + 0.5) * world.resolution, 0.0);
      }
    }
  }
  return target;
}

// Farthest point of the true-map route toward the objective that projects
// into this view unoccluded, as a pixel. Lets the oracle ground progress
// even when the target object is out of sight and no distal free space
// remains (e.g. closing in on a stairwell tucked into a corner).
std::optional<PixelPoint> project_route_pixel(const WorldModel& world,
                                              const AgentState& agent,
                                              const View& view,
                                              const Point3& objective) {
  if (world.variant != WorldVariant::ground2d) return std::nullopt;
  PlanPath path;
  try {
    const OccupancyGrid grid = true_grid(world, agent.pose.floor_id);
    path = plan_to(grid, agent.pose, objective);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (path.waypoints.size() < 2) return std::nullopt;

  const double yaw_rad = deg_to_rad(normalize_yaw(agent.pose.yaw +
                                                  view.yaw_offset));
  const double hx = -std::sin(yaw_rad), hy = std::cos(yaw_rad);
  const double rx = std::cos(yaw_rad), ry = std::sin(yaw_rad);
  const double fx = view.width / 2.0;
  const double cx = view.width / 2.0, cy = view.height / 2.0;
  const int v = std::min(view.height - 1,
                         static_cast<int>(std::lround(cy)));

  std::optional<PixelPoint> best;
  double walked = 0.0;
  Point3 prev = agent.pose.position();
  for (const Point3& wp : path.waypoints) {
    const double seg = std::hypot(wp.x - prev.x, wp.y - prev.y);
    for (double t = 0.0; t <= seg && walked + t <= 6.0; t += 0.05) {
      const double f = seg > 1e-9 ? t / seg : 0.0;
      const double dx = prev.x + (wp.x - prev.x) * f - agent.pose.x;
      const double dy = prev.y + (wp.y - prev.y) * f - agent.pose.y;
      if (walked + t < 0.3) continue;
      const double z = dx * hx + dy * hy;  // camera-frame depth
      if (z < 0.1) continue;
      const double x = dx * rx + dy * ry;
      const int u = static_cast<int>(std::lround(fx * x / z + cx));
      if (u < 0 || u >= view.width) continue;
      const double d = view.depth_at(u, v);
      if (!std::isfinite(d) || d + 0.3 >= z) best = PixelPoint{u, v};
    }
    walked += seg;
    prev = wp;
    if (walked > 6.0) break;
  }
  return best;
}

}  // namespace

LangDecision oracle_lang_decide(const WorldModel& world,
                                const AgentState& agent,
                                int next_subgoal_index) {
  const TaskSpec& task = world.task;
  LangDecision d;
  d.progress_analysis = "oracle: true-map geodesic planning";
  d.reasoning_todo = "mark sub-goals completed as they enter the radius";
  d.reasoning_action = "head along the shortest true-map route";

  int idx = std::max(0, next_subgoal_index);
  const int n = static_cast<int>(task.ordered_subgoal_positions.size());
  while (idx < n) {
    const double dist =
        geodesic_distance(world, agent.pose, task.ordered_subgoal_positions[idx],
                          task.subgoal_floor(idx));
    if (dist > task.success_radius) break;
    const std::string label =
        idx < static_cast<int>(task.subgoal_labels.size())
            ? task.subgoal_labels[idx]
            : "sub-goal " + std::to_string(idx + 1);
    d.todo_ops.push_back(TodoUpdateOp::update_op(
        idx + 1, TodoStatus::completed, "reached the " + label));
    ++idx;
  }

  Point3 target;
  int target_floor = 0;
  bool final_goal = false;
  if (idx < n) {
    target = task.ordered_subgoal_positions[idx];
    target_floor = task.subgoal_floor(idx);
  } else {
    final_goal = true;
    target_floor = task.goal_floor;
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& g : task.goal_positions) {
      const double dist = geodesic_distance(world, agent.pose, g, target_floor);
      if (dist < best) {
        best = dist;
        target = g;
      }
    }
    if (best <= task.success_radius) {
      DoubleCheckAction stop;
      if (task.family == TaskFamily::EQA) stop.answer = task.eqa_answer;
      d.action = stop;
      return d;
    }
  }

  if (world.variant == WorldVariant::ground2d &&
      target_floor != agent.pose.floor_id) {
    if (auto up = stair_within_reach(world, agent.pose, target_floor)) {
      d.action = GoStairAction{*up};
      return d;
    }
  }
  (void)final_goal;
  const double bearing = route_bearing(world, agent.pose, target, target_floor);
  d.action = TurnAction{sector_for(bearing - agent.pose.yaw)};
  return d;
}

VisDecision oracle_vis_decide(const View& view, const std::string& target_label,
                              const std::vector<std::string>& label_table,
                              const std::optional<PixelPoint>& route_pixel) {
  int label_id = 0;
  for (std::size_t i = 1; i < label_table.size(); ++i) {
    if (label_table[i] == target_label) {
      label_id = static_cast<int>(i);
      break;
    }
  }
  if (label_id != 0) {
    int u0 = view.width, v0 = view.height, u1 = -1, v1 = -1;
    for (int v = 0; v < view.height; ++v) {
      for (int u = 0; u < view.width; ++u) {
        if (view.semantic_at(u, v) == label_id) {
          u0 = std::min(u0, u);
          v0 = std::min(v0, v);
          u1 = std::max(u1, u);
          v1 = std::max(v1, v);
        }
      }
    }
    if (u1 >= 0) {
      VisDecision d;
      if (u0 == u1 || v0 == v1) {
        d.is_box = false;
        d.point = {(u0 + u1) / 2, (v0 + v1) / 2};
      } else {
        d.is_box = true;
        d.box = {u0, v0, u1, v1};
      }
      d.target_desc = target_label;
      return d;
    }
  }
  if (route_pixel) {
    VisDecision d;
    d.is_box = false;
    d.point = *route_pixel;
    d.target_desc = "route waypoint";
    return d;
  }
  // Distal free-space fallback: the column with the deepest finite return
  // at least 2 m away.
  int best_u = -1;
  double best_d = 2.0;
  for (int u = 0; u < view.width; ++u) {
    for (int v = 0; v < view.height; ++v) {
      const double depth = view.depth_at(u, v);
      if (std::isfinite(depth) && depth >= best_d) {
        best_d = depth;
        best_u = u;
      }
    }
  }
  if (best_u < 0) {
    throw Error(ErrorCode::GroundingFailed,
                "no label match and no depth beyond 2 m");
  }
  VisDecision d;
  const int half_w = std::max(2, view.width / 16);
  const int half_h = std::max(2, view.height / 8);
  d.is_box = true;
  d.box = {std::max(0, best_u - half_w), std::max(0, view.height / 2 - half_h),
           std::min(view.width - 1, best_u + half_w),
           std::min(view.height - 1, view.height / 2 + half_h)};
  d.target_desc = "open space ahead";
  return d;
}

// --- Scripted backends ---

namespace {

class OracleBackend : public DecisionBackend {
 public:
  explicit OracleBackend(bool forgetful) : forgetful_(forgetful) {}

  void set_sim_context(const SimContext* ctx) override { ctx_ = ctx; }

  std::string name() const override {
    return forgetful_ ? "forgetful-oracle" : "oracle";
  }

  std::string decide_lang(const PromptPayload& payload) override {
    const WorldModel& world = *ctx_->world;
    const AgentState& agent = *ctx_->agent;
    if (payload.init) {
      ordered_json j;
      j["items"] = ordered_json::array();
      if (!world.task.subgoal_labels.empty()) {
        for (const std::string& label : world.task.subgoal_labels) {
          j["items"].push_back("reach the " + label);
        }
      } else {
        j["items"].push_back("reach the goal" +
                             (world.task.goal_label.empty()
                                  ? std::string()
                                  : " (" + world.task.goal_label + ")"));
      }
      return j.dump();
    }
    if (payload.verification) {
      ordered_json j;
      const bool ok = check_goal(world, agent.pose).within_radius;
      j["confirm"] = ok ? "yes" : "no";
      j["reasoning"] = ok ? "goal is within the success radius"
                          : "goal is still too far";
      return j.dump();
    }
    const int idx = forgetful_ ? index_from_prompt(payload)
                               : internal_index_;
    last_idx_ = idx;
    if (!payload.recovery && world.variant == WorldVariant::ground2d) {
      if (auto bt = off_route_backtrack(world, agent, idx)) {
        return serialize_lang_decision(*bt);
      }
    }
    LangDecision d = oracle_lang_decide(world, agent, idx);
    if (!forgetful_) {
      for (const TodoUpdateOp& op : d.todo_ops) {
        if (op.kind == TodoUpdateOp::Kind::update &&
            op.status == TodoStatus::completed) {
          ++internal_index_;
        }
      }
    }
    return serialize_lang_decision(d);
  }

  std::string decide_vis(const PromptPayload&) override {
    const WorldModel& world = *ctx_->world;
    std::optional<PixelPoint> route;
    if (ctx_->agent != nullptr) {
      route = project_route_pixel(
          world, *ctx_->agent, *ctx_->vis_view,
          oracle_local_objective(world, *ctx_->agent, last_idx_));
    }
    VisDecision d = oracle_vis_decide(*ctx_->vis_view, ctx_->vis_target_label,
                                      world.label_table, route);
    return serialize_vis_decision(d);
  }

  void reseed(unsigned) override {
    internal_index_ = 0;
    last_idx_ = 0;
    last_was_backtrack_ = false;
  }

 private:
  // When the agent has drifted so far off the route that some previously
  // visited waypoint sits more than 2 m closer (geodesically) to the current
  // objective, ask to return there instead of pushing forward. Skipped right
  // after an unanswered request so a run with backtracking disabled keeps
  // alternating with ordinary turns instead of repeating itself.
  std::optional<LangDecision> off_route_backtrack(const WorldModel& world,
                                                  const AgentState& agent,
                                                  int idx) {
    const bool stalled =
        last_was_backtrack_ && agent.pose.floor_id == last_pose_.floor_id &&
        std::hypot(agent.pose.x - last_pose_.x, agent.pose.y - last_pose_.y) <
            0.05;
    last_pose_ = agent.pose;
    last_was_backtrack_ = false;
    if (stalled || ctx_->waypoints == nullptr) return std::nullopt;
    const Point3 objective = oracle_local_objective(world, agent, idx);
    const double d_now = geodesic_distance(world, agent.pose, objective,
                                           agent.pose.floor_id);
    double d_best = std::numeric_limits<double>::infinity();
    int best_id = -1;
    for (const WaypointRecord& wp : ctx_->waypoints->records()) {
      if (wp.pose.floor_id != agent.pose.floor_id) continue;
      const double d =
          geodesic_distance(world, wp.pose, objective, wp.pose.floor_id);
      if (d < d_best) {
        d_best = d;
        best_id = wp.id;
      }
    }
    if (best_id < 0 || !(d_now > d_best + 2.0)) return std::nullopt;
    LangDecision d;
    d.progress_analysis =
        "a previously visited waypoint is markedly closer to the objective "
        "than the current position";
    d.reasoning_action = "return to that waypoint and retry from there";
    d.action = BacktrackAction{best_id};
    last_was_backtrack_ = true;
    return d;
  }

  // The forgetful variant trusts only the checklist text in the prompt:
  // first pending item, item count when all are done, item 1 without a
  // checklist block.
  int index_from_prompt(const PromptPayload& payload) const {
    for (const std::string& block : payload.text_blocks) {
      if (block.rfind("Checklist:", 0) != 0) continue;
      int count = 0;
      std::istringstream in(block);
      std::string line;
      while (std::getline(in, line)) {
        const std::size_t dot = line.find(". [");
        if (dot == std::string::npos || dot == 0) continue;
        ++count;
        if (line.compare(dot + 2, 3, "[ ]") == 0) {
          return std::stoi(line.substr(0, dot)) - 1;
        }
      }
      return count;
    }
    return 0;
  }

  bool forgetful_;
  const SimContext* ctx_ = nullptr;
  int internal_index_ = 0;
  int last_idx_ = 0;
  Pose last_pose_;
  bool last_was_backtrack_ = false;
};

class FaultyBackend : public DecisionBackend {
 public:
  FaultyBackend(std::unique_ptr<DecisionBackend> inner, double error_rate,
                unsigned seed)
      : inner_(std::move(inner)), error_rate_(error_rate), rng_(seed) {}

  void set_sim_context(const SimContext* ctx) override {
    inner_->set_sim_context(ctx);
  }

  std::string name() const override { return "faulty(" + inner_->name() + ")"; }

  void reseed(unsigned seed) override {
    rng_.seed(seed);
    inner_->reseed(seed);
  }

  std::string decide_lang(const PromptPayload& payload) override {
    std::string text = inner_->decide_lang(payload);
    if (payload.init || payload.verification || payload.recovery) return text;
    const double draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (draw >= error_rate_) return text;
    LangDecision d;
    try {
      d = parse_lang_response(text);
    } catch (const Error&) {
      return text;
    }
    auto* turn = std::get_if<TurnAction>(&d.action);
    if (turn == nullptr) return text;  // never corrupts double_check etc.
    const std::array<TurnDirection, 4> all = {
        TurnDirection::front, TurnDirection::left, TurnDirection::right,
        TurnDirection::back};
    std::array<TurnDirection, 3> wrong{};
    int n = 0;
    for (TurnDirection cand : all) {
      if (cand != turn->dir) wrong[n++] = cand;
    }
    turn->dir = wrong[std::uniform_int_distribution<int>(0, 2)(rng_)];
    return serialize_lang_decision(d);
  }

  std::string decide_vis(const PromptPayload& payload) override {
    return inner_->decide_vis(payload);
  }

 private:
  std::unique_ptr<DecisionBackend> inner_;
  double error_rate_;
  std::mt19937 rng_;
};

}  // namespace

std::unique_ptr<DecisionBackend> make_oracle_backend(bool forgetful) {
  return std::make_unique<OracleBackend>(forgetful);
}

std::unique_ptr<DecisionBackend> make_faulty_backend(
    std::unique_ptr<DecisionBackend> inner, double error_rate, unsigned seed) {
  return std::make_unique<FaultyBackend>(std::move(inner), error_rate, seed);
}

}  // namespace unav
