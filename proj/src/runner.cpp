#include "unav/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "unav/image.hpp"
#include "unav/mapping.hpp"
#include "unav/planner.hpp"
#include "unav/tdm.hpp"

namespace unav {

using ordered_json = nlohmann::ordered_json;

namespace {

double bearing_deg(double dx, double dy) {
  return normalize_yaw(rad_to_deg(std::atan2(-dx, dy)));
}

OccupancyGrid true_floor_grid(const WorldModel& world, int floor) {
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

// Back-projected aerial targets often land on the sensed surface voxel of an
// obstacle; move such a goal to the nearest non-occupied voxel center (ties
// broken by (distance, z, y, x)) so the 3-D planner accepts it.
Point3 nudge_voxel_target(const OccupancyGrid3& vox, const Point3& p,
                          double inflate_radius = kAerialInflation,
                          double max_radius = 2.5) {
  const double res = vox.resolution();
  const int rad_cells =
      static_cast<int>(std::floor(inflate_radius / res + 1e-9));
  const auto blocked = [&](int cx, int cy, int cz) {
    for (int dz = -rad_cells; dz <= rad_cells; ++dz) {
      for (int dy = -rad_cells; dy <= rad_cells; ++dy) {
        for (int dx = -rad_cells; dx <= rad_cells; ++dx) {
          if (std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz)) *
                  res >
              inflate_radius + 1e-9) {
            continue;
          }
          if (vox.at(cx + dx, cy + dy, cz + dz) == CellState::occupied) {
            return true;
          }
        }
      }
    }
    return false;
  };
  const int px = vox.world_to_cell(p.x);
  const int py = vox.world_to_cell(p.y);
  const int pz = vox.world_to_cell(p.z);
  if (!blocked(px, py, pz)) return p;
  const int rad = static_cast<int>(std::ceil(max_radius / res)) + 1;
  double best_d = std::numeric_limits<double>::infinity();
  Point3 best = p;
  for (int dz = -rad; dz <= rad; ++dz) {
    for (int dy = -rad; dy <= rad; ++dy) {
      for (int dx = -rad; dx <= rad; ++dx) {
        const int cx = px + dx, cy = py + dy, cz = pz + dz;
        if (blocked(cx, cy, cz)) continue;
        const Point3 c = Point3::world(vox.cell_center(cx), vox.cell_center(cy),
                                       vox.cell_center(cz));
        if (c.z < 2.0 || c.z > 40.0) continue;
        const double d = distance(c, p);
        if (d <= max_radius && d < best_d - 1e-12) {
          best_d = d;
          best = c;
        }
      }
    }
  }
  return best;  // unchanged when nothing qualifies; the planner will object
}

// Distance-to-goal fields on the true map, one per floor, seeded across
// stair links. Built once per episode so oracle-success checks are O(1)
// per low-level step.
struct GoalFields {
  std::vector<std::optional<DistanceField>> per_floor;

  double at(const Pose& pose) const {
    if (pose.floor_id >= static_cast<int>(per_floor.size()) ||
        !per_floor[pose.floor_id]) {
      return std::numeric_limits<double>::infinity();
    }
    return per_floor[pose.floor_id]->at_world(pose.x, pose.y);
  }
};

GoalFields build_goal_fields(const WorldModel& world, const Pose& cover) {
  GoalFields out;
  const int n_floors = static_cast<int>(world.floors.size());
  out.per_floor.resize(n_floors);
  std::vector<std::vector<std::pair<Point3, double>>> seeds(n_floors);
  for (const Point3& g : world.task.goal_positions) {
    seeds[world.task.goal_floor].push_back({g, 0.0});
  }
  std::vector<OccupancyGrid> grids;
  grids.reserve(n_floors);
  for (int f = 0; f < n_floors; ++f) grids.push_back(true_floor_grid(world, f));

  auto stair_point = [&](int cx, int cy) {
    return Point3::world((cx + 0.5) * world.resolution,
                         (cy + 0.5) * world.resolution, 0.0);
  };
  for (int pass = 0; pass <= n_floors; ++pass) {
    bool improved = false;
    for (int f = 0; f < n_floors; ++f) {
      if (seeds[f].empty()) continue;
      try {
        DistanceField df =
            fmm_field_multi(grids[f], seeds[f], 0.0, {cover.position()});
        if (!out.per_floor[f]) improved = true;
        out.per_floor[f] = std::move(df);
      } catch (const Error&) {
      }
    }
    for (const StairLink& link : world.stair_links) {
      auto propagate = [&](int fa, int ax, int ay, int fb, int bx, int by) {
        if (!out.per_floor[fa]) return;
        const Point3 pa = stair_point(ax, ay);
        const double da = out.per_floor[fa]->at_world(pa.x, pa.y);
        if (!std::isfinite(da)) return;
        const Point3 pb = stair_point(bx, by);
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
    if (!improved) break;
  }
  return out;
}

std::string format_pose(const Pose& p) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "(%.2f, %.2f) yaw %.0f floor %d", p.x, p.y,
                p.yaw, p.floor_id);
  return buf;
}

Intrinsics view_intrinsics(const View& view) {
  Intrinsics k;
  k.width = view.width;
  k.height = view.height;
  k.fx = k.fy = view.width / 2.0;
  k.cx = view.width / 2.0;
  k.cy = view.height / 2.0;
  return k;
}

// Per-episode engine: all mutable loop state lives here.
class EpisodeEngine {
 public:
  EpisodeEngine(const WorldModel& world, DecisionBackend& backend,
                const EpisodeConfig& config)
      : world_(world),
        backend_(backend),
        config_(config),
        aerial_(world.variant == WorldVariant::aerial3d),
        belief3_(world.voxel_resolution),
        max_range_(aerial_ ? kAerialMaxRange : kGroundMaxRange) {
    agent_.pose = world.start_pose;
    trace_.world_name = config.world_name;
    trace_.seed = config.seed;
    trace_.ablation = config.ablation;
    trace_.poses.push_back(agent_.pose);
    if (!aerial_) goal_fields_ = build_goal_fields(world, world.start_pose);
    sim_.world = &world_;
    sim_.agent = &agent_;
    sim_.waypoints = &buffer_;
    backend_.set_sim_context(&sim_);
    backend_.reseed(config.seed);
  }

  EpisodeTrace run() {
    try {
      if (config_.ablation.tdm) init_todo();
      while (!agent_.stopped && trace_.final.steps_taken < config_.t_max &&
             trace_.final.lang_calls < config_.lang_calls_cap) {
        decision_round();
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendError) {
        trace_.final.failure_reason = "BackendError";
      } else {
        trace_.final.failure_reason = to_string(e.code());
      }
    }
    finalize();
    return std::move(trace_);
  }

 private:
  // --- backend calls with the parse-retry ladder ---

  std::string raw_lang_call(const PromptPayload& payload) {
    ++trace_.final.lang_calls;
    return backend_.decide_lang(payload);
  }

  LangDecision call_lang(const PromptPayload& payload, const char* role) {
    std::string raw;
    for (int attempt = 0; attempt < 3; ++attempt) {
      raw = raw_lang_call(payload);
      try {
        LangDecision d = parse_lang_response(raw);
        log_decision(role, raw, action_to_text(d.action), d.warnings);
        return d;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnparseableDecision) throw;
      }
    }
    LangDecision d;
    d.action = TurnAction{TurnDirection::front};
    d.warnings.push_back("unparseable after retries; fallback turn(front)");
    log_decision(role, raw, action_to_text(d.action), d.warnings);
    return d;
  }

  std::optional<VisDecision> call_vis(const PromptPayload& payload,
                                      const View& view) {
    std::string raw;
    for (int attempt = 0; attempt < 3; ++attempt) {
      try {
        raw = backend_.decide_vis(payload);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::GroundingFailed) {
          log_decision("vis", "", "grounding-failed", {e.what()});
          return std::nullopt;
        }
        throw;
      }
      try {
        VisDecision d = parse_vis_response(raw, view.width, view.height);
        log_decision("vis", raw, "select", d.warnings);
        return d;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnparseableDecision) throw;
      }
    }
    log_decision("vis", raw, "unparseable", {"vis unparseable after retries"});
    return std::nullopt;
  }

  void log_decision(const std::string& role, const std::string& raw,
                    const std::string& parsed,
                    const std::vector<std::string>& warnings) {
    DecisionRecord rec;
    rec.round = round_;
    rec.role = role;
    rec.raw = raw;
    rec.parsed_action = parsed;
    rec.warnings = warnings;
    if (config_.ablation.tdm) {
      rec.todo_snapshot = render_text(todo_);
      rec.todo_revision = todo_.revision;
    }
    trace_.decisions.push_back(std::move(rec));
  }

  // --- checklist ---

  void init_todo() {
    const PromptPayload payload = build_init_prompt(world_.task);
    ++trace_.final.lang_calls;
    std::vector<std::string> items;
    try {
      items = parse_init_response(backend_.decide_lang(payload));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendError) throw;
    }
    if (items.empty()) items.push_back("reach the goal");
    todo_ = init_list(items);
    log_decision("init", "", "init_list(" + std::to_string(items.size()) + ")",
                 {});
  }

  void apply_todo(const LangDecision& d) {
    if (!config_.ablation.tdm) return;
    std::vector<std::string> warnings;
    todo_ = apply(todo_, d.todo_ops, warnings);
    if (!trace_.decisions.empty()) {
      DecisionRecord& rec = trace_.decisions.back();
      rec.todo_snapshot = render_text(todo_);
      rec.todo_revision = todo_.revision;
      for (const std::string& w : warnings) rec.warnings.push_back(w);
    }
  }

  // --- observation / mapping ---

  OccupancyGrid& belief_grid() {
    auto it = belief2_.find(agent_.pose.floor_id);
    if (it == belief2_.end()) {
      it = belief2_
               .emplace(agent_.pose.floor_id, OccupancyGrid(world_.resolution))
               .first;
    }
    return it->second;
  }

  PanoramaObservation observe() {
    PanoramaObservation pano = render_panorama(world_, agent_.pose);
    if (aerial_) {
      integrate_panorama_3d(belief3_, agent_.pose, pano, max_range_);
    } else {
      integrate_panorama(belief_grid(), agent_.pose, pano, max_range_);
    }
    return pano;
  }

  // --- low-level execution ---

  void record_step(const std::string& action, bool collided) {
    StepRecord rec;
    rec.index = trace_.final.steps_taken;
    rec.pose = agent_.pose;
    rec.action = action;
    rec.collided = collided;
    trace_.steps.push_back(rec);
    trace_.poses.push_back(agent_.pose);
    step_refs_.push_back(
        TraceStepRef{agent_.pose, "s" + std::to_string(rec.index) + ":front"});
    update_oracle_success();
  }

  void update_oracle_success() {
    if (trace_.final.oracle_success) return;
    double d;
    if (aerial_) {
      d = std::numeric_limits<double>::infinity();
      for (const Point3& g : world_.task.goal_positions) {
        d = std::min(d, distance(agent_.pose.position(), g));
      }
    } else {
      d = goal_fields_.at(agent_.pose);
    }
    if (d <= world_.task.success_radius) trace_.final.oracle_success = true;
  }

  bool step_budget_left() const {
    return trace_.final.steps_taken < config_.t_max;
  }

  void do_step(LowLevelAction a) {
    agent_ = step(world_, agent_, a);
    ++trace_.final.steps_taken;
    record_step(to_string(a), agent_.collided_last_step);
  }

  // Walks the planned path with discrete actions; returns meters advanced.
  double execute_path_ground(const PlanPath& path, int max_steps) {
    const Pose start = agent_.pose;
    int used = 0;
    std::size_t wp = 0;
    bool gave_up = false;
    while (used < max_steps && step_budget_left() && wp < path.waypoints.size() &&
           !gave_up) {
      const Point3& target = path.waypoints[wp];
      const double dx = target.x - agent_.pose.x;
      const double dy = target.y - agent_.pose.y;
      if (std::hypot(dx, dy) < 0.15) {
        ++wp;
        continue;
      }
      const double delta = normalize_yaw(bearing_deg(dx, dy) - agent_.pose.yaw);
      LowLevelAction a;
      if (delta > 15.0 && delta < 345.0) {
        a = delta < 180.0 ? LowLevelAction::turn_left
                          : LowLevelAction::turn_right;
      } else {
        a = LowLevelAction::move_forward;
      }
      do_step(a);
      ++used;
      if (agent_.collided_last_step) gave_up = true;
    }
    return std::hypot(agent_.pose.x - start.x, agent_.pose.y - start.y);
  }

  // Aerial: direct waypoint segments, at most `cap_meters` per round, swept
  // against the true voxels so unseen buildings still stop the agent.
  double execute_path_aerial(const PlanPath& path, double cap_meters) {
    const Pose start = agent_.pose;
    double budget = cap_meters;
    for (std::size_t wp = 0; wp < path.waypoints.size() && budget > 1e-6 &&
                             step_budget_left();
         ++wp) {
      Point3 target = path.waypoints[wp];
      target.z = std::clamp(target.z, 2.0, 40.0);
      double dx = target.x - agent_.pose.x;
      double dy = target.y - agent_.pose.y;
      double dz = target.z - agent_.pose.z;
      double len = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (len < 1e-6) continue;
      const double seg = std::min(len, budget);
      dx /= len;
      dy /= len;
      dz /= len;
      // Sweep against ground truth; stop shy of the first solid voxel.
      double free_t = seg;
      bool collided = false;
      traverse_ray_3d(
          agent_.pose.x, agent_.pose.y, agent_.pose.z, dx, dy, dz,
          world_.voxel_resolution, seg,
          [&](int cx, int cy, int cz, double t_entry, double) {
            if (cz < 0) {
              collided = true;
              free_t = std::max(0.0, t_entry - 0.05);
              return false;
            }
            if (world_.voxels.in_bounds(cx, cy, cz) &&
                world_.voxels.occupied[world_.voxels.index(cx, cy, cz)]) {
              collided = true;
              free_t = std::max(0.0, t_entry - 0.05);
              return false;
            }
            return true;
          });
      agent_.pose.x += dx * free_t;
      agent_.pose.y += dy * free_t;
      agent_.pose.z += dz * free_t;
      if (std::hypot(dx, dy) > 1e-6) {
        agent_.pose.yaw = bearing_deg(dx, dy);
      }
      budget -= free_t;
      trace_.final.steps_taken += std::max(
          1, static_cast<int>(std::lround(free_t / kForwardStep)));
      record_step("waypoint_move", collided);
      if (collided) break;
    }
    return distance(agent_.pose.position(), start.position());
  }

  // --- side-channel bookkeeping for scripted backends ---

  void update_visited_subgoals() {
    const auto& subs = world_.task.ordered_subgoal_positions;
    visited_subgoals_.resize(subs.size(), false);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (visited_subgoals_[i]) continue;
      if (world_.task.subgoal_floor(i) != agent_.pose.floor_id) break;
      if (std::hypot(agent_.pose.x - subs[i].x, agent_.pose.y - subs[i].y) <=
          world_.task.success_radius) {
        visited_subgoals_[i] = true;
      } else {
        break;  // ordered chain: stop at the first unvisited sub-goal
      }
    }
  }

  std::string current_target_label() {
    update_visited_subgoals();
    for (std::size_t i = 0; i < visited_subgoals_.size(); ++i) {
      if (!visited_subgoals_[i]) {
        return i < world_.task.subgoal_labels.size()
                   ? world_.task.subgoal_labels[i]
                   : world_.task.goal_label;
      }
    }
    return world_.task.goal_label;
  }

  // --- decision round (one iteration of the episode loop) ---

  void decision_round() {
    ++round_;
    const PanoramaObservation pano = observe();
    const std::string pano_key = "pano" + std::to_string(round_);
    const std::string caption =
        "waypoint at " + format_pose(agent_.pose);
    const int wp_id = buffer_.record_waypoint(
        agent_.pose, pano_key, caption,
        static_cast<int>(step_refs_.size()));
    step_refs_.push_back(TraceStepRef{
        agent_.pose, "s" + std::to_string(trace_.final.steps_taken) + ":wp"});
    trace_.waypoint_events.push_back(WaypointEvent{wp_id, agent_.pose, "record"});
    history_.push_back(HistoryEntry{wp_id, caption});

    const PromptPayload payload = build_lang_prompt(
        world_.task, pano, history_,
        config_.ablation.tdm ? &todo_ : nullptr, trace_.final.steps_taken,
        max_range_);
    LangDecision d = call_lang(payload, "lang");
    apply_todo(d);
    const bool progressed = dispatch(d.action, pano, wp_id);
    after_round(progressed);
  }

  void after_round(bool progressed) {
    if (progressed) {
      consecutive_blocked_ = 0;
      return;
    }
    ++consecutive_blocked_;
    if (consecutive_blocked_ < 3) return;
    consecutive_blocked_ = 0;
    if (!config_.ablation.scb ||
        trace_.final.backtracks >= kMaxBacktracksPerEpisode) {
      return;
    }
    // Automatic dead-end escape: return to the most recent waypoint that is
    // meaningfully away from the current pose.
    for (auto it = buffer_.records().rbegin(); it != buffer_.records().rend();
         ++it) {
      if (it->pose.floor_id == agent_.pose.floor_id &&
          std::hypot(it->pose.x - agent_.pose.x,
                     it->pose.y - agent_.pose.y) > 0.5) {
        do_backtrack(it->id);
        return;
      }
    }
  }

  // Returns true when the round made real progress (moved or legitimately
  // stopped/translated); false marks a blocked round.
  bool dispatch(const LangAction& action, const PanoramaObservation& pano,
                int wp_id, int depth = 0) {
    if (const auto* t = std::get_if<TurnAction>(&action)) {
      buffer_.set_direction(wp_id, t->dir);
      return do_turn(*t, pano);
    }
    if (const auto* b = std::get_if<BacktrackAction>(&action)) {
      if (!config_.ablation.scb) {
        log_decision("lang", "", "backtrack-ignored",
                     {"backtracking disabled by configuration"});
        return false;
      }
      if (trace_.final.backtracks >= kMaxBacktracksPerEpisode || depth > 1) {
        log_decision("lang", "", "backtrack-capped",
                     {"per-episode backtrack cap reached"});
        return false;
      }
      return do_backtrack(b->waypoint_id, depth);
    }
    if (const auto* g = std::get_if<GoStairAction>(&action)) {
      return do_stair(*g);
    }
    const auto& dc = std::get<DoubleCheckAction>(action);
    return do_double_check(dc, pano);
  }

  bool do_turn(const TurnAction& turn, const PanoramaObservation& pano) {
    const std::string dir_name = to_string(turn.dir);
    auto vit = pano.views.find(dir_name);
    if (vit == pano.views.end()) return false;
    const View& view = vit->second;
    sim_.vis_view = &view;
    sim_.vis_direction = dir_name;
    sim_.vis_target_label = current_target_label();
    const PromptPayload vp = build_vis_prompt(
        world_.task, view, dir_name, trace_.final.steps_taken, max_range_);
    std::optional<VisDecision> vis = call_vis(vp, view);
    if (!vis) return aerial_ ? aerial_fallback(view) : false;

    Point3 target;
    try {
      target = resolve_target_point(*vis, view, agent_.pose,
                                    view.yaw_offset);
    } catch (const Error& e) {
      log_decision("vis", "", "no-depth", {e.what()});
      return aerial_ ? aerial_fallback(view) : false;
    }

    try {
      if (aerial_) {
        target.z = std::clamp(target.z, 2.0, 40.0);
        const PlanPath path = plan_3d(belief3_, agent_.pose.position(),
                                      nudge_voxel_target(belief3_, target));
        return execute_path_aerial(path, 5.0) > 0.25;
      }
      const PlanPath path = plan_to(belief_grid(), agent_.pose, target);
      return execute_path_ground(path, config_.steps_per_round) > 0.1;
    } catch (const Error& e) {
      log_decision("plan", "", "plan-failed", {e.what()});
      return false;
    }
  }

  bool aerial_fallback(const View& chosen_view) {
    // Direction-constrained module: safe waypoint along the chosen bearing.
    double hx, hy;
    heading(normalize_yaw(agent_.pose.yaw + chosen_view.yaw_offset), hx, hy);
    try {
      const Point3 wp = direction_constrained_waypoint(
          world_.start_pose, agent_.pose, Point3::world(hx, hy, 0.0),
          chosen_view);
      PlanPath direct;
      direct.waypoints = {wp};
      direct.length = distance(agent_.pose.position(), wp);
      return execute_path_aerial(direct, 5.0) > 0.25;
    } catch (const Error& e) {
      // Blocked ahead: rotate in place and try again next round.
      log_decision("plan", "", "blocked-ahead", {e.what()});
      agent_.pose.yaw = normalize_yaw(agent_.pose.yaw + kTurnStep);
      record_step("turn_left", false);
      return false;
    }
  }

  bool do_stair(const GoStairAction& g) {
    for (const StairLink& link : world_.stair_links) {
      int cx, cy, ox, oy, other;
      if (link.floor_a == agent_.pose.floor_id) {
        cx = link.ax;
        cy = link.ay;
        ox = link.bx;
        oy = link.by;
        other = link.floor_b;
      } else if (link.floor_b == agent_.pose.floor_id) {
        cx = link.bx;
        cy = link.by;
        ox = link.ax;
        oy = link.ay;
        other = link.floor_a;
      } else {
        continue;
      }
      const bool up = other > agent_.pose.floor_id;
      if (up != g.up) continue;
      const double d = std::hypot(agent_.pose.x - (cx + 0.5) * world_.resolution,
                                  agent_.pose.y - (cy + 0.5) * world_.resolution);
      if (d > 1.0) continue;
      agent_.pose.x = (ox + 0.5) * world_.resolution;
      agent_.pose.y = (oy + 0.5) * world_.resolution;
      agent_.pose.floor_id = other;
      ++trace_.final.steps_taken;
      record_step(g.up ? "go_stair_up" : "go_stair_down", false);
      return true;
    }
    log_decision("lang", "", "stair-missing",
                 {"no matching stair link within reach"});
    return false;
  }

  bool do_double_check(const DoubleCheckAction& dc,
                       const PanoramaObservation& pano) {
    if (!dc.stop) return false;
    const PromptPayload payload = build_verification_prompt(
        world_.task, pano, trace_.final.steps_taken, max_range_);
    ++trace_.final.lang_calls;
    bool confirmed = false;
    std::string raw;
    try {
      raw = backend_.decide_lang(payload);
      confirmed = parse_verification_response(raw);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendError) throw;
    }
    log_decision("verification", raw, confirmed ? "confirm" : "reject", {});
    if (!confirmed) {
      ++consecutive_failed_verifications_;
      if (consecutive_failed_verifications_ >= 2) {
        trace_.decisions.back().warnings.push_back(
            "second consecutive failed verification; forcing continuation");
        consecutive_failed_verifications_ = 0;
      }
      return false;
    }
    consecutive_failed_verifications_ = 0;
    agent_ = step(world_, agent_, LowLevelAction::stop);
    ++trace_.final.steps_taken;
    record_step("stop", false);
    trace_.final.stopped = true;
    trace_.final.eqa_answer = dc.answer;
    return true;
  }

  bool do_backtrack(int k, int depth = 0) {
    const WaypointRecord* rec = buffer_.find(k);
    if (rec == nullptr) {
      log_decision("lang", "", "backtrack-unknown",
                   {"waypoint " + std::to_string(k) + " not in buffer"});
      return false;
    }
    if (rec->pose.floor_id != agent_.pose.floor_id) {
      log_decision("lang", "", "backtrack-crossfloor",
                   {"waypoint on another floor; skipped"});
      return false;
    }
    // Evidence must reflect the failed segment before the return trip.
    std::optional<RecoveryContext> ctx;
    try {
      ctx = assemble_recovery_context(buffer_, k, step_refs_);
    } catch (const Error&) {
      // No steps since the waypoint: a no-op backtrack.
    }
    try {
      if (aerial_) {
        const PlanPath path =
            plan_3d(belief3_, agent_.pose.position(), rec->pose.position());
        ++trace_.final.backtracks;
        trace_.waypoint_events.push_back(
            WaypointEvent{k, rec->pose, "backtrack"});
        execute_path_aerial(path, 10.0);
      } else {
        const PlanPath path = backtrack_path(buffer_, k, belief_grid(),
                                             agent_.pose);
        ++trace_.final.backtracks;
        trace_.waypoint_events.push_back(
            WaypointEvent{k, rec->pose, "backtrack"});
        execute_path_ground(path, config_.t_max - trace_.final.steps_taken);
      }
    } catch (const Error& e) {
      log_decision("lang", "", "backtrack-failed", {e.what()});
      return false;
    }
    if (!ctx) return true;

    // Recovery re-decision on a fresh panorama at the waypoint.
    const PanoramaObservation pano = observe();
    std::vector<EncodedImage> frames;
    for (std::size_t i = 0; i < ctx->failed.poses.size(); ++i) {
      const View v = render_view(world_, ctx->failed.poses[i], 0.0);
      frames.push_back(EncodedImage{
          "failed frame " + std::to_string(i + 1),
          encode_gray_png(v.width, v.height, depth_to_gray(v, max_range_))});
    }
    const PromptPayload payload = build_recovery_prompt(
        world_.task, pano, ctx->failed_direction, frames,
        trace_.final.steps_taken, max_range_);
    LangDecision d = call_lang(payload, "recovery");
    apply_todo(d);
    return dispatch(d.action, pano, k, depth + 1);
  }

  void finalize() {
    trace_.final.distance_to_goal = check_goal(world_, agent_.pose).distance;
    trace_.final.success =
        trace_.final.stopped &&
        trace_.final.distance_to_goal <= world_.task.success_radius;
    if (trace_.final.success) trace_.final.oracle_success = true;
    double p = 0.0;
    for (std::size_t i = 1; i < trace_.poses.size(); ++i) {
      if (trace_.poses[i].floor_id != trace_.poses[i - 1].floor_id) continue;
      p += std::hypot(trace_.poses[i].x - trace_.poses[i - 1].x,
                      trace_.poses[i].y - trace_.poses[i - 1].y);
    }
    trace_.final.path_length = p;
  }

  const WorldModel& world_;
  DecisionBackend& backend_;
  EpisodeConfig config_;
  bool aerial_;

  AgentState agent_;
  std::map<int, OccupancyGrid> belief2_;
  OccupancyGrid3 belief3_;
  double max_range_;
  GoalFields goal_fields_;

  TodoList todo_;
  WaypointBuffer buffer_;
  std::vector<HistoryEntry> history_;
  std::vector<TraceStepRef> step_refs_;
  std::vector<bool> visited_subgoals_;
  SimContext sim_;

  int round_ = 0;
  int consecutive_blocked_ = 0;
  int consecutive_failed_verifications_ = 0;
  EpisodeTrace trace_;
};

}  // namespace

EpisodeTrace run_episode(const WorldModel& world, DecisionBackend& backend,
                         const EpisodeConfig& config) {
  EpisodeEngine engine(world, backend, config);
  return engine.run();
}

Point3 resolve_target_point(const VisDecision& vis, const View& view,
                            const Pose& pose, double yaw_offset) {
  int u0, v0, u1, v1, cu, cv;
  if (vis.is_box) {
    u0 = vis.box.u_min;
    v0 = vis.box.v_min;
    u1 = vis.box.u_max;
    v1 = vis.box.v_max;
    cu = (u0 + u1) / 2;
    cv = (v0 + v1) / 2;
  } else {
    cu = vis.point.u;
    cv = vis.point.v;
    u0 = std::max(0, cu - 2);
    v0 = std::max(0, cv - 2);
    u1 = std::min(view.width - 1, cu + 2);
    v1 = std::min(view.height - 1, cv + 2);
  }
  auto valid = [&](int u, int v) {
    if (u < u0 || u > u1 || v < v0 || v > v1) return false;
    const double d = view.depth_at(u, v);
    return std::isfinite(d) && d > 0.0;
  };
  int pu = -1, pv = -1;
  const int max_r = std::max(u1 - u0, v1 - v0);
  for (int r = 0; r <= max_r && pu < 0; ++r) {
    // Chebyshev ring scan outward from the box center.
    for (int dv = -r; dv <= r && pu < 0; ++dv) {
      for (int du = -r; du <= r; ++du) {
        if (std::max(std::abs(du), std::abs(dv)) != r) continue;
        if (valid(cu + du, cv + dv)) {
          pu = cu + du;
          pv = cv + dv;
          break;
        }
      }
    }
  }
  if (pu < 0) {
    throw Error(ErrorCode::GroundingDepthFailure,
                "no valid depth anywhere inside the selection");
  }
  const Intrinsics k = view_intrinsics(view);
  const Point3 cam = backproject(pu, pv, view.depth_at(pu, pv), k);
  return cam_to_world(cam, pose, yaw_offset, view.pitch);
}

// ---------------------------------------------------------------------------
// Trace serialization
// ---------------------------------------------------------------------------

namespace {

ordered_json pose_to_json(const Pose& p) {
  return ordered_json::array({p.x, p.y, p.z, p.yaw, p.floor_id});
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
  p.z = j.at(2).get<double>();
  p.yaw = j.at(3).get<double>();
  p.floor_id = j.at(4).get<int>();
  return p;
}

}  // namespace

std::string trace_to_jsonl(const EpisodeTrace& trace) {
  std::ostringstream out;
  {
    ordered_json j;
    j["type"] = "header";
    j["world"] = trace.world_name;
    j["seed"] = trace.seed;
    j["ablation"] = {{"tdm", trace.ablation.tdm}, {"scb", trace.ablation.scb}};
    j["start_pose"] = pose_to_json(trace.poses.empty() ? Pose{}
                                                       : trace.poses.front());
    out << j.dump() << "\n";
  }
  for (const StepRecord& s : trace.steps) {
    ordered_json j;
    j["type"] = "step";
    j["index"] = s.index;
    j["pose"] = pose_to_json(s.pose);
    j["action"] = s.action;
    j["collided"] = s.collided;
    out << j.dump() << "\n";
  }
  for (const DecisionRecord& d : trace.decisions) {
    ordered_json j;
    j["type"] = "decision";
    j["round"] = d.round;
    j["role"] = d.role;
    j["raw"] = d.raw;
    j["parsed_action"] = d.parsed_action;
    j["warnings"] = d.warnings;
    if (d.todo_revision >= 0) {
      j["todo_revision"] = d.todo_revision;
      j["todo_snapshot"] = d.todo_snapshot;
    }
    out << j.dump() << "\n";
  }
  for (const WaypointEvent& w : trace.waypoint_events) {
    ordered_json j;
    j["type"] = "waypoint";
    j["id"] = w.id;
    j["pose"] = pose_to_json(w.pose);
    j["kind"] = w.kind;
    out << j.dump() << "\n";
  }
  {
    const EpisodeFinal& f = trace.final;
    ordered_json j;
    j["type"] = "final";
    j["success"] = f.success;
    j["oracle_success"] = f.oracle_success;
    j["stopped"] = f.stopped;
    j["distance_to_goal"] = f.distance_to_goal;
    j["path_length"] = f.path_length;
    j["steps_taken"] = f.steps_taken;
    j["lang_calls"] = f.lang_calls;
    j["backtracks"] = f.backtracks;
    j["eqa_answer"] = f.eqa_answer;
    j["failure_reason"] = f.failure_reason;
    out << j.dump() << "\n";
  }
  return out.str();
}

EpisodeTrace trace_from_jsonl(const std::string& text) {
  EpisodeTrace trace;
  std::istringstream in(text);
  std::string line;
  bool saw_final = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
      throw Error(ErrorCode::SchemaMismatch, "bad trace line: " + line);
    }
    const std::string type = j["type"].get<std::string>();
    if (type == "header") {
      trace.world_name = j.value("world", "");
      trace.seed = j.value("seed", 0u);
      trace.ablation.tdm = j["ablation"].value("tdm", true);
      trace.ablation.scb = j["ablation"].value("scb", true);
      trace.poses.push_back(pose_from_json(j.at("start_pose")));
    } else if (type == "step") {
      StepRecord s;
      s.index = j.value("index", 0);
      s.pose = pose_from_json(j.at("pose"));
      s.action = j.value("action", "");
      s.collided = j.value("collided", false);
      trace.steps.push_back(s);
      trace.poses.push_back(s.pose);
    } else if (type == "decision") {
      DecisionRecord d;
      d.round = j.value("round", 0);
      d.role = j.value("role", "");
      d.raw = j.value("raw", "");
      d.parsed_action = j.value("parsed_action", "");
      d.warnings = j.value("warnings", std::vector<std::string>{});
      d.todo_revision = j.value("todo_revision", -1);
      d.todo_snapshot = j.value("todo_snapshot", "");
      trace.decisions.push_back(std::move(d));
    } else if (type == "waypoint") {
      WaypointEvent w;
      w.id = j.value("id", 0);
      w.pose = pose_from_json(j.at("pose"));
      w.kind = j.value("kind", "");
      trace.waypoint_events.push_back(w);
    } else if (type == "final") {
      EpisodeFinal& f = trace.final;
      f.success = j.value("success", false);
      f.oracle_success = j.value("oracle_success", false);
      f.stopped = j.value("stopped", false);
      f.distance_to_goal = j.value("distance_to_goal", 0.0);
      f.path_length = j.value("path_length", 0.0);
      f.steps_taken = j.value("steps_taken", 0);
      f.lang_calls = j.value("lang_calls", 0);
      f.backtracks = j.value("backtracks", 0);
      f.eqa_answer = j.value("eqa_answer", "");
      f.failure_reason = j.value("failure_reason", "");
      saw_final = true;
    }
  }
  if (!saw_final) {
    throw Error(ErrorCode::SchemaMismatch, "trace has no final record");
  }
  return trace;
}

void save_trace(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::BadConfig, "cannot write " + path);
  out << trace_to_jsonl(trace);
}

EpisodeTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return trace_from_jsonl(ss.str());
}

std::string trace_file_name(const std::string& world_name, unsigned seed) {
  return world_name + "_" + std::to_string(seed) + ".trace.jsonl";
}

}  // namespace unav
