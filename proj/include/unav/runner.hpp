#pragma once

#include <string>
#include <vector>

#include "unav/agent.hpp"
#include "unav/scb.hpp"
#include "unav/world.hpp"

namespace unav {

struct AblationConfig {
  bool tdm = true;
  bool scb = true;
};

struct EpisodeConfig {
  int t_max = 500;           // low-level step budget
  int lang_calls_cap = 50;   // decision-round budget
  int steps_per_round = 20;  // short-horizon execution window
  AblationConfig ablation;
  unsigned seed = 0;
  std::string world_name = "world";
};

struct StepRecord {
  int index = 0;
  Pose pose;  // pose after the action
  std::string action;
  bool collided = false;
};

struct DecisionRecord {
  int round = 0;
  std::string role;  // lang | vis | verification | recovery | init
  std::string raw;
  std::string parsed_action;
  std::vector<std::string> warnings;
  std::string todo_snapshot;  // checklist text after applying the batch
  int todo_revision = -1;
};

struct WaypointEvent {
  int id = 0;
  Pose pose;
  std::string kind;  // record | backtrack
};

struct EpisodeFinal {
  bool success = false;
  bool oracle_success = false;
  bool stopped = false;
  double distance_to_goal = 0.0;
  double path_length = 0.0;
  int steps_taken = 0;
  int lang_calls = 0;
  int backtracks = 0;
  std::string eqa_answer;
  std::string failure_reason;
};

struct EpisodeTrace {
  std::string world_name;
  unsigned seed = 0;
  AblationConfig ablation;
  std::vector<Pose> poses;  // executed path: start pose plus one per step
  std::vector<StepRecord> steps;
  std::vector<DecisionRecord> decisions;
  std::vector<WaypointEvent> waypoint_events;
  EpisodeFinal final;
};

/// One full episode of the agent loop: checklist initialization, decision
/// rounds (language action, checklist update, vision grounding, plan,
/// short-horizon execution), stop verification, backtracking with recovery
/// re-decision, and trace logging.
EpisodeTrace run_episode(const WorldModel& world, DecisionBackend& backend,
                         const EpisodeConfig& config);

/// Representative-pixel rule: box center, spiraling outward inside the box
/// for the nearest valid depth; back-projects into the world frame.
Point3 resolve_target_point(const VisDecision& vis, const View& view,
                            const Pose& pose, double yaw_offset);

/// JSONL trace serialization: header line, step/decision/waypoint records,
/// final summary line last. Deterministic byte-for-byte.
std::string trace_to_jsonl(const EpisodeTrace& trace);
EpisodeTrace trace_from_jsonl(const std::string& text);
void save_trace(const EpisodeTrace& trace, const std::string& path);
EpisodeTrace load_trace(const std::string& path);

/// Canonical trace file name: `<world>_<seed>.trace.jsonl`.
std::string trace_file_name(const std::string& world_name, unsigned seed);

}  // namespace unav
