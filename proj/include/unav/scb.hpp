#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "unav/agent.hpp"
#include "unav/planner.hpp"

namespace unav {

inline constexpr int kWaypointBufferCapacity = 64;
inline constexpr int kMaxBacktracksPerEpisode = 5;
inline constexpr int kMaxRecoveryFrames = 8;

struct WaypointRecord {
  int id = 0;
  Pose pose;
  std::string panorama_key;
  std::string caption;
  std::optional<TurnDirection> chosen_direction;  // set when the agent leaves
  int step_index = 0;  // position in the low-level step log when recorded
};

/// Bounded FIFO of visited decision waypoints; ids increase strictly and
/// the oldest record is evicted at capacity.
class WaypointBuffer {
 public:
  explicit WaypointBuffer(int capacity = kWaypointBufferCapacity)
      : capacity_(capacity) {}

  int record_waypoint(const Pose& pose, const std::string& panorama_key,
                      const std::string& caption, int step_index);

  const WaypointRecord* find(int id) const;
  WaypointRecord* find(int id);

  void set_direction(int id, TurnDirection dir);

  std::size_t size() const { return records_.size(); }
  int latest_id() const { return next_id_ - 1; }
  const std::deque<WaypointRecord>& records() const { return records_; }

 private:
  int capacity_;
  int next_id_ = 0;
  std::deque<WaypointRecord> records_;
};

/// One logged low-level step: where the agent was and which keyed view the
/// trace stored for it.
struct TraceStepRef {
  Pose pose;
  std::string frame_key;
};

struct FailedSubTrajectory {
  int origin_wp = 0;
  std::vector<std::string> frames;  // keyed views, chronological
  std::vector<Pose> poses;
  TurnDirection failed_direction = TurnDirection::front;
};

struct RecoveryContext {
  std::string panorama_key;
  TurnDirection failed_direction = TurnDirection::front;
  FailedSubTrajectory failed;
};

/// Return path to waypoint k planned on the CURRENT belief map, never the
/// map at recording time.
PlanPath backtrack_path(const WaypointBuffer& buffer, int k,
                        const OccupancyGrid& belief_grid,
                        const Pose& current_pose);

/// The three recovery evidence pieces: the panorama key at wp_k, the failed
/// direction chosen when leaving it, and at most 8 evenly subsampled frames
/// of the failed sub-trajectory. `steps` is the episode's low-level step
/// log; the slice after the waypoint's step_index is the failed segment.
RecoveryContext assemble_recovery_context(const WaypointBuffer& buffer, int k,
                                          const std::vector<TraceStepRef>& steps);

}  // namespace unav
