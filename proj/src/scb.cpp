#include "unav/scb.hpp"

#include <cmath>

namespace unav {

int WaypointBuffer::record_waypoint(const Pose& pose,
                                    const std::string& panorama_key,
                                    const std::string& caption,
                                    int step_index) {
  WaypointRecord rec;
  rec.id = next_id_++;
  rec.pose = pose;
  rec.panorama_key = panorama_key;
  rec.caption = caption;
  rec.step_index = step_index;
  records_.push_back(std::move(rec));
  while (static_cast<int>(records_.size()) > capacity_) {
    records_.pop_front();
  }
  return records_.back().id;
}

const WaypointRecord* WaypointBuffer::find(int id) const {
  for (const WaypointRecord& rec : records_) {
    if (rec.id == id) return &rec;
  }
  return nullptr;
}

WaypointRecord* WaypointBuffer::find(int id) {
  for (WaypointRecord& rec : records_) {
    if (rec.id == id) return &rec;
  }
  return nullptr;
}

void WaypointBuffer::set_direction(int id, TurnDirection dir) {
  if (WaypointRecord* rec = find(id)) rec->chosen_direction = dir;
}

PlanPath backtrack_path(const WaypointBuffer& buffer, int k,
                        const OccupancyGrid& belief_grid,
                        const Pose& current_pose) {
  const WaypointRecord* rec = buffer.find(k);
  if (rec == nullptr) {
    throw Error(ErrorCode::UnknownWaypoint,
                "waypoint " + std::to_string(k) + " evicted or never recorded");
  }
  return plan_to(belief_grid, current_pose,
                 Point3::world(rec->pose.x, rec->pose.y, rec->pose.z));
}

RecoveryContext assemble_recovery_context(
    const WaypointBuffer& buffer, int k,
    const std::vector<TraceStepRef>& steps) {
  const WaypointRecord* rec = buffer.find(k);
  if (rec == nullptr) {
    throw Error(ErrorCode::UnknownWaypoint,
                "waypoint " + std::to_string(k) + " evicted or never recorded");
  }
  if (rec->step_index + 1 >= static_cast<int>(steps.size())) {
    throw Error(ErrorCode::EmptyFailure,
                "no steps taken since waypoint " + std::to_string(k));
  }
  RecoveryContext ctx;
  ctx.panorama_key = rec->panorama_key;
  ctx.failed_direction = rec->chosen_direction.value_or(TurnDirection::front);
  ctx.failed.origin_wp = k;
  ctx.failed.failed_direction = ctx.failed_direction;

  const int first = rec->step_index;
  const int n = static_cast<int>(steps.size()) - first;
  const int keep = std::min(n, kMaxRecoveryFrames);
  for (int i = 0; i < keep; ++i) {
    // Even chronological subsample over the failed segment.
    const int at =
        first + (keep == 1
                     ? 0
                     : static_cast<int>(std::llround(
                           static_cast<double>(i) * (n - 1) / (keep - 1))));
    ctx.failed.frames.push_back(steps[at].frame_key);
    ctx.failed.poses.push_back(steps[at].pose);
  }
  return ctx;
}

}  // namespace unav
