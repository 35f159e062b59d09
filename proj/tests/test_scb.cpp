#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "unav/scb.hpp"

using namespace unav;

namespace {

Pose pose_at(double x, double y) {
  Pose p;
  p.x = x;
  p.y = y;
  return p;
}

std::vector<TraceStepRef> step_log(int count) {
  std::vector<TraceStepRef> steps;
  for (int i = 0; i < count; ++i) {
    steps.push_back(TraceStepRef{pose_at(0.1 * i, 0.0),
                                 "frame" + std::to_string(i)});
  }
  return steps;
}

}  // namespace

TEST_CASE("waypoint ids increase strictly and records round-trip") {
  WaypointBuffer buffer;
  const int a = buffer.record_waypoint(pose_at(1.0, 2.0), "pano-a", "start", 0);
  const int b = buffer.record_waypoint(pose_at(3.0, 4.0), "pano-b", "hall", 5);
  CHECK(b == a + 1);
  CHECK(buffer.latest_id() == b);
  CHECK(buffer.size() == 2);

  const WaypointRecord* rec = buffer.find(a);
  REQUIRE(rec != nullptr);
  CHECK(rec->pose.x == 1.0);
  CHECK(rec->panorama_key == "pano-a");
  CHECK(rec->caption == "start");
  CHECK(rec->step_index == 0);
  CHECK(!rec->chosen_direction.has_value());
  CHECK(buffer.find(99) == nullptr);
}

TEST_CASE("the buffer is a bounded FIFO that evicts the oldest record") {
  WaypointBuffer buffer(4);
  for (int i = 0; i < 10; ++i) {
    buffer.record_waypoint(pose_at(i, 0.0), "p" + std::to_string(i), "", i);
  }
  CHECK(buffer.size() == 4);
  CHECK(buffer.find(5) == nullptr);  // evicted
  REQUIRE(buffer.find(6) != nullptr);
  CHECK(buffer.latest_id() == 9);
  // Surviving records stay in chronological order.
  int prev = -1;
  for (const WaypointRecord& rec : buffer.records()) {
    CHECK(rec.id > prev);
    prev = rec.id;
  }
  // Ids never restart after eviction.
  CHECK(buffer.record_waypoint(pose_at(0, 0), "p", "", 10) == 10);
}

TEST_CASE("the default capacity matches the published constant") {
  WaypointBuffer buffer;
  for (int i = 0; i < kWaypointBufferCapacity + 8; ++i) {
    buffer.record_waypoint(pose_at(i, 0.0), "", "", i);
  }
  CHECK(static_cast<int>(buffer.size()) == kWaypointBufferCapacity);
}

TEST_CASE("set_direction annotates the record the agent left from") {
  WaypointBuffer buffer;
  const int id = buffer.record_waypoint(pose_at(0, 0), "p", "", 0);
  buffer.set_direction(id, TurnDirection::left);
  REQUIRE(buffer.find(id)->chosen_direction.has_value());
  CHECK(*buffer.find(id)->chosen_direction == TurnDirection::left);
  buffer.set_direction(id + 5, TurnDirection::back);  // unknown id: no-op
  CHECK(*buffer.find(id)->chosen_direction == TurnDirection::left);
}

TEST_CASE("backtrack_path plans on the current belief, not the recording") {
  // Open 4 m x 2 m room, 0.05 m cells, walls on every side.
  OccupancyGrid grid(0.05);
  grid.ensure(0, 0, 79, 39);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 80; ++x) {
      const bool wall = x < 2 || y < 2 || x >= 78 || y >= 38;
      grid.set(x, y, wall ? CellState::occupied : CellState::free);
    }
  }
  WaypointBuffer buffer;
  const int id = buffer.record_waypoint(pose_at(0.5, 0.5), "p", "", 0);

  const PlanPath direct = backtrack_path(buffer, id, grid, pose_at(3.0, 0.5));
  CHECK(direct.length == doctest::Approx(2.5).epsilon(0.1));

  // A wall learned since the visit forces the current plan to differ.
  OccupancyGrid walled = grid;
  for (int y = 2; y < 26; ++y) walled.set(35, y, CellState::occupied);
  const PlanPath around = backtrack_path(buffer, id, walled, pose_at(3.0, 0.5));
  CHECK(around.length > direct.length + 0.3);

  try {
    backtrack_path(buffer, id + 3, grid, pose_at(3.0, 0.5));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownWaypoint);
  }
}

TEST_CASE("assemble_recovery_context gathers the three evidence pieces") {
  WaypointBuffer buffer;
  buffer.record_waypoint(pose_at(0, 0), "pano-0", "", 0);
  const int k = buffer.record_waypoint(pose_at(1, 0), "pano-1", "", 4);
  buffer.set_direction(k, TurnDirection::right);

  const RecoveryContext ctx =
      assemble_recovery_context(buffer, k, step_log(9));
  CHECK(ctx.panorama_key == "pano-1");
  CHECK(ctx.failed_direction == TurnDirection::right);
  CHECK(ctx.failed.origin_wp == k);
  CHECK(ctx.failed.failed_direction == TurnDirection::right);
  // Five steps since the waypoint: all of them, chronological.
  REQUIRE(ctx.failed.frames.size() == 5);
  CHECK(ctx.failed.frames.front() == "frame4");
  CHECK(ctx.failed.frames.back() == "frame8");
  REQUIRE(ctx.failed.poses.size() == 5);
  CHECK(ctx.failed.poses[1].x == doctest::Approx(0.5));
}

TEST_CASE("recovery evidence subsamples long failures to eight frames") {
  WaypointBuffer buffer;
  const int k = buffer.record_waypoint(pose_at(0, 0), "pano", "", 10);
  buffer.set_direction(k, TurnDirection::front);

  const RecoveryContext ctx =
      assemble_recovery_context(buffer, k, step_log(60));
  REQUIRE(static_cast<int>(ctx.failed.frames.size()) == kMaxRecoveryFrames);
  // Endpoints included, indices even and strictly increasing.
  CHECK(ctx.failed.frames.front() == "frame10");
  CHECK(ctx.failed.frames.back() == "frame59");
  int prev = -1, min_gap = 1000, max_gap = 0;
  for (const std::string& f : ctx.failed.frames) {
    const int at = std::stoi(f.substr(5));
    REQUIRE(at > prev);
    if (prev >= 0) {
      min_gap = std::min(min_gap, at - prev);
      max_gap = std::max(max_gap, at - prev);
    }
    prev = at;
  }
  CHECK(max_gap - min_gap <= 1);  // even spacing up to rounding
}

TEST_CASE("assemble_recovery_context rejects unknown or empty failures") {
  WaypointBuffer buffer;
  const int k = buffer.record_waypoint(pose_at(0, 0), "pano", "", 7);
  try {
    assemble_recovery_context(buffer, k + 1, step_log(20));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownWaypoint);
  }
  try {
    // No steps logged after the waypoint was recorded.
    assemble_recovery_context(buffer, k, step_log(8));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyFailure);
  }
}

TEST_CASE("missing chosen_direction defaults the evidence to front") {
  WaypointBuffer buffer;
  const int k = buffer.record_waypoint(pose_at(0, 0), "pano", "", 0);
  const RecoveryContext ctx =
      assemble_recovery_context(buffer, k, step_log(4));
  CHECK(ctx.failed_direction == TurnDirection::front);
}
