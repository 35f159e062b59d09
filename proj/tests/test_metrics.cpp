#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "unav/metrics.hpp"

using namespace unav;

namespace {

WorldModel room_world() {
  WorldModel world;
  world.resolution = 0.05;
  SemanticGrid2D g;
  g.width = 80;
  g.height = 80;
  g.cells.assign(static_cast<std::size_t>(g.width) * g.height, GridCell{});
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (x < 2 || y < 2 || x >= g.width - 2 || y >= g.height - 2) {
        g.at(x, y).occupied = true;
      }
    }
  }
  world.floors.push_back(g);
  world.label_table = {""};
  world.start_pose.x = 0.5;
  world.start_pose.y = 0.5;
  world.task.goal_positions = {Point3::world(3.0, 3.0, 0.0)};
  world.task.success_radius = 1.0;
  return world;
}

EpisodeTrace base_trace(const WorldModel& world) {
  EpisodeTrace trace;
  trace.world_name = "fixture";
  trace.poses = {world.start_pose};
  return trace;
}

Pose pose_at(double x, double y) {
  Pose p;
  p.x = x;
  p.y = y;
  return p;
}

}  // namespace

TEST_CASE("spl is exactly 1 on a shortest-path success") {
  const WorldModel world = room_world();
  const double shortest = shortest_path_length(world);
  REQUIRE(std::isfinite(shortest));

  EpisodeTrace trace = base_trace(world);
  trace.final.stopped = true;
  trace.final.success = true;
  trace.final.distance_to_goal = 0.5;
  trace.final.path_length = shortest;
  const EpisodeMetrics m = compute_metrics(trace, world);
  CHECK(m.sr);
  CHECK(m.osr);
  CHECK(m.spl == 1.0);
  CHECK(m.ne == 0.5);
  CHECK(!m.ndtw.has_value());
  CHECK(!m.acc.has_value());
}

TEST_CASE("spl is exactly one half when the path doubles the optimum") {
  const WorldModel world = room_world();
  const double shortest = shortest_path_length(world);

  EpisodeTrace trace = base_trace(world);
  trace.final.stopped = true;
  trace.final.distance_to_goal = 0.9;
  trace.final.path_length = 2.0 * shortest;
  const EpisodeMetrics m = compute_metrics(trace, world);
  CHECK(m.sr);
  CHECK(std::abs(m.spl - 0.5) < 1e-12);
}

TEST_CASE("spl is exactly 0 on failure, and a too-short path cannot inflate it") {
  const WorldModel world = room_world();
  EpisodeTrace trace = base_trace(world);

  SUBCASE("stopped too far away") {
    trace.final.stopped = true;
    trace.final.distance_to_goal = 5.0;
    CHECK(compute_metrics(trace, world).spl == 0.0);
    CHECK(!compute_metrics(trace, world).sr);
  }
  SUBCASE("never stopped at all") {
    trace.final.stopped = false;
    trace.final.distance_to_goal = 0.2;
    CHECK(compute_metrics(trace, world).spl == 0.0);
  }
  SUBCASE("reported path shorter than the optimum caps spl at 1") {
    trace.final.stopped = true;
    trace.final.distance_to_goal = 0.2;
    trace.final.path_length = 0.0;
    CHECK(compute_metrics(trace, world).spl == 1.0);
  }
}

TEST_CASE("success implies oracle success in the metrics") {
  const WorldModel world = room_world();
  EpisodeTrace trace = base_trace(world);
  trace.final.stopped = true;
  trace.final.distance_to_goal = 0.3;
  trace.final.oracle_success = false;  // recorder missed it
  const EpisodeMetrics m = compute_metrics(trace, world);
  CHECK(m.sr);
  CHECK(m.osr);

  trace.final.stopped = false;
  trace.final.oracle_success = true;
  const EpisodeMetrics m2 = compute_metrics(trace, world);
  CHECK(!m2.sr);
  CHECK(m2.osr);
}

TEST_CASE("ndtw of the reference path against itself is exactly 1") {
  WorldModel world = room_world();
  world.task.family = TaskFamily::VLN;
  world.task.ordered_subgoal_positions = {Point3::world(1.0, 1.0, 0.0),
                                          Point3::world(2.0, 1.5, 0.0),
                                          Point3::world(3.0, 3.0, 0.0)};
  EpisodeTrace trace = base_trace(world);
  trace.poses.clear();
  for (const Point3& p : world.task.ordered_subgoal_positions) {
    trace.poses.push_back(pose_at(p.x, p.y));
  }
  const EpisodeMetrics m = compute_metrics(trace, world);
  REQUIRE(m.ndtw.has_value());
  CHECK(*m.ndtw == 1.0);
}

TEST_CASE("ndtw matches the closed form on a one-point reference") {
  WorldModel world = room_world();
  world.task.family = TaskFamily::VLN;
  world.task.ordered_subgoal_positions = {Point3::world(3.5, 3.5, 0.0)};
  EpisodeTrace trace = base_trace(world);
  trace.poses = {pose_at(0.5, 0.5)};
  const double d = std::hypot(3.0, 3.0);
  const EpisodeMetrics m = compute_metrics(trace, world);
  REQUIRE(m.ndtw.has_value());
  CHECK(std::abs(*m.ndtw - std::exp(-d / world.task.success_radius)) < 1e-12);
}

TEST_CASE("a VLN trace without a reference path is an error") {
  WorldModel world = room_world();
  world.task.family = TaskFamily::VLN;
  EpisodeTrace trace = base_trace(world);
  try {
    compute_metrics(trace, world);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingReference);
  }
}

TEST_CASE("answer accuracy is exact-match, case-insensitive, EQA only") {
  WorldModel world = room_world();
  world.task.family = TaskFamily::EQA;
  world.task.eqa_answer = "Blue Door";
  EpisodeTrace trace = base_trace(world);
  trace.final.eqa_answer = "blue door";
  REQUIRE(compute_metrics(trace, world).acc.has_value());
  CHECK(*compute_metrics(trace, world).acc);
  trace.final.eqa_answer = "blue doors";
  CHECK(!*compute_metrics(trace, world).acc);

  world.task.family = TaskFamily::ObjectNav;
  CHECK(!compute_metrics(trace, world).acc.has_value());
}

TEST_CASE("the failure cascade hits each category on its fixture") {
  const double radius = 3.0;
  const double shortest = 10.0;
  EpisodeFinal f;

  SUBCASE("NotAFailure") {
    f.success = true;
    f.stopped = true;
    f.distance_to_goal = 1.0;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::NotAFailure);
  }
  SUBCASE("WrongAnswerEQA outranks ReachedMissedStop") {
    f.success = true;
    f.oracle_success = true;
    f.distance_to_goal = 1.0;
    CHECK(classify_failure(f, TaskFamily::EQA, radius, shortest, false) ==
          FailureCategory::WrongAnswerEQA);
  }
  SUBCASE("ReachedMissedStop") {
    f.success = false;
    f.oracle_success = true;
    f.distance_to_goal = 8.0;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::ReachedMissedStop);
  }
  SUBCASE("ApproachedUndershot covers (radius, radius + 2]") {
    f.success = false;
    f.distance_to_goal = radius + 2.0;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::ApproachedUndershot);
    f.distance_to_goal = radius + 0.001;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::ApproachedUndershot);
  }
  SUBCASE("WanderedLost needs a path beyond 2.5 times the optimum") {
    f.success = false;
    f.distance_to_goal = radius + 5.0;
    f.path_length = 2.5 * shortest + 0.01;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::WanderedLost);
  }
  SUBCASE("EarlyStopWrongTarget is the residual bucket") {
    f.success = false;
    f.distance_to_goal = radius + 5.0;
    f.path_length = 2.0 * shortest;
    CHECK(classify_failure(f, TaskFamily::ObjectNav, radius, shortest, true) ==
          FailureCategory::EarlyStopWrongTarget);
  }
}

TEST_CASE("the cascade is total and ordered over random final states") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> dist(0.0, 12.0);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> fam_d(0, 3);
  const TaskFamily families[] = {TaskFamily::VLN, TaskFamily::ObjectNav,
                                 TaskFamily::EQA, TaskFamily::AerialVLN};
  for (int i = 0; i < 1000; ++i) {
    EpisodeFinal f;
    f.success = coin(rng) == 1;
    f.oracle_success = coin(rng) == 1;
    f.stopped = coin(rng) == 1;
    f.distance_to_goal = dist(rng);
    f.path_length = dist(rng) * 3.0;
    const TaskFamily family = families[fam_d(rng)];
    const bool eqa_correct = coin(rng) == 1;
    const double radius = 3.0;
    const double shortest = dist(rng) + 0.1;
    const FailureCategory c =
        classify_failure(f, family, radius, shortest, eqa_correct);
    // Totality: always one of the six categories.
    const std::string name = to_string(c);
    CHECK(!name.empty());
    // A success (with a right answer where one is owed) is never a failure.
    if (f.success && (family != TaskFamily::EQA || eqa_correct)) {
      CHECK(c == FailureCategory::NotAFailure);
    } else {
      CHECK(c != FailureCategory::NotAFailure);
    }
    // The oracle-success rungs precede the distance rungs.
    if (c == FailureCategory::ApproachedUndershot) {
      CHECK(!f.oracle_success);
      CHECK(f.distance_to_goal > radius);
      CHECK(f.distance_to_goal <= radius + 2.0);
    }
    if (c == FailureCategory::WanderedLost) {
      CHECK(f.path_length > 2.5 * shortest);
    }
  }
}

TEST_CASE("classify_trace agrees with classify_failure on the trace world") {
  WorldModel world = room_world();
  world.task.family = TaskFamily::EQA;
  world.task.eqa_answer = "two";
  EpisodeTrace trace = base_trace(world);
  trace.final.success = true;
  trace.final.oracle_success = true;
  trace.final.eqa_answer = "three";
  CHECK(classify_trace(trace, world) == FailureCategory::WrongAnswerEQA);
  trace.final.eqa_answer = "TWO";
  CHECK(classify_trace(trace, world) == FailureCategory::NotAFailure);
}

TEST_CASE("aggregate reports per-seed means and sample deviation") {
  EpisodeMetrics hit;
  hit.sr = hit.osr = true;
  hit.spl = 1.0;
  hit.ne = 0.5;
  EpisodeMetrics miss;
  miss.ne = 4.5;

  // Seed 1: one hit, one miss (mean sr 0.5). Seed 2: two hits (mean 1.0).
  const std::vector<std::vector<EpisodeMetrics>> by_seed = {{hit, miss},
                                                            {hit, hit}};
  const std::vector<FailureCategory> failures = {
      FailureCategory::NotAFailure, FailureCategory::WanderedLost,
      FailureCategory::NotAFailure, FailureCategory::NotAFailure};
  const SummaryTable table = aggregate(by_seed, failures);
  CHECK(table.episodes == 4);
  CHECK(table.seeds == 2);
  CHECK(table.metrics.at("sr").mean == doctest::Approx(0.75));
  CHECK(table.metrics.at("sr").stddev ==
        doctest::Approx(std::sqrt(0.125)).epsilon(1e-12));
  CHECK(table.metrics.at("ne").mean == doctest::Approx((2.5 + 0.5) / 2.0));
  CHECK(table.metrics.count("ndtw") == 0);  // no VLN episodes

  CHECK(table.failures.at("NotAFailure").count == 3);
  CHECK(table.failures.at("WanderedLost").count == 1);
  CHECK(table.failures.at("WanderedLost").pct_of_trials ==
        doctest::Approx(25.0));
  CHECK(table.failures.at("WanderedLost").pct_of_failures ==
        doctest::Approx(100.0));
  CHECK(table.failures.at("NotAFailure").pct_of_failures == 0.0);

  const std::string text = summary_to_text(table);
  CHECK(text.find("episodes: 4") != std::string::npos);
  CHECK(text.find("WanderedLost") != std::string::npos);
  const std::string json = summary_to_json(table);
  CHECK(json.find("\"sr\"") != std::string::npos);
  CHECK(summary_to_json(table) == json);  // deterministic

  CHECK_THROWS_AS(aggregate({}, {}), Error);
}

TEST_CASE("optional metrics aggregate only over episodes that carry them") {
  EpisodeMetrics vln;
  vln.ndtw = 0.8;
  EpisodeMetrics plain;
  const SummaryTable table =
      aggregate({{vln, plain}}, {FailureCategory::NotAFailure,
                                 FailureCategory::NotAFailure});
  // The seed mean for ndtw averages the single VLN episode, not both.
  CHECK(table.metrics.at("ndtw").mean == doctest::Approx(0.8));
}
