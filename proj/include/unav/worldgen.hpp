#pragma once

#include <string>

#include "unav/world.hpp"

namespace unav {

/// Seeded synthetic world templates. Same seed + spec gives a bit-identical
/// world; generation retries internally and throws GenerationFailed when the
/// post-checks (goal reachability, subgoal chain, dead-end branch) cannot be
/// met.
struct GeneratorSpec {
  /// room | multiroom | two_floor | deadend | subgoal_chain | aerial
  std::string kind = "room";
  TaskFamily family = TaskFamily::ObjectNav;
  int width = 160;   // cells, <= 256
  int height = 160;  // cells, <= 256
  double resolution = 0.05;
  double success_radius = 3.0;
  bool dead_end_rooms = false;
  int floors = 1;
};

WorldModel generate_world(unsigned seed, const GeneratorSpec& spec);

GeneratorSpec generator_spec_from_kind(const std::string& kind);

}  // namespace unav
