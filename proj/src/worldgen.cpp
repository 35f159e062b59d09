#include "unav/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace unav {

namespace {

const std::vector<std::string> kLabelTable = {
    "", "sofa", "table", "plant", "tv", "bed", "lamp", "stairs", "crate"};

int label_id(const std::string& text) {
  for (std::size_t i = 0; i < kLabelTable.size(); ++i) {
    if (kLabelTable[i] == text) return static_cast<int>(i);
  }
  return 0;
}

SemanticGrid2D make_floor(int width, int height) {
  SemanticGrid2D g;
  g.width = width;
  g.height = height;
  g.cells.assign(static_cast<std::size_t>(width) * height, GridCell{});
  // 2-cell border walls.
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x < 2 || y < 2 || x >= width - 2 || y >= height - 2) {
        g.at(x, y).occupied = true;
      }
    }
  }
  return g;
}

void fill_rect(SemanticGrid2D& g, int x0, int y0, int x1, int y1,
               bool occupied, int label = 0) {
  for (int y = std::max(0, y0); y <= std::min(g.height - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(g.width - 1, x1); ++x) {
      g.at(x, y).occupied = occupied;
      g.at(x, y).label_id = label;
    }
  }
}

void place_object(SemanticGrid2D& g, int cx, int cy, int half,
                  const std::string& label) {
  fill_rect(g, cx - half, cy - half, cx + half, cy + half, true,
            label_id(label));
}

Point3 cell_point(double resolution, int cx, int cy) {
  return Point3::world((cx + 0.5) * resolution, (cy + 0.5) * resolution, 0.0);
}

Pose start_pose_at(double resolution, int cx, int cy, double yaw = 0.0,
                   int floor = 0) {
  Pose p;
  p.x = (cx + 0.5) * resolution;
  p.y = (cy + 0.5) * resolution;
  p.yaw = yaw;
  p.floor_id = floor;
  return p;
}

std::string objectnav_instruction(const std::string& label) {
  return "Find the " + label + " and stop next to it.";
}

void finish_task(WorldModel& world, TaskFamily family,
                 const std::string& goal_label) {
  world.task.family = family;
  world.task.goal_label = goal_label;
  switch (family) {
    case TaskFamily::ObjectNav:
      world.task.instruction = objectnav_instruction(goal_label);
      break;
    case TaskFamily::EQA:
      world.task.instruction =
          "Which object sits at the goal location? Go there and answer.";
      world.task.eqa_answer = goal_label;
      break;
    case TaskFamily::VLN:
    case TaskFamily::AerialVLN:
      break;  // instruction assembled by the template
  }
}

WorldModel gen_room(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.resolution = spec.resolution;
  world.label_table = kLabelTable;
  SemanticGrid2D floor = make_floor(spec.width, spec.height);

  std::uniform_int_distribution<int> jitter(-8, 8);
  // Furniture along the walls, goal object on the far side.
  const std::vector<std::string> props = {"table", "plant", "lamp"};
  for (std::size_t i = 0; i < props.size(); ++i) {
    const int x = 20 + static_cast<int>(i) * 40 + jitter(rng);
    place_object(floor, x, spec.height - 8, 2, props[i]);
  }
  const std::string goal_label = "sofa";
  const int gx = spec.width - 20 + jitter(rng) / 2;
  const int gy = spec.height - 20 + jitter(rng) / 2;
  place_object(floor, gx, gy, 3, goal_label);

  world.floors.push_back(std::move(floor));
  world.start_pose = start_pose_at(spec.resolution, 20, 20);
  world.task.goal_positions = {cell_point(spec.resolution, gx - 8, gy - 8)};
  world.task.success_radius = spec.success_radius;
  finish_task(world, spec.family, goal_label);
  return world;
}

WorldModel gen_multiroom(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.resolution = spec.resolution;
  world.label_table = kLabelTable;
  SemanticGrid2D floor = make_floor(spec.width, spec.height);

  const int mx = spec.width / 2;
  const int my = spec.height / 2;
  std::uniform_int_distribution<int> door_jitter(-12, 12);
  const int door_w = 18;
  // Cross walls with one door per wall segment.
  fill_rect(floor, mx - 1, 0, mx + 1, spec.height - 1, true);
  fill_rect(floor, 0, my - 1, spec.width - 1, my + 1, true);
  auto cut_door = [&](bool vertical, int at) {
    if (vertical) {
      fill_rect(floor, mx - 1, at - door_w / 2, mx + 1, at + door_w / 2,
                false);
    } else {
      fill_rect(floor, at - door_w / 2, my - 1, at + door_w / 2, my + 1,
                false);
    }
  };
  cut_door(true, my / 2 + door_jitter(rng));
  cut_door(true, my + my / 2 + door_jitter(rng));
  cut_door(false, mx / 2 + door_jitter(rng));
  cut_door(false, mx + mx / 2 + door_jitter(rng));

  place_object(floor, mx / 2, my + my / 2, 2, "table");
  place_object(floor, mx + mx / 2, my / 2, 2, "plant");
  const std::string goal_label = "tv";
  const int gx = mx + mx / 2 + door_jitter(rng) / 2;
  const int gy = my + my / 2 + door_jitter(rng) / 2;
  place_object(floor, gx, gy, 2, goal_label);

  world.floors.push_back(std::move(floor));
  world.start_pose = start_pose_at(spec.resolution, mx / 2, my / 2);
  world.task.goal_positions = {cell_point(spec.resolution, gx - 7, gy - 7)};
  world.task.success_radius = spec.success_radius;
  finish_task(world, spec.family, goal_label);
  return world;
}

WorldModel gen_two_floor(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.resolution = spec.resolution;
  world.label_table = kLabelTable;
  SemanticGrid2D f0 = make_floor(spec.width, spec.height);
  SemanticGrid2D f1 = make_floor(spec.width, spec.height);

  std::uniform_int_distribution<int> jitter(-6, 6);
  const int sx = spec.width - 20 + jitter(rng) / 2;
  const int sy = 20 + jitter(rng) / 2;
  place_object(f0, sx + 6, sy, 2, "stairs");
  place_object(f1, sx + 6, sy, 2, "stairs");

  const std::string goal_label = "bed";
  const int gx = spec.width - 24 + jitter(rng) / 2;
  const int gy = spec.height - 24 + jitter(rng) / 2;
  place_object(f1, gx, gy, 3, goal_label);

  world.floors.push_back(std::move(f0));
  world.floors.push_back(std::move(f1));
  world.stair_links.push_back(StairLink{0, sx, sy, 1, sx, sy});
  world.start_pose = start_pose_at(spec.resolution, 20, spec.height - 24);
  world.task.goal_positions = {cell_point(spec.resolution, gx - 8, gy - 8)};
  world.task.goal_floor = 1;
  world.task.success_radius = spec.success_radius;
  finish_task(world, spec.family, goal_label);
  world.task.instruction =
      "Take the stairs up and find the " + goal_label + ".";
  return world;
}

WorldModel gen_deadend(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.resolution = spec.resolution;
  world.label_table = kLabelTable;
  SemanticGrid2D floor = make_floor(spec.width, spec.height);
  // Everything solid; corridors carved out of rock.
  fill_rect(floor, 0, 0, spec.width - 1, spec.height - 1, true);

  const int cw = 12;  // corridor half-width (1.25 m wide)
  std::uniform_int_distribution<int> jit(-6, 6);
  std::uniform_int_distribution<int> coin(0, 1);
  const bool mirror = coin(rng) == 1;  // flip east/west for variety

  auto mx = [&](int x) { return mirror ? spec.width - 1 - x : x; };
  auto carve_h = [&](int xa, int xb, int y) {
    fill_rect(floor, std::min(mx(xa), mx(xb)) - cw, y - cw,
              std::max(mx(xa), mx(xb)) + cw, y + cw, false);
  };
  auto carve_v = [&](int x, int ya, int yb) {
    fill_rect(floor, mx(x) - cw, std::min(ya, yb) - cw, mx(x) + cw,
              std::max(ya, yb) + cw, false);
  };

  // Serpentine main route with a blind continuation at every junction: the
  // dead end always lies straight ahead in the direction of travel, while
  // the live route takes the side turn.
  const int x0 = 44 + jit(rng);
  const int y1 = 110 + jit(rng);  // junction 1 (route turns east)
  const int x1 = 168 + jit(rng);  // junction 2 (route turns north)
  const int y2 = 178 + jit(rng);  // junction 3 (route turns west)
  const int xg = 96 + jit(rng);   // goal room center

  carve_v(x0, 20, y1);   // entry leg, heading north
  carve_v(x0, y1, 206);  // blind: straight on past junction 1
  carve_h(x0, x1, y1);   // route east
  carve_h(x1, 222, y1);  // blind: straight on past junction 2
  carve_v(x1, y1, y2);   // route north
  carve_v(x1, y2, 226);  // blind: straight on past junction 3
  carve_h(x1, xg, y2);   // final leg west into the goal room

  const std::string goal_label = "crate";
  const int room_half = 20;
  fill_rect(floor, mx(xg) - room_half, y2 - room_half, mx(xg) + room_half,
            y2 + room_half, false);
  const int gx = mx(xg);
  const int gy = y2 + room_half - 6;
  // Keep the outer border solid after carving.
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (x < 2 || y < 2 || x >= spec.width - 2 || y >= spec.height - 2) {
        floor.at(x, y).occupied = true;
        floor.at(x, y).label_id = 0;
      }
    }
  }
  place_object(floor, gx, gy, 2, goal_label);

  world.floors.push_back(std::move(floor));
  world.start_pose = start_pose_at(spec.resolution, mx(x0), 26);
  world.task.goal_positions = {cell_point(spec.resolution, gx, gy - 8)};
  world.task.success_radius = spec.success_radius;
  finish_task(world, spec.family, goal_label);
  return world;
}

WorldModel gen_subgoal_chain(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.resolution = spec.resolution;
  world.label_table = kLabelTable;
  SemanticGrid2D floor = make_floor(spec.width, spec.height);
  fill_rect(floor, 0, 0, spec.width - 1, spec.height - 1, true);

  const int cw = 12;
  std::uniform_int_distribution<int> jitter(-6, 6);
  // S-shaped route: east, then north, then west, with a labeled landmark
  // room at every bend.
  const int x0 = 24, y0 = 24;
  const int x1 = spec.width - 32 + jitter(rng);
  const int y1 = spec.height - 32 + jitter(rng);
  const int x2 = 28 + jitter(rng);

  fill_rect(floor, x0 - cw, y0 - cw, x1 + cw, y0 + cw, false);
  fill_rect(floor, x1 - cw, y0 - cw, x1 + cw, y1 + cw, false);
  fill_rect(floor, x2 - cw, y1 - cw, x1 + cw, y1 + cw, false);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (x < 2 || y < 2 || x >= spec.width - 2 || y >= spec.height - 2) {
        floor.at(x, y).occupied = true;
      }
    }
  }

  struct Landmark {
    int x, y;
    std::string label;
  };
  const std::vector<Landmark> marks = {{x1, y0, "table"},
                                       {x1, y1, "plant"},
                                       {x2, y1, "sofa"}};
  for (const Landmark& m : marks) {
    // Widen the bend into a small room so the landmark is visible.
    fill_rect(floor, m.x - 16, m.y - 16, m.x + 16, m.y + 16, false);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        if (x < 2 || y < 2 || x >= spec.width - 2 || y >= spec.height - 2) {
          floor.at(x, y).occupied = true;
        }
      }
    }
  }
  for (const Landmark& m : marks) {
    place_object(floor, m.x + 12, m.y + 12, 2, m.label);
  }

  world.floors.push_back(std::move(floor));
  world.start_pose = start_pose_at(spec.resolution, x0, y0, 270.0);
  world.task.success_radius = spec.success_radius;
  world.task.family = TaskFamily::VLN;
  world.task.instruction =
      "Walk to the table, then continue to the plant, then stop at the sofa.";
  for (const Landmark& m : marks) {
    world.task.ordered_subgoal_positions.push_back(
        cell_point(spec.resolution, m.x + 6, m.y + 6));
    world.task.subgoal_labels.push_back(m.label);
  }
  world.task.goal_positions = {world.task.ordered_subgoal_positions.back()};
  world.task.goal_label = marks.back().label;
  return world;
}

WorldModel gen_aerial(std::mt19937& rng, const GeneratorSpec& spec) {
  WorldModel world;
  world.variant = WorldVariant::aerial3d;
  world.resolution = spec.resolution;
  world.voxel_resolution = 1.0;
  world.label_table = kLabelTable;
  VoxelGrid& v = world.voxels;
  v.nx = 48;
  v.ny = 48;
  v.nz = 16;
  v.occupied.assign(static_cast<std::size_t>(v.nx) * v.ny * v.nz, 0);
  v.label.assign(v.occupied.size(), 0);

  std::uniform_int_distribution<int> px(6, v.nx - 10);
  std::uniform_int_distribution<int> py(6, v.ny - 10);
  std::uniform_int_distribution<int> sz(3, 7);
  std::uniform_int_distribution<int> hz(3, 11);
  const int n_buildings = 8;
  for (int b = 0; b < n_buildings; ++b) {
    const int bx = px(rng), by = py(rng);
    const int w = sz(rng), d = sz(rng), h = hz(rng);
    for (int z = 0; z < h && z < v.nz; ++z) {
      for (int y = by; y < std::min(by + d, v.ny); ++y) {
        for (int x = bx; x < std::min(bx + w, v.nx); ++x) {
          v.occupied[v.index(x, y, z)] = 1;
        }
      }
    }
  }
  // Goal marker: a labeled crate column near the far corner.
  const int gx = v.nx - 8, gy = v.ny - 8;
  for (int z = 0; z < 4; ++z) {
    v.occupied[v.index(gx, gy, z)] = 1;
    v.label[v.index(gx, gy, z)] = label_id("crate");
  }

  world.start_pose.x = 4.5;
  world.start_pose.y = 4.5;
  world.start_pose.z = 5.5;
  world.start_pose.yaw = 0.0;
  world.task.family = TaskFamily::AerialVLN;
  world.task.instruction = "Fly across the blocks and stop above the crate.";
  world.task.goal_positions = {Point3::world(gx + 0.5, gy + 0.5, 5.5)};
  world.task.success_radius = std::max(spec.success_radius, 5.0);
  world.task.goal_label = "crate";
  return world;
}

bool post_check(const WorldModel& world) {
  if (world.variant == WorldVariant::aerial3d) {
    return std::isfinite(shortest_path_length(world));
  }
  const int scx = static_cast<int>(world.start_pose.x / world.resolution);
  const int scy = static_cast<int>(world.start_pose.y / world.resolution);
  if (!world.is_free(world.start_pose.floor_id, scx, scy)) return false;
  if (!std::isfinite(shortest_path_length(world))) return false;
  Pose probe = world.start_pose;
  for (std::size_t i = 0; i < world.task.ordered_subgoal_positions.size();
       ++i) {
    const double d = geodesic_distance(
        world, probe, world.task.ordered_subgoal_positions[i],
        world.task.subgoal_floor(i));
    if (!std::isfinite(d)) return false;
  }
  return true;
}

}  // namespace

GeneratorSpec generator_spec_from_kind(const std::string& kind) {
  GeneratorSpec spec;
  spec.kind = kind;
  if (kind == "deadend") {
    spec.width = 240;
    spec.height = 240;
    spec.dead_end_rooms = true;
  } else if (kind == "subgoal_chain") {
    spec.width = 200;
    spec.height = 200;
    spec.family = TaskFamily::VLN;
  } else if (kind == "two_floor") {
    spec.floors = 2;
  } else if (kind == "aerial") {
    spec.family = TaskFamily::AerialVLN;
  }
  return spec;
}

WorldModel generate_world(unsigned seed, const GeneratorSpec& spec) {
  if (spec.width > 256 || spec.height > 256 || spec.floors > 3) {
    throw Error(ErrorCode::BadConfig, "generator bounds exceeded");
  }
  for (unsigned attempt = 0; attempt < 16; ++attempt) {
    std::mt19937 rng(seed * 2654435761u + attempt * 97u + 1u);
    WorldModel world;
    if (spec.kind == "room") {
      world = gen_room(rng, spec);
    } else if (spec.kind == "multiroom") {
      world = gen_multiroom(rng, spec);
    } else if (spec.kind == "two_floor") {
      world = gen_two_floor(rng, spec);
    } else if (spec.kind == "deadend") {
      world = gen_deadend(rng, spec);
    } else if (spec.kind == "subgoal_chain") {
      world = gen_subgoal_chain(rng, spec);
    } else if (spec.kind == "aerial") {
      world = gen_aerial(rng, spec);
    } else {
      throw Error(ErrorCode::BadConfig, "unknown template " + spec.kind);
    }
    if (post_check(world)) return world;
  }
  throw Error(ErrorCode::GenerationFailed,
              "no satisfiable layout after bounded retries");
}

}  // namespace unav
