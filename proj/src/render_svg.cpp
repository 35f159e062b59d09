#include "unav/render_svg.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace unav {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Merges horizontal runs of occupied cells into single rectangles.
void draw_walls(std::ostringstream& os, const WorldModel& world, int floor,
                double scale) {
  const SemanticGrid2D& g = world.floors[floor];
  const double res = world.resolution;
  for (int y = 0; y < g.height; ++y) {
    int x = 0;
    while (x < g.width) {
      if (!g.at(x, y).occupied) {
        ++x;
        continue;
      }
      int x2 = x;
      while (x2 < g.width && g.at(x2, y).occupied) ++x2;
      os << "<rect x=\"" << num(x * res * scale) << "\" y=\""
         << num(y * res * scale) << "\" width=\""
         << num((x2 - x) * res * scale) << "\" height=\""
         << num(res * scale) << "\" fill=\"#444444\"/>\n";
      x = x2;
    }
  }
}

void draw_walls_aerial(std::ostringstream& os, const WorldModel& world,
                       double scale) {
  const VoxelGrid& v = world.voxels;
  const double res = world.voxel_resolution;
  for (int y = 0; y < v.ny; ++y) {
    for (int x = 0; x < v.nx; ++x) {
      bool solid = false;
      for (int z = 0; z < v.nz && !solid; ++z) {
        solid = v.occupied[v.index(x, y, z)] != 0;
      }
      if (!solid) continue;
      os << "<rect x=\"" << num(x * res * scale) << "\" y=\""
         << num(y * res * scale) << "\" width=\"" << num(res * scale)
         << "\" height=\"" << num(res * scale) << "\" fill=\"#666666\"/>\n";
    }
  }
}

}  // namespace

std::string render_trace_svg(const EpisodeTrace& trace,
                             const WorldModel& world) {
  if (trace.poses.empty()) {
    throw Error(ErrorCode::SchemaMismatch, "trace has no poses");
  }
  const Pose& start = trace.poses.front();
  if (std::hypot(start.x - world.start_pose.x, start.y - world.start_pose.y) >
      1e-6) {
    throw Error(ErrorCode::SchemaMismatch,
                "trace start pose does not match the world");
  }

  const bool aerial = world.variant == WorldVariant::aerial3d;
  double width_m, height_m;
  if (aerial) {
    width_m = world.voxels.nx * world.voxel_resolution;
    height_m = world.voxels.ny * world.voxel_resolution;
  } else {
    width_m = world.floors[0].width * world.resolution;
    height_m = world.floors[0].height * world.resolution;
  }
  const double scale = aerial ? 12.0 : 60.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
     << num(width_m * scale) << "\" height=\"" << num(height_m * scale)
     << "\" viewBox=\"0 0 " << num(width_m * scale) << " "
     << num(height_m * scale) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#fbfbfb\"/>\n";
  if (aerial) {
    draw_walls_aerial(os, world, scale);
  } else {
    draw_walls(os, world, 0, scale);
  }

  // Goal rings at the success radius.
  for (const Point3& g : world.task.goal_positions) {
    os << "<circle cx=\"" << num(g.x * scale) << "\" cy=\""
       << num(g.y * scale) << "\" r=\""
       << num(world.task.success_radius * scale)
       << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\" "
          "stroke-dasharray=\"6,4\"/>\n";
    os << "<circle cx=\"" << num(g.x * scale) << "\" cy=\""
       << num(g.y * scale)
       << "\" r=\"4\" fill=\"#2ca02c\"/>\n";
  }

  // Executed path.
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" "
        "points=\"";
  for (const Pose& p : trace.poses) {
    os << num(p.x * scale) << "," << num(p.y * scale) << " ";
  }
  os << "\"/>\n";

  // Waypoints and backtrack arcs.
  Pose last_backtrack_from = trace.poses.back();
  for (const WaypointEvent& w : trace.waypoint_events) {
    if (w.kind == "record") {
      os << "<circle cx=\"" << num(w.pose.x * scale) << "\" cy=\""
         << num(w.pose.y * scale)
         << "\" r=\"3\" fill=\"#ff7f0e\"/>\n";
    } else if (w.kind == "backtrack") {
      // Arc from where the backtrack was triggered to the waypoint.
      const double mx = (last_backtrack_from.x + w.pose.x) / 2.0;
      const double my = (last_backtrack_from.y + w.pose.y) / 2.0 - 0.6;
      os << "<path d=\"M " << num(last_backtrack_from.x * scale) << " "
         << num(last_backtrack_from.y * scale) << " Q " << num(mx * scale)
         << " " << num(my * scale) << " " << num(w.pose.x * scale) << " "
         << num(w.pose.y * scale)
         << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" "
            "stroke-dasharray=\"3,3\"/>\n";
    }
  }
  // Track trigger points: each backtrack starts where the previous motion
  // ended; approximate with the step pose preceding each backtrack event.
  os << "<circle cx=\"" << num(start.x * scale) << "\" cy=\""
     << num(start.y * scale)
     << "\" r=\"5\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace unav
