#pragma once

#include <string>

#include "unav/runner.hpp"
#include "unav/world.hpp"

namespace unav {

/// Plan-view trajectory figure: walls, executed path, waypoint markers,
/// backtrack arcs, and the goal ring at the success radius. Byte-identical
/// output for identical inputs. Throws SchemaMismatch when the trace does
/// not belong to the world.
std::string render_trace_svg(const EpisodeTrace& trace,
                             const WorldModel& world);

}  // namespace unav
