#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unav/geometry.hpp"

namespace unav {

enum class CellState : std::uint8_t { unknown = 0, free = 1, occupied = 2 };

/// Grid-ray traversal (Amanatides & Woo). Visits cells in order with their
/// entry/exit parameters in meters along the normalized direction. The
/// callback returns false to stop. Cell indices are global: floor(x/res).
void traverse_ray_2d(double ox, double oy, double dx, double dy,
                     double resolution, double max_t,
                     const std::function<bool(int cx, int cy, double t_entry,
                                              double t_exit)>& visit);

void traverse_ray_3d(double ox, double oy, double oz, double dx, double dy,
                     double dz, double resolution, double max_t,
                     const std::function<bool(int cx, int cy, int cz,
                                              double t_entry, double t_exit)>&
                         visit);

/// Auto-growing 2-D occupancy grid over global cell indices floor(x/res).
/// Cells move unknown -> {free, occupied}; occupied observations override
/// free, never the other way around.
class OccupancyGrid {
 public:
  explicit OccupancyGrid(double resolution) : resolution_(resolution) {}

  double resolution() const { return resolution_; }
  int min_x() const { return min_x_; }
  int min_y() const { return min_y_; }
  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0; }

  CellState at(int cx, int cy) const;
  CellState at_world(double x, double y) const {
    return at(world_to_cell(x), world_to_cell(y));
  }
  void set(int cx, int cy, CellState s);

  int world_to_cell(double v) const {
    return static_cast<int>(std::floor(v / resolution_));
  }
  double cell_center(int c) const { return (c + 0.5) * resolution_; }

  /// Grows the stored extent so [cx0,cx1] x [cy0,cy1] is addressable.
  void ensure(int cx0, int cy0, int cx1, int cy1);

  std::size_t known_cells() const;
  /// |known| / |cells of the known-cell bounding box|; 0 for an empty grid.
  double known_fraction() const;

  /// ASCII PGM-style dump for inspection ('.' unknown, ' ' free, '#' occupied).
  std::string dump() const;

 private:
  double resolution_;
  int min_x_ = 0, min_y_ = 0;
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Auto-growing 3-D voxel occupancy volume, same contract as OccupancyGrid.
class OccupancyGrid3 {
 public:
  explicit OccupancyGrid3(double resolution) : resolution_(resolution) {}

  double resolution() const { return resolution_; }
  int min_x() const { return min_x_; }
  int min_y() const { return min_y_; }
  int min_z() const { return min_z_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  bool empty() const { return nx_ == 0; }

  CellState at(int cx, int cy, int cz) const;
  void set(int cx, int cy, int cz, CellState s);
  void ensure(int cx0, int cy0, int cz0, int cx1, int cy1, int cz1);

  int world_to_cell(double v) const {
    return static_cast<int>(std::floor(v / resolution_));
  }
  double cell_center(int c) const { return (c + 0.5) * resolution_; }

 private:
  double resolution_;
  int min_x_ = 0, min_y_ = 0, min_z_ = 0;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct PanoramaObservation;  // world.hpp

/// Integrates a rendered panorama into the belief grid: per column, cells
/// along the ray up to the hit become free and the hit cell occupied.
/// NoReturn rays mark free up to max range.
void integrate_panorama(OccupancyGrid& grid, const Pose& pose,
                        const PanoramaObservation& panorama,
                        double max_range);

/// 3-D variant for the aerial belief volume.
void integrate_panorama_3d(OccupancyGrid3& grid, const Pose& pose,
                           const PanoramaObservation& panorama,
                           double max_range);

}  // namespace unav
