#include "unav/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "unav/world.hpp"

namespace unav {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void traverse_ray_2d(double ox, double oy, double dx, double dy,
                     double resolution, double max_t,
                     const std::function<bool(int, int, double, double)>&
                         visit) {
  int cx = static_cast<int>(std::floor(ox / resolution));
  int cy = static_cast<int>(std::floor(oy / resolution));
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);

  auto boundary_t = [&](double o, double d, int c, int step) {
    if (step == 0) return kInf;
    const double edge = (step > 0 ? (c + 1) : c) * resolution;
    return (edge - o) / d;
  };
  double t_max_x = boundary_t(ox, dx, cx, step_x);
  double t_max_y = boundary_t(oy, dy, cy, step_y);
  const double t_delta_x = step_x ? resolution / std::abs(dx) : kInf;
  const double t_delta_y = step_y ? resolution / std::abs(dy) : kInf;

  double t_entry = 0.0;
  while (t_entry <= max_t) {
    const double t_exit = std::min(t_max_x, t_max_y);
    if (!visit(cx, cy, t_entry, t_exit)) return;
    t_entry = t_exit;
    if (t_max_x <= t_max_y) {
      cx += step_x;
      t_max_x += t_delta_x;
    } else {
      cy += step_y;
      t_max_y += t_delta_y;
    }
    if (t_entry == kInf) return;
  }
}

void traverse_ray_3d(double ox, double oy, double oz, double dx, double dy,
                     double dz, double resolution, double max_t,
                     const std::function<bool(int, int, int, double, double)>&
                         visit) {
  int c[3] = {static_cast<int>(std::floor(ox / resolution)),
              static_cast<int>(std::floor(oy / resolution)),
              static_cast<int>(std::floor(oz / resolution))};
  const double o[3] = {ox, oy, oz};
  const double d[3] = {dx, dy, dz};
  int step[3];
  double t_max[3], t_delta[3];
  for (int i = 0; i < 3; ++i) {
    step[i] = d[i] > 0 ? 1 : (d[i] < 0 ? -1 : 0);
    if (step[i] == 0) {
      t_max[i] = kInf;
      t_delta[i] = kInf;
    } else {
      const double edge = (step[i] > 0 ? (c[i] + 1) : c[i]) * resolution;
      t_max[i] = (edge - o[i]) / d[i];
      t_delta[i] = resolution / std::abs(d[i]);
    }
  }

  double t_entry = 0.0;
  while (t_entry <= max_t) {
    const double t_exit = std::min({t_max[0], t_max[1], t_max[2]});
    if (!visit(c[0], c[1], c[2], t_entry, t_exit)) return;
    t_entry = t_exit;
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    c[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (t_entry == kInf) return;
  }
}

CellState OccupancyGrid::at(int cx, int cy) const {
  if (cx < min_x_ || cy < min_y_ || cx >= min_x_ + width_ ||
      cy >= min_y_ + height_) {
    return CellState::unknown;
  }
  return static_cast<CellState>(
      cells_[(cy - min_y_) * static_cast<std::size_t>(width_) + (cx - min_x_)]);
}

void OccupancyGrid::ensure(int cx0, int cy0, int cx1, int cy1) {
  if (width_ == 0) {
    min_x_ = cx0;
    min_y_ = cy0;
    width_ = cx1 - cx0 + 1;
    height_ = cy1 - cy0 + 1;
    cells_.assign(static_cast<std::size_t>(width_) * height_, 0);
    return;
  }
  const int nx0 = std::min(cx0, min_x_);
  const int ny0 = std::min(cy0, min_y_);
  const int nx1 = std::max(cx1, min_x_ + width_ - 1);
  const int ny1 = std::max(cy1, min_y_ + height_ - 1);
  if (nx0 == min_x_ && ny0 == min_y_ && nx1 == min_x_ + width_ - 1 &&
      ny1 == min_y_ + height_ - 1) {
    return;
  }
  const int nw = nx1 - nx0 + 1;
  const int nh = ny1 - ny0 + 1;
  std::vector<std::uint8_t> next(static_cast<std::size_t>(nw) * nh, 0);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      next[(y + min_y_ - ny0) * static_cast<std::size_t>(nw) +
           (x + min_x_ - nx0)] = cells_[y * static_cast<std::size_t>(width_) + x];
    }
  }
  cells_ = std::move(next);
  min_x_ = nx0;
  min_y_ = ny0;
  width_ = nw;
  height_ = nh;
}

void OccupancyGrid::set(int cx, int cy, CellState s) {
  ensure(cx, cy, cx, cy);
  std::uint8_t& cell =
      cells_[(cy - min_y_) * static_cast<std::size_t>(width_) + (cx - min_x_)];
  // Occupied wins over free; nothing reverts to unknown.
  if (cell == static_cast<std::uint8_t>(CellState::occupied)) return;
  if (s == CellState::unknown) return;
  cell = static_cast<std::uint8_t>(s);
}

std::size_t OccupancyGrid::known_cells() const {
  std::size_t n = 0;
  for (std::uint8_t c : cells_) n += (c != 0);
  return n;
}

double OccupancyGrid::known_fraction() const {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool any = false;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (cells_[y * static_cast<std::size_t>(width_) + x] != 0) {
        if (!any) {
          x0 = x1 = x;
          y0 = y1 = y;
          any = true;
        } else {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
      }
    }
  }
  if (!any) return 0.0;
  const double box = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
  return static_cast<double>(known_cells()) / box;
}

std::string OccupancyGrid::dump() const {
  std::ostringstream out;
  out << "P2-like " << width_ << "x" << height_ << " origin (" << min_x_ << ","
      << min_y_ << ")\n";
  for (int y = height_ - 1; y >= 0; --y) {
    for (int x = 0; x < width_; ++x) {
      const std::uint8_t c = cells_[y * static_cast<std::size_t>(width_) + x];
      out << (c == 0 ? '.' : (c == 1 ? ' ' : '#'));
    }
    out << '\n';
  }
  return out.str();
}

CellState OccupancyGrid3::at(int cx, int cy, int cz) const {
  if (cx < min_x_ || cy < min_y_ || cz < min_z_ || cx >= min_x_ + nx_ ||
      cy >= min_y_ + ny_ || cz >= min_z_ + nz_) {
    return CellState::unknown;
  }
  const std::size_t i =
      ((static_cast<std::size_t>(cz - min_z_) * ny_) + (cy - min_y_)) * nx_ +
      (cx - min_x_);
  return static_cast<CellState>(cells_[i]);
}

void OccupancyGrid3::ensure(int cx0, int cy0, int cz0, int cx1, int cy1,
                            int cz1) {
  if (nx_ == 0) {
    min_x_ = cx0;
    min_y_ = cy0;
    min_z_ = cz0;
    nx_ = cx1 - cx0 + 1;
    ny_ = cy1 - cy0 + 1;
    nz_ = cz1 - cz0 + 1;
    cells_.assign(static_cast<std::size_t>(nx_) * ny_ * nz_, 0);
    return;
  }
  const int a0 = std::min(cx0, min_x_), b0 = std::min(cy0, min_y_),
            c0 = std::min(cz0, min_z_);
  const int a1 = std::max(cx1, min_x_ + nx_ - 1),
            b1 = std::max(cy1, min_y_ + ny_ - 1),
            c1 = std::max(cz1, min_z_ + nz_ - 1);
  if (a0 == min_x_ && b0 == min_y_ && c0 == min_z_ && a1 == min_x_ + nx_ - 1 &&
      b1 == min_y_ + ny_ - 1 && c1 == min_z_ + nz_ - 1) {
    return;
  }
  const int nnx = a1 - a0 + 1, nny = b1 - b0 + 1, nnz = c1 - c0 + 1;
  std::vector<std::uint8_t> next(
      static_cast<std::size_t>(nnx) * nny * nnz, 0);
  for (int z = 0; z < nz_; ++z) {
    for (int y = 0; y < ny_; ++y) {
      for (int x = 0; x < nx_; ++x) {
        const std::size_t src =
            ((static_cast<std::size_t>(z) * ny_) + y) * nx_ + x;
        const std::size_t dst =
            ((static_cast<std::size_t>(z + min_z_ - c0) * nny) +
             (y + min_y_ - b0)) *
                nnx +
            (x + min_x_ - a0);
        next[dst] = cells_[src];
      }
    }
  }
  cells_ = std::move(next);
  min_x_ = a0;
  min_y_ = b0;
  min_z_ = c0;
  nx_ = nnx;
  ny_ = nny;
  nz_ = nnz;
}

void OccupancyGrid3::set(int cx, int cy, int cz, CellState s) {
  ensure(cx, cy, cz, cx, cy, cz);
  const std::size_t i =
      ((static_cast<std::size_t>(cz - min_z_) * ny_) + (cy - min_y_)) * nx_ +
      (cx - min_x_);
  std::uint8_t& cell = cells_[i];
  if (cell == static_cast<std::uint8_t>(CellState::occupied)) return;
  if (s == CellState::unknown) return;
  cell = static_cast<std::uint8_t>(s);
}

namespace {

// Cells whose entry/exit straddles the hit within this slack stay unknown;
// the first cell entered at the hit parameter becomes occupied.
constexpr double kHitEps = 1e-6;

// Scans a column for the band depth written by the renderer.
double column_depth(const View& view, int u) {
  for (int v = 0; v < view.height; ++v) {
    const double d = view.depth_at(u, v);
    if (std::isfinite(d)) return d;
  }
  return kNoReturn;
}

}  // namespace

void integrate_panorama(OccupancyGrid& grid, const Pose& pose,
                        const PanoramaObservation& panorama,
                        double max_range) {
  const Intrinsics& k = panorama.intrinsics;
  for (const auto& [name, view] : panorama.views) {
    if (view.pitch != 0.0) continue;  // downward view is volumetric only
    const double total_yaw = normalize_yaw(pose.yaw + view.yaw_offset);
    for (int u = 0; u < view.width; ++u) {
      const double xc = (u + 0.5 - k.cx) / k.fx;
      const double norm = std::sqrt(xc * xc + 1.0);
      Point3 dir = cam_dir_to_world(Point3::cam(xc / norm, 0.0, 1.0 / norm),
                                    total_yaw);
      const double z = column_depth(view, u);
      const bool no_return = !std::isfinite(z);
      const double t_hit = no_return ? max_range : z * norm;
      traverse_ray_2d(
          pose.x, pose.y, dir.x, dir.y, grid.resolution(), t_hit + kHitEps,
          [&](int cx, int cy, double t_entry, double t_exit) {
            if (no_return) {
              if (t_entry <= max_range) grid.set(cx, cy, CellState::free);
              return true;
            }
            if (t_entry >= t_hit - kHitEps) {
              grid.set(cx, cy, CellState::occupied);
              return false;
            }
            if (t_exit <= t_hit + kHitEps) grid.set(cx, cy, CellState::free);
            return true;
          });
    }
  }
}

void integrate_panorama_3d(OccupancyGrid3& grid, const Pose& pose,
                           const PanoramaObservation& panorama,
                           double max_range) {
  const Intrinsics& k = panorama.intrinsics;
  const double oz = pose.z;
  for (const auto& [name, view] : panorama.views) {
    const double total_yaw = normalize_yaw(pose.yaw + view.yaw_offset);
    for (int v = 0; v < view.height; ++v) {
      for (int u = 0; u < view.width; ++u) {
        const double xc = (u + 0.5 - k.cx) / k.fx;
        const double yc = (v + 0.5 - k.cy) / k.fy;
        const double norm = std::sqrt(xc * xc + yc * yc + 1.0);
        Point3 dir = cam_dir_to_world(
            Point3::cam(xc / norm, yc / norm, 1.0 / norm), total_yaw,
            view.pitch);
        const double z = view.depth_at(u, v);
        const bool no_return = !std::isfinite(z);
        const double t_hit = no_return ? max_range : z * norm;
        traverse_ray_3d(
            pose.x, pose.y, oz, dir.x, dir.y, dir.z, grid.resolution(),
            t_hit + kHitEps,
            [&](int cx, int cy, int cz, double t_entry, double t_exit) {
              if (no_return) {
                if (t_entry <= max_range)
                  grid.set(cx, cy, cz, CellState::free);
                return true;
              }
              if (t_entry >= t_hit - kHitEps) {
                grid.set(cx, cy, cz, CellState::occupied);
                return false;
              }
              if (t_exit <= t_hit + kHitEps)
                grid.set(cx, cy, cz, CellState::free);
              return true;
            });
      }
    }
  }
}

}  // namespace unav
