#pragma once

#include <cmath>

#include "unav/errors.hpp"

namespace unav {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Normalizes an angle in degrees to [0, 360).
double normalize_yaw(double yaw_deg);

enum class Frame { camera, world };

/// 3-D point tagged with the frame it lives in. Arithmetic across frames is
/// rejected at the API boundary (cam_to_world checks the tag).
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  Frame frame = Frame::world;

  static Point3 cam(double x, double y, double z) {
    return Point3{x, y, z, Frame::camera};
  }
  static Point3 world(double x, double y, double z) {
    return Point3{x, y, z, Frame::world};
  }
};

inline double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Agent pose in the world frame. Yaw is degrees, normalized to [0, 360);
/// yaw 0 faces +y and yaw increases counterclockwise (turn_left adds 30).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  int floor_id = 0;

  Point3 position() const { return Point3::world(x, y, z); }
};

/// Heading unit vector in the xy plane for a yaw in degrees.
inline void heading(double yaw_deg, double& dx, double& dy) {
  const double r = deg_to_rad(yaw_deg);
  dx = -std::sin(r);
  dy = std::cos(r);
}

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
};

/// Pinhole back-projection. Camera convention: +z forward, +x right, +y down.
/// p = d * K^-1 [u, v, 1]^T with d the depth along the optical axis.
Point3 backproject(double u, double v, double d, const Intrinsics& k);

/// Projects a camera-frame point onto the image plane. Inverse of
/// backproject for points in front of the camera.
void project(const Point3& p, const Intrinsics& k, double& u, double& v);

/// Rigid transform of a camera-frame point into the world frame, given the
/// agent pose and the view's yaw offset (0/90/180/270 for the panorama).
/// pitch_deg tilts the optical axis; -90 is the aerial downward view.
Point3 cam_to_world(const Point3& p, const Pose& pose, double view_yaw_offset,
                    double pitch_deg = 0.0);

/// Rotates a camera-frame direction into the world frame without translation.
/// Shared by the renderer and the mapper so both traverse identical rays.
Point3 cam_dir_to_world(const Point3& dir, double total_yaw_deg,
                        double pitch_deg = 0.0);

}  // namespace unav
