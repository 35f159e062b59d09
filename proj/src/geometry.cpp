#include "unav/geometry.hpp"

#include <cmath>

namespace unav {

double normalize_yaw(double yaw_deg) {
  double y = std::fmod(yaw_deg, 360.0);
  if (y < 0.0) y += 360.0;
  if (y == 360.0) y = 0.0;
  return y;
}

Point3 backproject(double u, double v, double d, const Intrinsics& k) {
  if (!(std::isfinite(d)) || d <= 0.0) {
    throw Error(ErrorCode::InvalidDepth, "depth must be positive and finite");
  }
  if (u < 0.0 || u >= k.width || v < 0.0 || v >= k.height) {
    throw Error(ErrorCode::OutOfBounds, "pixel outside image bounds");
  }
  return Point3::cam(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
}

void project(const Point3& p, const Intrinsics& k, double& u, double& v) {
  if (p.z <= 0.0) {
    throw Error(ErrorCode::BehindCamera, "point has non-positive depth");
  }
  u = k.fx * p.x / p.z + k.cx;
  v = k.fy * p.y / p.z + k.cy;
}

Point3 cam_dir_to_world(const Point3& dir, double total_yaw_deg,
                        double pitch_deg) {
  const double yr = deg_to_rad(total_yaw_deg);
  // Camera basis in world coordinates at zero pitch:
  //   X (right)   = ( cos yaw,  sin yaw, 0)
  //   Y (down)    = ( 0, 0, -1)
  //   Z (forward) = (-sin yaw,  cos yaw, 0)
  const double rx = std::cos(yr), ry = std::sin(yr);
  const double fx = -std::sin(yr), fy = std::cos(yr);

  double bx[3] = {rx, ry, 0.0};
  double by[3] = {0.0, 0.0, -1.0};
  double bz[3] = {fx, fy, 0.0};

  if (pitch_deg != 0.0) {
    const double pr = deg_to_rad(pitch_deg);
    const double c = std::cos(pr), s = std::sin(pr);
    // Pitch about the camera X axis; -90 points the optical axis down.
    double ny[3], nz[3];
    for (int i = 0; i < 3; ++i) {
      ny[i] = c * by[i] + s * bz[i];
      nz[i] = -s * by[i] + c * bz[i];
    }
    for (int i = 0; i < 3; ++i) {
      by[i] = ny[i];
      bz[i] = nz[i];
    }
  }

  return Point3::world(bx[0] * dir.x + by[0] * dir.y + bz[0] * dir.z,
                       bx[1] * dir.x + by[1] * dir.y + bz[1] * dir.z,
                       bx[2] * dir.x + by[2] * dir.y + bz[2] * dir.z);
}

Point3 cam_to_world(const Point3& p, const Pose& pose, double view_yaw_offset,
                    double pitch_deg) {
  if (p.frame != Frame::camera) {
    throw Error(ErrorCode::FrameMismatch, "expected a camera-frame point");
  }
  const double total_yaw = normalize_yaw(pose.yaw + view_yaw_offset);
  Point3 rotated = cam_dir_to_world(
      Point3::cam(p.x, p.y, p.z), total_yaw, pitch_deg);
  return Point3::world(rotated.x + pose.x, rotated.y + pose.y,
                       rotated.z + pose.z);
}

}  // namespace unav
