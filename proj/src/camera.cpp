#include "geoseg/geometry/camera.hpp"

#include <cmath>
#include <string>

namespace geoseg::geom {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// R = Ry(yaw) * Rx(pitch) * Rz(roll)
Mat3 Mat3::from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 ry, rx, rz;
  ry.m = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  rx.m = {1, 0, 0, 0, cp, -sp, 0, sp, cp};
  rz.m = {cr, -sr, 0, sr, cr, 0, 0, 0, 1};
  return ry.mul(rx).mul(rz);
}

Mat3 Mat3::mul(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = acc;
    }
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

namespace {

double orthonormality_error(const Mat3& r) {
  // max |(R^T R - I)_ij|
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += r.m[k * 3 + i] * r.m[k * 3 + j];
      const double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(acc - target));
    }
  return worst;
}

}  // namespace

Camera::Camera(double fx_, double fy_, double cx_, double cy_, const Mat3& r, const Vec3& t)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), rotation(r), translation(t) {
  if (fx <= 0 || fy <= 0) {
    throw CameraError("camera: focal lengths must be positive, got fx=" + std::to_string(fx) +
                      " fy=" + std::to_string(fy));
  }
  if (orthonormality_error(rotation) > 1e-6) {
    throw CameraError("camera: rotation is not orthonormal");
  }
  if (std::abs(rotation.det() - 1.0) > 1e-6) {
    throw CameraError("camera: rotation determinant must be +1");
  }
}

Vec3 Camera::unproject_pixel(double u, double v, double depth) const {
  const Vec3 ray{(u - cx) / fx, (v - cy) / fy, 1.0};
  return rotation.apply(ray * depth) + translation;
}

std::array<double, 3> Camera::project_point(const Vec3& world) const {
  const Vec3 cam = rotation.apply_transposed(world - translation);
  if (cam.z <= 0) {
    throw ProjectionError("project: point is behind the camera (z=" + std::to_string(cam.z) + ")");
  }
  return {fx * cam.x / cam.z + cx, fy * cam.y / cam.z + cy, cam.z};
}

PointMap unproject(const Camera& camera, const DepthMap& depth) {
  PointMap pm(depth.width, depth.height);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::size_t idx = static_cast<std::size_t>(v) * depth.width + u;
      const float d = depth.values[idx];
      if (d > 0.f) {
        pm.points[idx] = camera.unproject_pixel(u, v, d);
        pm.valid[idx] = 1;
      }
    }
  }
  return pm;
}

}  // namespace geoseg::geom
