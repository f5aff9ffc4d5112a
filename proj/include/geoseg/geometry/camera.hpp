#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geoseg/errors.hpp"

namespace geoseg::geom {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
};

double distance(const Vec3& a, const Vec3& b);

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_euler(double yaw, double pitch, double roll);

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }
  Mat3 mul(const Mat3& o) const;
  double det() const;
};

// Pinhole camera: intrinsics plus the world-from-camera rigid transform.
// Construction validates fx, fy > 0 and rotation orthonormality.
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Mat3 rotation;     // camera-to-world
  Vec3 translation;  // camera position in world

  Camera() = default;
  Camera(double fx_, double fy_, double cx_, double cy_, const Mat3& r, const Vec3& t);

  // world point of pixel (u, v) at camera-frame depth d
  Vec3 unproject_pixel(double u, double v, double depth) const;

  // (u, v, depth); throws ProjectionError when the point is behind the camera
  std::array<double, 3> project_point(const Vec3& world) const;
};

struct DepthMap {
  int width = 0, height = 0;
  std::vector<float> values;  // meters; <= 0 means invalid

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.f) {}
  float at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
  bool valid(int u, int v) const { return at(u, v) > 0.f; }
};

struct PointMap {
  int width = 0, height = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;

  PointMap() = default;
  PointMap(int w, int h)
      : width(w),
        height(h),
        points(static_cast<std::size_t>(w) * h),
        valid(static_cast<std::size_t>(w) * h, 0) {}
  const Vec3& at(int u, int v) const { return points[static_cast<std::size_t>(v) * width + u]; }
  bool is_valid(int u, int v) const { return valid[static_cast<std::size_t>(v) * width + u] != 0; }
};

PointMap unproject(const Camera& camera, const DepthMap& depth);

}  // namespace geoseg::geom
