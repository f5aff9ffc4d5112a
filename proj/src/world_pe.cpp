#include "geoseg/geometry/world_pe.hpp"

#include <cmath>

namespace geoseg::geom {

namespace {
constexpr double kPi = 3.141592653589793;
}

void sinusoid_encoding_into(const Vec3& p, const SinusoidConfig& cfg, double* out) {
  const double nx = p.x / cfg.scale;
  const double ny = p.y / cfg.scale;
  const double nz = p.z / cfg.scale;
  out[0] = nx;
  out[1] = ny;
  out[2] = nz;
  std::size_t k = 3;
  double freq = kPi;
  for (int i = 0; i < cfg.num_frequencies; ++i) {
    out[k++] = std::sin(freq * nx);
    out[k++] = std::sin(freq * ny);
    out[k++] = std::sin(freq * nz);
    out[k++] = std::cos(freq * nx);
    out[k++] = std::cos(freq * ny);
    out[k++] = std::cos(freq * nz);
    freq *= 2.0;
  }
}

std::vector<double> sinusoid_encoding(const Vec3& p, const SinusoidConfig& cfg) {
  std::vector<double> out(cfg.encoding_dim());
  sinusoid_encoding_into(p, cfg, out.data());
  return out;
}

}  // namespace geoseg::geom
