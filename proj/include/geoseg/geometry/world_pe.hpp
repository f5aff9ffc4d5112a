#pragma once

#include <vector>

#include "geoseg/geometry/camera.hpp"

namespace geoseg::geom {

// Multi-frequency sinusoid encoding of a world coordinate. Coordinates are
// divided by `scale` first so indoor-scale scenes land roughly in [-1, 1].
// Layout: [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p),
// cos(2^{L-1} pi p)], dimension 3 + 6L (63 for L=10). The encoding is a
// function of the world point alone, so any two views of the same point get
// identical values.
struct SinusoidConfig {
  int num_frequencies = 10;
  double scale = 10.0;

  int encoding_dim() const { return 3 + 6 * num_frequencies; }
};

std::vector<double> sinusoid_encoding(const Vec3& p, const SinusoidConfig& cfg);

// Fills `out` (size encoding_dim) in place; used on hot paths.
void sinusoid_encoding_into(const Vec3& p, const SinusoidConfig& cfg, double* out);

}  // namespace geoseg::geom
