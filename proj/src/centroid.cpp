#include "geoseg/geometry/centroid.hpp"

#include <cmath>

namespace geoseg::geom {

num::Tensor<double> pairwise_distances(const num::Tensor<double>& a,
                                       const num::Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != 3 || b.dim(1) != 3) {
    throw ShapeError("pairwise_distances: expected n x 3 inputs, got " +
                     num::shape_str(a.shape()) + " and " + num::shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), m = b.dim(0);
  const bool aliased = a.data() == b.data();
  num::Tensor<double> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (aliased && i == j) {
        out.at(i, j) = 0.0;
        continue;
      }
      const double dx = a.at(i, 0) - b.at(j, 0);
      const double dy = a.at(i, 1) - b.at(j, 1);
      const double dz = a.at(i, 2) - b.at(j, 2);
      out.at(i, j) = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  return out;
}

}  // namespace geoseg::geom
