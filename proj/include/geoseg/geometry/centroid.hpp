#pragma once

#include "geoseg/geometry/camera.hpp"
#include "geoseg/numerics/tensor.hpp"

namespace geoseg::geom {

// Euclidean distances between two sets of 3D token positions, in meters.
// a is n x 3, b is m x 3; the result is n x m. When a and b alias the same
// positions the diagonal is exactly zero.
num::Tensor<double> pairwise_distances(const num::Tensor<double>& a,
                                       const num::Tensor<double>& b);

struct CentroidResult {
  Vec3 centroid;
  double weight_sum = 0;  // sum of mask probabilities over valid pixels
};

// c = sum(M(u,v) * P(u,v)) / (sum(M(u,v)) + epsilon); invalid pixels
// contribute zero weight. An all-zero mask yields a near-zero vector; callers
// treat weight_sum below their threshold as low confidence.
template <typename T>
CentroidResult mask_weighted_centroid(const num::Tensor<T>& mask_prob, const PointMap& points,
                                      double epsilon = 1e-6) {
  if (mask_prob.numel() != points.points.size()) {
    throw ShapeError("mask_weighted_centroid: mask " + num::shape_str(mask_prob.shape()) +
                     " does not cover the point map");
  }
  Vec3 acc;
  double wsum = 0;
  for (std::size_t i = 0; i < points.points.size(); ++i) {
    if (!points.valid[i]) continue;
    const double w = static_cast<double>(mask_prob[i]);
    acc += points.points[i] * w;
    wsum += w;
  }
  return {acc * (1.0 / (wsum + epsilon)), wsum};
}

}  // namespace geoseg::geom
