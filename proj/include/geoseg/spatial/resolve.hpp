#pragma once

#include <vector>

#include "geoseg/geometry/camera.hpp"
#include "geoseg/numerics/tensor.hpp"
#include "geoseg/scenegen/scene.hpp"
#include "geoseg/spatial/vocabulary.hpp"

namespace geoseg::spatial {

struct CandidateObject {
  num::Tensor<float> mask;  // per-pixel probability in its source view
  double cx = 0.5, cy = 0.5;  // 2D centroid, normalized to [0,1]
  double depth = 0;           // meters at the centroid pixel
  geom::Vec3 centroid3d;
  double pixel_count = 0;
  double confidence = 1.0;
};

struct RelationConfig {
  double near_threshold = 0.5;    // meters
  double on_top_threshold = 0.3;  // meters, horizontal offset
};

// argmin/argmax/ordinal/median selection per the qualifier table. Ties break
// toward higher confidence, then lower index. Throws on an empty list.
std::size_t resolve_qualifier(const std::vector<CandidateObject>& candidates, QualifierKind kind);

struct RelationResult {
  std::size_t target_index = 0;
  bool satisfied = false;
};

// Tests the relation predicate of each target against the highest-confidence
// reference; among satisfying targets picks the most confident one, with a
// best-confidence fallback flagged unsatisfied.
RelationResult resolve_relation(const std::vector<CandidateObject>& targets,
                                const std::vector<CandidateObject>& references, RelationKind kind,
                                const RelationConfig& cfg = {});

// Candidate geometry from a soft mask over one view: probability-weighted 2D
// centroid, depth-map value at the centroid pixel, unprojected 3D centroid,
// thresholded pixel count.
CandidateObject candidate_from_mask(const scenegen::ViewData& view, const geom::PointMap& points,
                                    const num::Tensor<float>& mask_prob, double confidence);

// Ground-truth candidates (confidence 1) for the given instances, from one
// view's GT masks.
std::vector<CandidateObject> gt_candidates(const scenegen::ViewData& view,
                                           const std::vector<std::uint16_t>& instance_ids);

}  // namespace geoseg::spatial
