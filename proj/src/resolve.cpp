#include "geoseg/spatial/resolve.hpp"

#include <algorithm>
#include <cmath>

#include "geoseg/geometry/centroid.hpp"

namespace geoseg::spatial {

namespace {

enum class Dir { kMin, kMax };

double key_of(const CandidateObject& c, QualifierKind kind,
              const std::vector<CandidateObject>& all) {
  switch (kind) {
    case QualifierKind::kNearest:
    case QualifierKind::kFarthest:
    case QualifierKind::kSecondNearest:
    case QualifierKind::kSecondFarthest:
    case QualifierKind::kMidDepth:
      return c.depth;
    case QualifierKind::kLeftmost:
    case QualifierKind::kRightmost:
    case QualifierKind::kSecondLeftmost:
    case QualifierKind::kSecondRightmost:
      return c.cx;
    case QualifierKind::kTopmost:
    case QualifierKind::kBottommost:
    case QualifierKind::kSecondTopmost:
    case QualifierKind::kSecondBottommost:
      return c.cy;
    case QualifierKind::kCenter: {
      double mx = 0, my = 0;
      for (const auto& o : all) {
        mx += o.cx;
        my += o.cy;
      }
      mx /= static_cast<double>(all.size());
      my /= static_cast<double>(all.size());
      return std::hypot(c.cx - mx, c.cy - my);
    }
    case QualifierKind::kLargest:
    case QualifierKind::kSmallest:
      return c.pixel_count;
  }
  return 0;
}

Dir dir_of(QualifierKind kind) {
  switch (kind) {
    case QualifierKind::kFarthest:
    case QualifierKind::kSecondFarthest:
    case QualifierKind::kRightmost:
    case QualifierKind::kSecondRightmost:
    case QualifierKind::kBottommost:
    case QualifierKind::kSecondBottommost:
    case QualifierKind::kLargest:
      return Dir::kMax;
    default:
      return Dir::kMin;
  }
}

bool is_ordinal(QualifierKind kind) {
  switch (kind) {
    case QualifierKind::kSecondNearest:
    case QualifierKind::kSecondFarthest:
    case QualifierKind::kSecondLeftmost:
    case QualifierKind::kSecondRightmost:
    case QualifierKind::kSecondTopmost:
    case QualifierKind::kSecondBottommost:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::size_t resolve_qualifier(const std::vector<CandidateObject>& candidates,
                              QualifierKind kind) {
  if (candidates.empty()) {
    throw ResolutionError("resolve_qualifier: empty candidate list");
  }
  const std::size_t n = candidates.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const Dir dir = dir_of(kind);
  auto better = [&](std::size_t a, std::size_t b) {
    const double ka = key_of(candidates[a], kind, candidates);
    const double kb = key_of(candidates[b], kind, candidates);
    if (ka != kb) return dir == Dir::kMin ? ka < kb : ka > kb;
    if (candidates[a].confidence != candidates[b].confidence)
      return candidates[a].confidence > candidates[b].confidence;
    return a < b;
  };
  std::sort(order.begin(), order.end(), better);
  if (is_ordinal(kind)) return order[n >= 2 ? 1 : 0];
  if (kind == QualifierKind::kMidDepth) return order[(n - 1) / 2];  // lower median
  return order[0];
}

namespace {

bool predicate_holds(const CandidateObject& t, const CandidateObject& ref, RelationKind kind,
                     const RelationConfig& cfg) {
  switch (kind) {
    case RelationKind::kLeftOf: return t.cx < ref.cx;
    case RelationKind::kRightOf: return t.cx > ref.cx;
    case RelationKind::kAbove: return t.cy < ref.cy;
    case RelationKind::kBelow: return t.cy > ref.cy;
    case RelationKind::kInFrontOf: return t.depth < ref.depth;
    case RelationKind::kBehind: return t.depth > ref.depth;
    case RelationKind::kNear:
      return geom::distance(t.centroid3d, ref.centroid3d) < cfg.near_threshold;
    case RelationKind::kOnTopOf: {
      const double dx = t.centroid3d.x - ref.centroid3d.x;
      const double dz = t.centroid3d.z - ref.centroid3d.z;
      return t.cy < ref.cy && std::hypot(dx, dz) < cfg.on_top_threshold;
    }
  }
  return false;
}

}  // namespace

RelationResult resolve_relation(const std::vector<CandidateObject>& targets,
                                const std::vector<CandidateObject>& references, RelationKind kind,
                                const RelationConfig& cfg) {
  if (targets.empty() || references.empty()) {
    throw ResolutionError("resolve_relation: empty target or reference list");
  }
  std::size_t ref = 0;
  for (std::size_t i = 1; i < references.size(); ++i)
    if (references[i].confidence > references[ref].confidence) ref = i;

  RelationResult out;
  double best_conf = -1, best_any = -1;
  std::size_t best_any_idx = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].confidence > best_any) {
      best_any = targets[i].confidence;
      best_any_idx = i;
    }
    if (!predicate_holds(targets[i], references[ref], kind, cfg)) continue;
    if (targets[i].confidence > best_conf) {
      best_conf = targets[i].confidence;
      out.target_index = i;
      out.satisfied = true;
    }
  }
  if (!out.satisfied) out.target_index = best_any_idx;
  return out;
}

CandidateObject candidate_from_mask(const scenegen::ViewData& view, const geom::PointMap& points,
                                    const num::Tensor<float>& mask_prob, double confidence) {
  CandidateObject c;
  c.mask = mask_prob;
  c.confidence = confidence;
  double wsum = 0, sx = 0, sy = 0;
  for (int v = 0; v < view.height; ++v)
    for (int u = 0; u < view.width; ++u) {
      const double w = mask_prob[view.pixel_index(u, v)];
      wsum += w;
      sx += w * u;
      sy += w * v;
      if (w > 0.5) c.pixel_count += 1;
    }
  if (wsum > 1e-9) {
    c.cx = sx / wsum / std::max(1, view.width - 1);
    c.cy = sy / wsum / std::max(1, view.height - 1);
    const int cu = std::min(view.width - 1,
                            std::max(0, static_cast<int>(std::lround(sx / wsum))));
    const int cv = std::min(view.height - 1,
                            std::max(0, static_cast<int>(std::lround(sy / wsum))));
    c.depth = view.depth[view.pixel_index(cu, cv)];
  }
  auto res = geom::mask_weighted_centroid(mask_prob, points);
  c.centroid3d = res.centroid;
  return c;
}

std::vector<CandidateObject> gt_candidates(const scenegen::ViewData& view,
                                           const std::vector<std::uint16_t>& instance_ids) {
  auto points = scenegen::view_pointmap(view);
  std::vector<CandidateObject> out;
  for (auto id : instance_ids) {
    auto mask = scenegen::instance_mask<float>(view, id);
    out.push_back(candidate_from_mask(view, points, mask, 1.0));
  }
  return out;
}

}  // namespace geoseg::spatial
