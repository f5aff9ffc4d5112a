#include "geoseg/spatial/augment.hpp"

#include <algorithm>
#include <cmath>

namespace geoseg::spatial {

namespace {

// epsilon-tolerant truth of a qualifier for one candidate (depth kinds only
// get tolerance; the rest require winning their sort outright).
bool epsilon_valid(const std::vector<CandidateObject>& cs, std::size_t t, QualifierKind kind,
                   double eps_d) {
  const auto& c = cs[t];
  auto extreme = [&](auto key, bool want_min, double eps) {
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (i == t) continue;
      if (want_min && key(cs[i]) + eps < key(c)) return false;
      if (!want_min && key(cs[i]) - eps > key(c)) return false;
    }
    return true;
  };
  auto depth = [](const CandidateObject& o) { return o.depth; };
  switch (kind) {
    case QualifierKind::kNearest:
      return extreme(depth, true, eps_d);
    case QualifierKind::kFarthest:
      return extreme(depth, false, eps_d);
    default:
      return true;  // non-depth kinds rely on the soundness re-resolution
  }
}

std::vector<std::uint16_t> visible_instances_of_class(const scenegen::ViewData& view,
                                                      const scenegen::SceneSample& sample,
                                                      std::uint16_t class_id) {
  std::vector<std::uint16_t> out;
  for (const auto& obj : sample.objects) {
    if (obj.class_id != class_id) continue;
    bool visible = false;
    for (auto id : view.instance_ids)
      if (id == obj.instance_id) {
        visible = true;
        break;
      }
    if (visible) out.push_back(obj.instance_id);
  }
  return out;
}

}  // namespace

std::vector<QualifierKind> valid_qualifiers(const std::vector<CandidateObject>& candidates,
                                            std::size_t target_index, double epsilon_depth) {
  std::vector<QualifierKind> out;
  for (int k = 0; k <= static_cast<int>(QualifierKind::kSmallest); ++k) {
    const auto kind = static_cast<QualifierKind>(k);
    if (!epsilon_valid(candidates, target_index, kind, epsilon_depth)) continue;
    if (resolve_qualifier(candidates, kind) != target_index) continue;
    out.push_back(kind);
  }
  return out;
}

std::optional<AugmentedPrompt> gt_aware_augment(const scenegen::SceneSample& sample,
                                                std::uint16_t target_instance,
                                                const scenegen::ClassTable& classes,
                                                const AugmentConfig& cfg, num::Rng& rng) {
  const double roll = rng.uniform();

  const auto* target = [&]() -> const scenegen::ObjectSpec* {
    for (const auto& o : sample.objects)
      if (o.instance_id == target_instance) return &o;
    return nullptr;
  }();
  if (!target) return std::nullopt;
  const auto& view = sample.views.at(cfg.reference_view);
  const std::string& class_name = classes.classes[target->class_id].name;

  const auto same_class = visible_instances_of_class(view, sample, target->class_id);
  const auto target_pos =
      std::find(same_class.begin(), same_class.end(), target_instance);
  if (target_pos == same_class.end()) return std::nullopt;  // target not visible
  const std::size_t target_idx = static_cast<std::size_t>(target_pos - same_class.begin());

  // qualifier pool (same-class comparison); single-instance classes are
  // skipped unless multi_instance_only is off
  const auto candidates = gt_candidates(view, same_class);
  std::vector<QualifierKind> qualifier_pool;
  if (same_class.size() >= 2 || !cfg.multi_instance_only) {
    qualifier_pool = valid_qualifiers(candidates, target_idx, cfg.epsilon_depth);
  }

  // relational pool against nearby different-class objects
  struct RelOption {
    RelationKind kind;
    std::uint16_t ref_class;
  };
  std::vector<RelOption> relation_pool;
  {
    std::vector<std::uint16_t> other_classes;
    for (const auto& o : sample.objects) {
      if (o.class_id == target->class_id) continue;
      if (std::find(other_classes.begin(), other_classes.end(), o.class_id) !=
          other_classes.end())
        continue;
      other_classes.push_back(o.class_id);
    }
    // nearest different-class object first
    std::sort(other_classes.begin(), other_classes.end(),
              [&](std::uint16_t a, std::uint16_t b) {
                auto nearest = [&](std::uint16_t cls) {
                  double best = 1e18;
                  for (const auto& o : sample.objects)
                    if (o.class_id == cls)
                      best = std::min(best, geom::distance(o.center, target->center));
                  return best;
                };
                return nearest(a) < nearest(b);
              });
    for (auto cls : other_classes) {
      const auto refs_ids = visible_instances_of_class(view, sample, cls);
      if (refs_ids.empty()) continue;
      const auto refs = gt_candidates(view, refs_ids);
      for (int k = 0; k <= static_cast<int>(RelationKind::kOnTopOf); ++k) {
        const auto kind = static_cast<RelationKind>(k);
        const auto result = resolve_relation(candidates, refs, kind, cfg.relation);
        if (result.satisfied && result.target_index == target_idx) {
          relation_pool.push_back({kind, cls});
        }
      }
      if (!relation_pool.empty()) break;  // use the nearest viable reference class
    }
  }

  if (roll >= cfg.probability) return std::nullopt;
  if (qualifier_pool.empty() && relation_pool.empty()) return std::nullopt;

  AugmentedPrompt out;
  if (!qualifier_pool.empty()) {
    const auto kind =
        qualifier_pool[rng.next_u32(static_cast<std::uint32_t>(qualifier_pool.size()))];
    out.text = canonical_phrase(kind) + " " + class_name;
  } else {
    const auto& opt =
        relation_pool[rng.next_u32(static_cast<std::uint32_t>(relation_pool.size()))];
    const auto& rel_phrases = [&]() -> const std::vector<std::string>& {
      for (const auto& r : Vocabulary::builtin().relations())
        if (r.kind == opt.kind) return r.phrases;
      throw ResolutionError("augment: relation kind missing from vocabulary");
    }();
    out.text = class_name + " " + rel_phrases.front() + " the " +
               classes.classes[opt.ref_class].name;
  }
  out.query = parse_query(out.text);
  return out;
}

}  // namespace geoseg::spatial
