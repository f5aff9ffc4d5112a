#pragma once

#include <optional>
#include <string>

#include "geoseg/numerics/rng.hpp"
#include "geoseg/scenegen/scene.hpp"
#include "geoseg/spatial/parser.hpp"
#include "geoseg/spatial/resolve.hpp"

namespace geoseg::spatial {

struct AugmentConfig {
  double probability = 0.3;
  bool multi_instance_only = true;
  double epsilon_depth = 0.01;  // meters, depth-tie tolerance for validity
  int reference_view = 0;       // view used for spatial context
  RelationConfig relation;
};

struct AugmentedPrompt {
  std::string text;  // e.g. "nearest sphere" or "sphere behind the box"
  Query query;
};

// Verifies candidate qualifiers against ground truth before emitting: a
// qualifier is used only when it is true for the target (depth kinds within
// epsilon_depth) and re-resolving it on the GT candidates selects the target
// again. Relational prompts against nearby different-class objects cover
// targets without same-class competition. Returns nothing with probability
// 1 - p or when no valid prompt exists.
std::optional<AugmentedPrompt> gt_aware_augment(const scenegen::SceneSample& sample,
                                                std::uint16_t target_instance,
                                                const scenegen::ClassTable& classes,
                                                const AugmentConfig& cfg, num::Rng& rng);

// The qualifiers that are simultaneously epsilon-valid and sound for the
// target among its same-class GT candidates (exposed for tests).
std::vector<QualifierKind> valid_qualifiers(const std::vector<CandidateObject>& candidates,
                                            std::size_t target_index, double epsilon_depth);

}  // namespace geoseg::spatial
