#pragma once

#include <string>
#include <vector>

#include "geoseg/harness/train.hpp"

namespace geoseg::harness {

struct AblationRow {
  std::string name;
  double miou = 0;
  double delta = 0;  // against the full model
  std::vector<double> per_seed;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // full, -kernel, -pe, -both, rbf
  std::string table() const;
};

// Trains five variants (full, kernel off, world-PE off, both off, RBF
// kernel) with identical data, schedules, and seeds, and reports holdout
// mIoU deltas against the full model averaged over num_seeds runs.
AblationTable run_ablation_suite(const scenegen::Dataset& dataset, const TrainConfig& base,
                                 int num_seeds = 3);

}  // namespace geoseg::harness
