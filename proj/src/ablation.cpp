#include "geoseg/harness/ablation.hpp"

#include <cstdio>
#include <sstream>

namespace geoseg::harness {

AblationTable run_ablation_suite(const scenegen::Dataset& dataset, const TrainConfig& base,
                                 int num_seeds) {
  struct Variant {
    const char* name;
    gasa::KernelMode kernel;
    bool world_pe;
  };
  const Variant variants[] = {
      {"full", gasa::KernelMode::kLearned, true},
      {"-kernel", gasa::KernelMode::kOff, true},
      {"-world_pe", gasa::KernelMode::kLearned, false},
      {"-both", gasa::KernelMode::kOff, false},
      {"rbf", gasa::KernelMode::kRbf, true},
  };

  AblationTable out;
  for (const auto& v : variants) {
    AblationRow row;
    row.name = v.name;
    for (int s = 0; s < num_seeds; ++s) {
      TrainConfig cfg = base;
      cfg.kernel_mode = v.kernel;
      cfg.world_pe = v.world_pe;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      auto model = gasa::GasaModel<float>::init(cfg.model_config(dataset.feature_dim), cfg.seed);
      auto result = train(std::move(model), dataset, cfg);
      row.per_seed.push_back(result.holdout_eval.miou);
      row.miou += result.holdout_eval.miou;
    }
    row.miou /= num_seeds;
    out.rows.push_back(std::move(row));
  }
  for (auto& row : out.rows) row.delta = row.miou - out.rows[0].miou;
  return out;
}

std::string AblationTable::table() const {
  std::ostringstream os;
  os << "configuration   mIoU    delta   (per seed)\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-14s %7.4f %+7.4f  ", r.name.c_str(), r.miou, r.delta);
    os << buf;
    for (double v : r.per_seed) {
      std::snprintf(buf, sizeof(buf), " %.4f", v);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace geoseg::harness
