#pragma once

#include <optional>
#include <string>
#include <vector>

#include "geoseg/gasa/decoder.hpp"
#include "geoseg/harness/evaluate.hpp"
#include "geoseg/losses/losses.hpp"
#include "geoseg/scenegen/dataset.hpp"

namespace geoseg::harness {

struct TrainConfig {
  int epochs = 4;
  int batch_size = 2;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int warmup_epochs = 2;
  std::uint64_t seed = 0;
  int threads = 1;

  double negative_prob = 0.15;  // absent-class prompts for presence training
  double augment_prob = 0.3;
  bool multi_instance_only = true;
  double holdout_fraction = 0.2;
  int token_block = 4;
  int eval_every = 1;  // epochs between holdout evals; 0 = final epoch only

  // ablation switches
  gasa::KernelMode kernel_mode = gasa::KernelMode::kLearned;
  bool world_pe = true;
  bool spatial_tokens = true;
  bool freeze_beta = false;

  gasa::GasaConfig base_model;  // dims; ablation flags above override
  loss::LossWeights<float> weights;

  gasa::GasaConfig model_config(int feature_dim) const {
    gasa::GasaConfig cfg = base_model;
    cfg.feature_dim = feature_dim;
    cfg.kernel_mode = kernel_mode;
    cfg.world_pe = world_pe;
    cfg.spatial_tokens = spatial_tokens;
    return cfg;
  }
};

struct TrainResult {
  gasa::GasaModel<float> model;
  std::vector<std::string> log_lines;  // one structured line per step + epoch evals
  EvalReport holdout_eval;
  std::vector<int> train_scenes, holdout_scenes;
};

// Loss of a single (scene, instance, prompt) item; backward accumulates into
// the model when grads is true. Shared between training and the training-path
// gradient oracle.
struct TrainItem {
  int scene = 0;
  std::uint16_t instance = 0;   // target (ignored for negatives)
  std::uint16_t class_id = 0;   // queried class
  int qualifier_index = 0;
  bool present = true;
};

loss::LossReport<float> item_loss(gasa::GasaModel<float>& model,
                                  const scenegen::Dataset& dataset, const TrainItem& item,
                                  const loss::LossWeights<float>& weights, int token_block,
                                  float grad_scale, bool backward);

// AdamW + cosine schedule over per-instance items with GT-aware spatial
// augmentation and absent-class negatives. Deterministic given seed; aborts
// with TrainAbortError (naming the offending term) on a non-finite loss.
TrainResult train(gasa::GasaModel<float> model, const scenegen::Dataset& dataset,
                  const TrainConfig& cfg, const std::string& log_path = "");

}  // namespace geoseg::harness
