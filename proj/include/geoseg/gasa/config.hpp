#pragma once

#include "geoseg/gasa/kernel.hpp"

namespace geoseg::gasa {

// All hyperparameters of the decoder. The toy defaults keep runs desk-sized;
// full-scale values (model_dim 256, 8 heads, ffn 2048) are one config away.
struct GasaConfig {
  int model_dim = 64;   // D
  int num_heads = 4;
  int num_layers = 6;
  int num_queries = 10;  // Q
  int feature_dim = 32;  // backbone feature channels F
  int ffn_mult = 4;
  int num_spatial = 8;  // spatial embedding rows, index 0 = no qualifier

  int kernel_hidden = 32;
  double kernel_clamp_lo = -10.0;
  double kernel_clamp_hi = 0.0;
  KernelMode kernel_mode = KernelMode::kLearned;
  double rbf_sigma = 2.0;  // meters

  int pe_frequencies = 10;  // L
  double pe_scale = 10.0;   // meters
  int pe_hidden = 64;
  bool world_pe = true;

  bool spatial_tokens = true;

  // Default: one geometry-biased self-attention round over encoder tokens,
  // then unbiased query cross-attention. The alternative biases the per-layer
  // query cross-attention using each query's last best-attended position.
  bool biased_query_attention = false;

  int centroid_hidden = 64;

  int head_dim() const { return model_dim / num_heads; }
  int pe_raw_dim() const { return 3 + 6 * pe_frequencies; }
  int ffn_dim() const { return model_dim * ffn_mult; }
};

}  // namespace geoseg::gasa
