#pragma once

#include <functional>
#include <string>
#include <vector>

#include "geoseg/gasa/config.hpp"
#include "geoseg/gasa/kernel.hpp"
#include "geoseg/numerics/rng.hpp"
#include "geoseg/numerics/tensor.hpp"

namespace geoseg::gasa {

template <typename T>
struct AttnBlock {
  // no key bias: it shifts every key equally and cancels in the softmax
  num::DualTensor<T> wq, bq, wk, wv, bv, wo, bo;
  num::DualTensor<T> ln_g, ln_b;
};

template <typename T>
struct FfnBlock {
  num::DualTensor<T> w1, b1, w2, b2;
  num::DualTensor<T> ln_g, ln_b;
};

// One decoder layer: query self-attention, text cross-attention, GASA
// cross-attention (with its per-layer scalar beta), feed-forward. beta is a
// single scalar shared across heads within the layer.
template <typename T>
struct GasaLayer {
  AttnBlock<T> self_attn;
  AttnBlock<T> text_attn;
  AttnBlock<T> cross_attn;
  num::DualTensor<T> beta;  // [1]
  FfnBlock<T> ffn;
};

template <typename T>
struct GasaModel {
  GasaConfig cfg;

  num::DualTensor<T> query_embeddings;    // [Q x D]
  num::DualTensor<T> spatial_embeddings;  // [num_spatial x D]

  num::DualTensor<T> input_proj_w, input_proj_b;  // [F x D], [D]
  num::DualTensor<T> text_proj_w, text_proj_b;    // [F x D], [D]

  num::DualTensor<T> pe_w1, pe_b1, pe_w2, pe_b2;  // [63 x H], [H], [H x D], [D]

  AttnBlock<T> token_attn;          // geometry-biased encoder token round
  num::DualTensor<T> token_beta;    // [1]
  DistanceKernel<T> kernel;

  std::vector<GasaLayer<T>> layers;

  num::DualTensor<T> final_ln_g, final_ln_b;

  num::DualTensor<T> mask_proj_w, mask_proj_b;  // [D x D], [D]
  num::DualTensor<T> conf_w, conf_b;            // [D], [1]
  num::DualTensor<T> cent_w1, cent_b1, cent_w2, cent_b2;  // [D x Hc], [Hc], [Hc x 3], [3]

  using Visitor = std::function<void(const std::string&, num::DualTensor<T>&)>;

  // Fixed enumeration order; the optimizer, checkpoints and the gradient
  // oracle all rely on it.
  void visit_params(const Visitor& fn) {
    fn("query_embeddings", query_embeddings);
    fn("spatial_embeddings", spatial_embeddings);
    fn("input_proj.w", input_proj_w);
    fn("input_proj.b", input_proj_b);
    fn("text_proj.w", text_proj_w);
    fn("text_proj.b", text_proj_b);
    fn("pe.w1", pe_w1);
    fn("pe.b1", pe_b1);
    fn("pe.w2", pe_w2);
    fn("pe.b2", pe_b2);
    visit_attn("token_attn", token_attn, fn);
    fn("token_attn.beta", token_beta);
    fn("kernel.w1", kernel.w1);
    fn("kernel.b1", kernel.b1);
    fn("kernel.w2", kernel.w2);
    fn("kernel.b2", kernel.b2);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      visit_attn(p + "self", layers[l].self_attn, fn);
      visit_attn(p + "text", layers[l].text_attn, fn);
      visit_attn(p + "cross", layers[l].cross_attn, fn);
      fn(p + "beta", layers[l].beta);
      fn(p + "ffn.w1", layers[l].ffn.w1);
      fn(p + "ffn.b1", layers[l].ffn.b1);
      fn(p + "ffn.w2", layers[l].ffn.w2);
      fn(p + "ffn.b2", layers[l].ffn.b2);
      fn(p + "ffn.ln_g", layers[l].ffn.ln_g);
      fn(p + "ffn.ln_b", layers[l].ffn.ln_b);
    }
    fn("final_ln.g", final_ln_g);
    fn("final_ln.b", final_ln_b);
    fn("mask_proj.w", mask_proj_w);
    fn("mask_proj.b", mask_proj_b);
    fn("conf.w", conf_w);
    fn("conf.b", conf_b);
    fn("centroid.w1", cent_w1);
    fn("centroid.b1", cent_b1);
    fn("centroid.w2", cent_w2);
    fn("centroid.b2", cent_b2);
  }

  void zero_grads() {
    visit_params([](const std::string&, num::DualTensor<T>& p) { p.zero_grad(); });
  }

  std::size_t num_params() {
    std::size_t n = 0;
    visit_params([&](const std::string&, num::DualTensor<T>& p) { n += p.value.numel(); });
    return n;
  }

  static GasaModel init(const GasaConfig& cfg, std::uint64_t seed) {
    GasaModel m;
    m.cfg = cfg;
    num::Rng rng(seed);
    const auto D = static_cast<std::size_t>(cfg.model_dim);
    const auto F = static_cast<std::size_t>(cfg.feature_dim);
    const auto Q = static_cast<std::size_t>(cfg.num_queries);
    const auto Hpe = static_cast<std::size_t>(cfg.pe_hidden);
    const auto Hc = static_cast<std::size_t>(cfg.centroid_hidden);
    const auto raw = static_cast<std::size_t>(cfg.pe_raw_dim());

    // weight matrices use fan-in scaling; embedding tables stay at 0.02
    auto weight = [&](std::size_t fan_in, std::size_t fan_out) {
      num::Tensor<T> t({fan_in, fan_out});
      const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, s));
      return num::DualTensor<T>(std::move(t));
    };
    auto gauss = [&](std::vector<std::size_t> shape, double s) {
      num::Tensor<T> t(std::move(shape));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, s));
      return num::DualTensor<T>(std::move(t));
    };
    auto zeros = [&](std::vector<std::size_t> shape) {
      return num::DualTensor<T>(num::Tensor<T>(std::move(shape)));
    };
    auto ones = [&](std::vector<std::size_t> shape) {
      return num::DualTensor<T>(num::Tensor<T>::full(std::move(shape), T(1)));
    };
    auto attn = [&](AttnBlock<T>& b) {
      b.wq = weight(D, D);
      b.bq = zeros({D});
      b.wk = weight(D, D);
      b.wv = weight(D, D);
      b.bv = zeros({D});
      b.wo = weight(D, D);
      b.bo = zeros({D});
      b.ln_g = ones({D});
      b.ln_b = zeros({D});
    };

    m.query_embeddings = gauss({Q, D}, 0.02);
    m.spatial_embeddings = gauss({static_cast<std::size_t>(cfg.num_spatial), D}, 0.02);
    m.input_proj_w = weight(F, D);
    m.input_proj_b = zeros({D});
    m.text_proj_w = weight(F, D);
    m.text_proj_b = zeros({D});
    m.pe_w1 = weight(raw, Hpe);
    m.pe_b1 = zeros({Hpe});
    m.pe_w2 = weight(Hpe, D);
    m.pe_b2 = zeros({D});
    attn(m.token_attn);
    m.token_beta = num::DualTensor<T>(num::Tensor<T>({1}, {T(1)}));
    m.kernel = kernel_init(seed, cfg.kernel_hidden, cfg.kernel_clamp_lo, cfg.kernel_clamp_hi)
                   .template cast<T>();
    m.layers.resize(cfg.num_layers);
    for (auto& layer : m.layers) {
      attn(layer.self_attn);
      attn(layer.text_attn);
      attn(layer.cross_attn);
      layer.beta = num::DualTensor<T>(num::Tensor<T>({1}, {T(1)}));
      layer.ffn.w1 = weight(D, static_cast<std::size_t>(cfg.ffn_dim()));
      layer.ffn.b1 = zeros({static_cast<std::size_t>(cfg.ffn_dim())});
      layer.ffn.w2 = weight(static_cast<std::size_t>(cfg.ffn_dim()), D);
      layer.ffn.b2 = zeros({D});
      layer.ffn.ln_g = ones({D});
      layer.ffn.ln_b = zeros({D});
    }
    m.final_ln_g = ones({D});
    m.final_ln_b = zeros({D});
    m.mask_proj_w = weight(D, D);
    m.mask_proj_b = zeros({D});
    m.conf_w = gauss({D}, 0.1);
    m.conf_b = zeros({1});
    m.cent_w1 = weight(D, Hc);
    m.cent_b1 = zeros({Hc});
    m.cent_w2 = weight(Hc, 3);
    m.cent_b2 = zeros({3});
    return m;
  }

  // Flat views over all parameters in visitation order; the gradient oracle
  // and the optimizer index into these.
  num::Tensor<double> flatten_values() {
    std::vector<double> out;
    visit_params([&](const std::string&, num::DualTensor<T>& p) {
      for (std::size_t i = 0; i < p.value.numel(); ++i)
        out.push_back(static_cast<double>(p.value[i]));
    });
    const std::size_t n = out.size();
    return num::Tensor<double>({n}, std::move(out));
  }

  num::Tensor<double> flatten_grads() {
    std::vector<double> out;
    visit_params([&](const std::string&, num::DualTensor<T>& p) {
      for (std::size_t i = 0; i < p.grad.numel(); ++i)
        out.push_back(static_cast<double>(p.grad[i]));
    });
    const std::size_t n = out.size();
    return num::Tensor<double>({n}, std::move(out));
  }

  void load_flat_values(const num::Tensor<double>& theta) {
    std::size_t k = 0;
    visit_params([&](const std::string&, num::DualTensor<T>& p) {
      for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] = static_cast<T>(theta[k++]);
    });
    if (k != theta.numel()) {
      throw ShapeError("load_flat_values: expected " + std::to_string(k) + " values, got " +
                       std::to_string(theta.numel()));
    }
  }

 private:
  static void visit_attn(const std::string& prefix, AttnBlock<T>& b, const Visitor& fn) {
    fn(prefix + ".wq", b.wq);
    fn(prefix + ".bq", b.bq);
    fn(prefix + ".wk", b.wk);
    fn(prefix + ".wv", b.wv);
    fn(prefix + ".bv", b.bv);
    fn(prefix + ".wo", b.wo);
    fn(prefix + ".bo", b.bo);
    fn(prefix + ".ln_g", b.ln_g);
    fn(prefix + ".ln_b", b.ln_b);
  }
};

}  // namespace geoseg::gasa
