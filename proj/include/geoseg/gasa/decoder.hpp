#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "geoseg/gasa/model.hpp"
#include "geoseg/gasa/token_grid.hpp"
#include "geoseg/geometry/centroid.hpp"
#include "geoseg/geometry/world_pe.hpp"
#include "geoseg/numerics/ops.hpp"

namespace geoseg::gasa {

// ---------------------------------------------------------------------------
// encoder memory

template <typename T>
struct EncoderMemory {
  int views = 0;
  int block = 4;
  std::vector<int> image_w, image_h;
  std::vector<num::Tensor<T>> feat;                      // per view [n x D]
  std::vector<num::Tensor<double>> positions;            // per view [n x 3]
  std::vector<std::vector<std::uint8_t>> valid;          // per view
  std::vector<std::vector<std::array<int, 4>>> blocks;   // per view pixel rects

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& f : feat) n += f.rows();
    return n;
  }
};

template <typename T>
struct MemoryTrace {
  std::vector<num::Tensor<T>> feat_in;   // [n x F]
  std::vector<num::Tensor<T>> pe_raw;    // [n x 63]
  std::vector<num::Tensor<T>> pe_h_pre;  // [n x Hpe]
  std::vector<num::Tensor<T>> pe_h;
};

// Projects pooled backbone features to model dimension and adds the world
// positional embedding of each token's 3D position. Invalid tokens are
// excluded from the PE contribution.
template <typename T>
EncoderMemory<T> build_memory(const GasaModel<T>& model,
                              const std::vector<TokenGridView>& grids, MemoryTrace<T>* trace) {
  const auto& cfg = model.cfg;
  EncoderMemory<T> mem;
  mem.views = static_cast<int>(grids.size());
  mem.block = grids.empty() ? 4 : grids[0].block;
  geom::SinusoidConfig pe_cfg{cfg.pe_frequencies, cfg.pe_scale};
  const std::size_t raw_dim = static_cast<std::size_t>(cfg.pe_raw_dim());
  for (const auto& g : grids) {
    const std::size_t n = g.count();
    mem.image_w.push_back(g.image_width);
    mem.image_h.push_back(g.image_height);
    mem.valid.push_back(g.valid);
    mem.blocks.push_back(g.blocks);
    num::Tensor<double> pos({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
      pos.at(i, 0) = g.positions[i].x;
      pos.at(i, 1) = g.positions[i].y;
      pos.at(i, 2) = g.positions[i].z;
    }
    mem.positions.push_back(std::move(pos));

    num::Tensor<T> feat_in = g.features.template cast<T>();
    num::Tensor<T> proj = num::linear(feat_in, model.input_proj_w.value, model.input_proj_b.value);
    if (cfg.world_pe) {
      num::Tensor<T> pe_raw({n, raw_dim});
      std::vector<double> enc(raw_dim);
      for (std::size_t i = 0; i < n; ++i) {
        if (!g.valid[i]) continue;
        geom::sinusoid_encoding_into(g.positions[i], pe_cfg, enc.data());
        for (std::size_t j = 0; j < raw_dim; ++j) pe_raw.at(i, j) = static_cast<T>(enc[j]);
      }
      num::Tensor<T> h_pre = num::linear(pe_raw, model.pe_w1.value, model.pe_b1.value);
      num::Tensor<T> h = num::elementwise(num::Unary::kGelu, h_pre);
      num::Tensor<T> pe_out = num::linear(h, model.pe_w2.value, model.pe_b2.value);
      for (std::size_t i = 0; i < n; ++i) {
        if (!g.valid[i]) continue;
        for (std::size_t c = 0; c < proj.cols(); ++c) proj.at(i, c) += pe_out.at(i, c);
      }
      if (trace) {
        trace->pe_raw.push_back(std::move(pe_raw));
        trace->pe_h_pre.push_back(std::move(h_pre));
        trace->pe_h.push_back(std::move(h));
      }
    }
    if (trace) trace->feat_in.push_back(std::move(feat_in));
    mem.feat.push_back(std::move(proj));
  }
  return mem;
}

template <typename T>
void build_memory_backward(GasaModel<T>& model, const EncoderMemory<T>& mem,
                           const MemoryTrace<T>& trace,
                           const std::vector<num::Tensor<T>>& gfeat) {
  const auto& cfg = model.cfg;
  for (int v = 0; v < mem.views; ++v) {
    const auto& g = gfeat[v];
    num::Tensor<T> gfeat_in(trace.feat_in[v].shape());
    num::linear_backward(trace.feat_in[v], model.input_proj_w.value, g, gfeat_in,
                         model.input_proj_w.grad, model.input_proj_b.grad);
    if (cfg.world_pe) {
      num::Tensor<T> gpe_out(g.shape());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        if (!mem.valid[v][i]) continue;
        for (std::size_t c = 0; c < g.cols(); ++c) gpe_out.at(i, c) = g.at(i, c);
      }
      num::Tensor<T> gh(trace.pe_h[v].shape());
      num::linear_backward(trace.pe_h[v], model.pe_w2.value, gpe_out, gh, model.pe_w2.grad,
                           model.pe_b2.grad);
      num::Tensor<T> gh_pre(trace.pe_h_pre[v].shape());
      num::elementwise_backward(num::Unary::kGelu, trace.pe_h_pre[v], trace.pe_h[v], gh, gh_pre);
      num::Tensor<T> gpe_raw(trace.pe_raw[v].shape());
      num::linear_backward(trace.pe_raw[v], model.pe_w1.value, gh_pre, gpe_raw,
                           model.pe_w1.grad, model.pe_b1.grad);
    }
  }
}

// ---------------------------------------------------------------------------
// attention sub-block with pre-norm residual

template <typename T>
struct AttnTrace {
  num::LayerNormTrace<T> ln;
  num::Tensor<T> xn;                    // normalized query-side input
  num::Tensor<T> q, k, v;               // projections
  std::vector<num::Tensor<T>> weights;  // per head [n x m]
  num::Tensor<T> concat;                // pre-output-projection

  // geometric bias bookkeeping (has_bias only)
  bool has_bias = false;
  KernelMode bias_mode = KernelMode::kOff;
  num::Tensor<T> phi;                   // kernel/rbf values per pair, pre-beta
  KernelTrace<T> ktrace;
  std::vector<std::uint8_t> pair_valid;
};

// y = x + Wo * MHA(LN(x), memory); memory == nullptr selects self-attention
// where keys and values come from the normalized x. bias, when present, is an
// [n x m] matrix added to every head's scores before softmax.
template <typename T>
num::Tensor<T> attn_forward(const AttnBlock<T>& blk, const num::Tensor<T>& x,
                            const num::Tensor<T>* memory, const num::Tensor<T>* bias, int heads,
                            AttnTrace<T>& tr) {
  const std::size_t d = x.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  tr.xn = num::layer_norm(x, blk.ln_g.value, blk.ln_b.value, &tr.ln);
  const num::Tensor<T>& src = memory ? *memory : tr.xn;
  tr.q = num::linear(tr.xn, blk.wq.value, blk.bq.value);
  tr.k = num::matmul(src, blk.wk.value);
  tr.v = num::linear(src, blk.wv.value, blk.bv.value);
  const std::size_t n = tr.q.rows();
  tr.weights.clear();
  tr.concat = num::Tensor<T>({n, d});
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    auto qh = num::slice_cols(tr.q, c0, c0 + dh);
    auto kh = num::slice_cols(tr.k, c0, c0 + dh);
    auto vh = num::slice_cols(tr.v, c0, c0 + dh);
    auto scores = num::matmul(qh, num::transpose(kh));
    for (std::size_t i = 0; i < scores.numel(); ++i) scores[i] *= scale;
    if (bias) {
      num::check_same_shape(scores, *bias, "attention bias");
      for (std::size_t i = 0; i < scores.numel(); ++i) scores[i] += (*bias)[i];
    }
    auto w = num::softmax(scores);
    auto oh = num::matmul(w, vh);
    num::add_into_cols(tr.concat, c0, oh);
    tr.weights.push_back(std::move(w));
  }
  auto out = num::linear(tr.concat, blk.wo.value, blk.bo.value);
  return num::add(x, out);
}

template <typename T>
void attn_backward(AttnBlock<T>& blk, const num::Tensor<T>& x, const num::Tensor<T>* memory,
                   const AttnTrace<T>& tr, const num::Tensor<T>& gy, int heads, num::Tensor<T>& gx,
                   num::Tensor<T>* gmemory, num::Tensor<T>* gbias) {
  const std::size_t d = x.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const std::size_t n = tr.q.rows(), m = tr.k.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  // residual
  for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];

  num::Tensor<T> gconcat({n, d});
  num::linear_backward(tr.concat, blk.wo.value, gy, gconcat, blk.wo.grad, blk.bo.grad);

  num::Tensor<T> gq({n, d}), gk({m, d}), gv({m, d});
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    auto qh = num::slice_cols(tr.q, c0, c0 + dh);
    auto kh = num::slice_cols(tr.k, c0, c0 + dh);
    auto vh = num::slice_cols(tr.v, c0, c0 + dh);
    auto khT = num::transpose(kh);
    auto go = num::slice_cols(gconcat, c0, c0 + dh);
    const auto& w = tr.weights[h];

    num::Tensor<T> gw({n, m}), gvh({m, dh});
    num::matmul_backward(w, vh, go, gw, gvh);

    // dz is the gradient of (scaled scores + bias): it feeds the bias
    // directly and the raw scores after rescaling
    num::Tensor<T> gscores({n, m}), gs_bias({n, m});
    num::softmax_with_bias_backward(w, gw, gscores, gs_bias);
    if (gbias) {
      for (std::size_t i = 0; i < gs_bias.numel(); ++i) (*gbias)[i] += gs_bias[i];
    }
    for (std::size_t i = 0; i < gscores.numel(); ++i) gscores[i] *= scale;

    num::Tensor<T> gqh({n, dh}), gkhT({dh, m});
    num::matmul_backward(qh, khT, gscores, gqh, gkhT);
    num::add_into_cols(gq, c0, gqh);
    num::add_into_cols(gv, c0, gvh);
    auto gkh = num::transpose(gkhT);
    num::add_into_cols(gk, c0, gkh);
  }

  const num::Tensor<T>& src = memory ? *memory : tr.xn;
  num::Tensor<T> gxn(tr.xn.shape());
  num::Tensor<T> gsrc(src.shape());
  num::linear_backward(tr.xn, blk.wq.value, gq, gxn, blk.wq.grad, blk.bq.grad);
  num::matmul_backward(src, blk.wk.value, gk, gsrc, blk.wk.grad);
  num::linear_backward(src, blk.wv.value, gv, gsrc, blk.wv.grad, blk.bv.grad);
  if (memory) {
    if (gmemory) {
      for (std::size_t i = 0; i < gsrc.numel(); ++i) (*gmemory)[i] += gsrc[i];
    }
  } else {
    for (std::size_t i = 0; i < gsrc.numel(); ++i) gxn[i] += gsrc[i];
  }
  num::layer_norm_backward(tr.ln, blk.ln_g.value, gxn, gx, blk.ln_g.grad, blk.ln_b.grad);
}

// ---------------------------------------------------------------------------
// feed-forward sub-block

template <typename T>
struct FfnTrace {
  num::LayerNormTrace<T> ln;
  num::Tensor<T> xn, h_pre, h;
};

template <typename T>
num::Tensor<T> ffn_forward(const FfnBlock<T>& blk, const num::Tensor<T>& x, FfnTrace<T>& tr) {
  tr.xn = num::layer_norm(x, blk.ln_g.value, blk.ln_b.value, &tr.ln);
  tr.h_pre = num::linear(tr.xn, blk.w1.value, blk.b1.value);
  tr.h = num::elementwise(num::Unary::kGelu, tr.h_pre);
  auto out = num::linear(tr.h, blk.w2.value, blk.b2.value);
  return num::add(x, out);
}

template <typename T>
void ffn_backward(FfnBlock<T>& blk, const num::Tensor<T>& /*x*/, const FfnTrace<T>& tr,
                  const num::Tensor<T>& gy, num::Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
  num::Tensor<T> gh(tr.h.shape());
  num::linear_backward(tr.h, blk.w2.value, gy, gh, blk.w2.grad, blk.b2.grad);
  num::Tensor<T> gh_pre(tr.h_pre.shape());
  num::elementwise_backward(num::Unary::kGelu, tr.h_pre, tr.h, gh, gh_pre);
  num::Tensor<T> gxn(tr.xn.shape());
  num::linear_backward(tr.xn, blk.w1.value, gh_pre, gxn, blk.w1.grad, blk.b1.grad);
  num::layer_norm_backward(tr.ln, blk.ln_g.value, gxn, gx, blk.ln_g.grad, blk.ln_b.grad);
}

// ---------------------------------------------------------------------------
// geometric bias construction

template <typename T>
struct BiasBundle {
  num::Tensor<T> bias;  // beta * phi, invalid pairs at beta * clamp floor
  num::Tensor<T> phi;
  KernelTrace<T> ktrace;
  std::vector<std::uint8_t> pair_valid;
  KernelMode mode = KernelMode::kOff;
};

// dist is [n x m] in meters; pair validity is the AND of both tokens' flags.
template <typename T>
BiasBundle<T> make_bias(const GasaModel<T>& model, T beta, const num::Tensor<double>& dist,
                        const std::vector<std::uint8_t>& valid_rows,
                        const std::vector<std::uint8_t>& valid_cols, bool with_trace) {
  const auto& cfg = model.cfg;
  BiasBundle<T> b;
  b.mode = cfg.kernel_mode;
  const std::size_t n = dist.dim(0), m = dist.dim(1);
  b.bias = num::Tensor<T>({n, m});
  if (cfg.kernel_mode == KernelMode::kOff) return b;

  auto dist_t = dist.template cast<T>();
  b.pair_valid.assign(n * m, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (!valid_rows[i] || !valid_cols[j]) b.pair_valid[i * m + j] = 0;

  const T lo = static_cast<T>(cfg.kernel_clamp_lo);
  const T hi = static_cast<T>(cfg.kernel_clamp_hi);
  if (cfg.kernel_mode == KernelMode::kLearned) {
    b.phi = kernel_phi(model.kernel, dist_t, with_trace ? &b.ktrace : nullptr);
  } else {
    b.phi = num::Tensor<T>(dist_t.shape());
    for (std::size_t i = 0; i < dist_t.numel(); ++i)
      b.phi[i] = rbf_phi(dist_t[i], static_cast<T>(cfg.rbf_sigma), lo, hi);
  }
  for (std::size_t i = 0; i < b.phi.numel(); ++i) {
    const T phi_eff = b.pair_valid[i] ? b.phi[i] : lo;
    b.bias[i] = beta * phi_eff;
  }
  return b;
}

// Accumulates into beta and (for the learned kernel) the kernel parameters.
template <typename T>
void bias_backward(GasaModel<T>& model, const BiasBundle<T>& b, T beta,
                   const num::Tensor<T>& gbias, T& gbeta) {
  if (b.mode == KernelMode::kOff) return;
  const T lo = static_cast<T>(model.cfg.kernel_clamp_lo);
  num::Tensor<T> gphi(b.phi.shape());
  for (std::size_t i = 0; i < gbias.numel(); ++i) {
    const T phi_eff = b.pair_valid[i] ? b.phi[i] : lo;
    gbeta += gbias[i] * phi_eff;
    gphi[i] = b.pair_valid[i] ? gbias[i] * beta : T(0);
  }
  if (b.mode == KernelMode::kLearned) kernel_phi_backward(model.kernel, b.ktrace, gphi);
}

// ---------------------------------------------------------------------------
// prediction

template <typename T>
struct Prediction {
  std::vector<std::vector<num::Tensor<T>>> masks;  // [Q][V], pixel probabilities H x W
  std::vector<T> confidences;                      // [Q]
  T presence{};
  int best_query = 0;
  int best_view = 0;
  geom::Vec3 centroid;                    // mask-weighted unprojection centroid
  std::array<T, 3> centroid_regressed{};  // centroid head output
  double mask_weight_sum = 0;             // selected view's probability mass
};

// Highest confidence wins; ties break to the lowest query index, then the
// lowest view index.
template <typename T>
std::pair<int, int> select_mask(const Prediction<T>& pred) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(pred.confidences.size()); ++i)
    if (pred.confidences[i] > pred.confidences[best]) best = i;
  return {best, pred.best_view};
}

// Oracle variant for evaluation: picks the query whose mask has the highest
// IoU against ground truth. gt_iou is per query.
inline int select_mask_oracle(const std::vector<double>& gt_iou) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(gt_iou.size()); ++i)
    if (gt_iou[i] > gt_iou[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// decode

template <typename T>
struct LayerTrace {
  num::Tensor<T> x0, x1, x2, x3;  // sub-block inputs
  AttnTrace<T> self_t, text_t, cross_t;
  FfnTrace<T> ffn_t;
  BiasBundle<T> cross_bias;  // biased query mode only
  bool cross_biased = false;
};

template <typename T>
struct DecodeTrace {
  std::vector<num::Tensor<T>> mem_in;  // inputs to the token round
  std::vector<AttnTrace<T>> token_t;
  std::vector<BiasBundle<T>> token_bias;
  std::vector<num::Tensor<T>> refined;
  num::Tensor<T> mem_cat;
  num::Tensor<T> text_in;   // [1 x F]
  num::Tensor<T> text_mem;  // [1 x D]
  num::Tensor<T> queries0;
  int qualifier = 0;
  std::vector<LayerTrace<T>> layers;
  num::Tensor<T> pre_final;
  num::LayerNormTrace<T> final_ln;
  num::Tensor<T> qhat;
  num::Tensor<T> mask_q;
  std::vector<num::Tensor<T>> tok_logits;  // per view [Q x n_v]
  std::vector<num::Tensor<T>> tok_probs;
  num::Tensor<T> conf_logits;  // [Q x 1]
  num::Tensor<T> cent_in, cent_h_pre, cent_h;
  int best_query = 0;
};

namespace detail {

template <typename T>
num::Tensor<T> vstack(const std::vector<num::Tensor<T>>& parts) {
  std::size_t rows = 0, cols = parts.empty() ? 0 : parts[0].cols();
  for (const auto& p : parts) rows += p.rows();
  num::Tensor<T> out({rows, cols});
  std::size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + r * cols);
    r += p.rows();
  }
  return out;
}

// distance matrix between two position sets, in double
inline num::Tensor<double> position_distances(const num::Tensor<double>& a,
                                              const num::Tensor<double>& b) {
  return geom::pairwise_distances(a, b);
}

}  // namespace detail

// Runs the full decoder: spatial-conditioned queries, one geometry-biased
// token self-attention round per view, six decoder layers, then the mask,
// confidence and centroid heads. pointmaps (per view, pixel resolution) feed
// the unprojection centroid; pass nullptr to skip it.
template <typename T>
Prediction<T> decode(const GasaModel<T>& model, const EncoderMemory<T>& mem,
                     const num::Tensor<T>& text_feature, int qualifier_index,
                     const std::vector<geom::PointMap>* pointmaps, DecodeTrace<T>* trace) {
  const auto& cfg = model.cfg;
  const auto Q = static_cast<std::size_t>(cfg.num_queries);
  const auto D = static_cast<std::size_t>(cfg.model_dim);
  DecodeTrace<T> local;
  DecodeTrace<T>& tr = trace ? *trace : local;
  tr.qualifier = qualifier_index;

  // token round, per view
  tr.mem_in = mem.feat;
  tr.refined.clear();
  tr.token_t.assign(mem.views, {});
  tr.token_bias.assign(mem.views, {});
  for (int v = 0; v < mem.views; ++v) {
    auto dist = detail::position_distances(mem.positions[v], mem.positions[v]);
    tr.token_bias[v] = make_bias(model, model.token_beta.value[0], dist, mem.valid[v],
                                 mem.valid[v], trace != nullptr);
    tr.refined.push_back(attn_forward(model.token_attn, mem.feat[v], (const num::Tensor<T>*)nullptr,
                                      &tr.token_bias[v].bias, cfg.num_heads, tr.token_t[v]));
  }
  tr.mem_cat = detail::vstack(tr.refined);

  // text memory
  tr.text_in = text_feature;
  tr.text_mem = num::linear(text_feature, model.text_proj_w.value, model.text_proj_b.value);

  // queries with spatial conditioning
  tr.queries0 = model.query_embeddings.value;
  if (cfg.spatial_tokens && qualifier_index > 0) {
    for (std::size_t i = 0; i < Q; ++i)
      for (std::size_t c = 0; c < D; ++c)
        tr.queries0.at(i, c) += model.spatial_embeddings.value.at(
            static_cast<std::size_t>(qualifier_index), c);
  }

  // concatenated memory positions/validity for biased query attention
  num::Tensor<double> pos_cat({mem.total_tokens(), 3});
  std::vector<std::uint8_t> valid_cat;
  {
    std::size_t r = 0;
    for (int v = 0; v < mem.views; ++v) {
      const auto& p = mem.positions[v];
      std::copy(p.data(), p.data() + p.numel(), pos_cat.data() + r * 3);
      r += p.rows();
      valid_cat.insert(valid_cat.end(), mem.valid[v].begin(), mem.valid[v].end());
    }
  }
  num::Tensor<double> query_pos({Q, 3});
  std::vector<std::uint8_t> query_pos_valid(Q, 0);

  tr.layers.assign(cfg.num_layers, {});
  num::Tensor<T> x = tr.queries0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& lt = tr.layers[l];
    lt.x0 = x;
    x = attn_forward(model.layers[l].self_attn, x, (const num::Tensor<T>*)nullptr,
                     (const num::Tensor<T>*)nullptr, cfg.num_heads, lt.self_t);
    lt.x1 = x;
    x = attn_forward(model.layers[l].text_attn, x, &tr.text_mem, (const num::Tensor<T>*)nullptr,
                     cfg.num_heads, lt.text_t);
    lt.x2 = x;
    const num::Tensor<T>* cross_bias = nullptr;
    if (cfg.biased_query_attention && l > 0 &&
        std::any_of(query_pos_valid.begin(), query_pos_valid.end(),
                    [](std::uint8_t b) { return b != 0; })) {
      auto dist = detail::position_distances(query_pos, pos_cat);
      lt.cross_bias = make_bias(model, model.layers[l].beta.value[0], dist, query_pos_valid,
                                valid_cat, trace != nullptr);
      lt.cross_biased = true;
      cross_bias = &lt.cross_bias.bias;
    }
    x = attn_forward(model.layers[l].cross_attn, x, &tr.mem_cat, cross_bias, cfg.num_heads,
                     lt.cross_t);
    lt.x3 = x;
    if (cfg.biased_query_attention) {
      // queries adopt the position of their best-attended token (detached)
      const std::size_t m = tr.mem_cat.rows();
      for (std::size_t qi = 0; qi < Q; ++qi) {
        std::size_t best = 0;
        T best_w = T(-1);
        for (std::size_t j = 0; j < m; ++j) {
          T wsum = 0;
          for (const auto& w : lt.cross_t.weights) wsum += w.at(qi, j);
          if (wsum > best_w) {
            best_w = wsum;
            best = j;
          }
        }
        for (int c = 0; c < 3; ++c) query_pos.at(qi, c) = pos_cat.at(best, c);
        query_pos_valid[qi] = valid_cat[best];
      }
    }
    x = ffn_forward(model.layers[l].ffn, x, lt.ffn_t);
  }
  tr.pre_final = x;
  tr.qhat = num::layer_norm(x, model.final_ln_g.value, model.final_ln_b.value, &tr.final_ln);

  // heads
  Prediction<T> pred;
  tr.mask_q = num::linear(tr.qhat, model.mask_proj_w.value, model.mask_proj_b.value);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(D));
  tr.tok_logits.clear();
  tr.tok_probs.clear();
  pred.masks.assign(Q, {});
  for (int v = 0; v < mem.views; ++v) {
    auto logits = num::matmul(tr.mask_q, num::transpose(tr.refined[v]));
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] *= inv_sqrt_d;
    auto probs = num::elementwise(num::Unary::kSigmoid, logits);
    const auto W = static_cast<std::size_t>(mem.image_w[v]);
    const auto H = static_cast<std::size_t>(mem.image_h[v]);
    for (std::size_t qi = 0; qi < Q; ++qi) {
      num::Tensor<T> px({H, W});
      for (std::size_t j = 0; j < mem.blocks[v].size(); ++j) {
        const auto& b = mem.blocks[v][j];
        const T p = probs.at(qi, j);
        for (int yy = b[1]; yy < b[1] + b[3]; ++yy)
          for (int xx = b[0]; xx < b[0] + b[2]; ++xx)
            px.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) = p;
      }
      pred.masks[qi].push_back(std::move(px));
    }
    tr.tok_logits.push_back(std::move(logits));
    tr.tok_probs.push_back(std::move(probs));
  }

  tr.conf_logits = num::Tensor<T>({Q, 1});
  pred.confidences.assign(Q, T(0));
  for (std::size_t qi = 0; qi < Q; ++qi) {
    T acc = model.conf_b.value[0];
    for (std::size_t c = 0; c < D; ++c) acc += tr.qhat.at(qi, c) * model.conf_w.value[c];
    tr.conf_logits.at(qi, 0) = acc;
    pred.confidences[qi] = num::sigmoid_scalar(acc);
  }
  int best_q = 0;
  for (std::size_t qi = 1; qi < Q; ++qi)
    if (pred.confidences[qi] > pred.confidences[best_q]) best_q = static_cast<int>(qi);
  pred.best_query = best_q;
  tr.best_query = best_q;
  pred.presence = pred.confidences[best_q];

  // view with the highest mask mass for the selected query
  int best_v = 0;
  double best_mass = -1;
  for (int v = 0; v < mem.views; ++v) {
    double mass = 0;
    for (std::size_t i = 0; i < pred.masks[best_q][v].numel(); ++i)
      mass += static_cast<double>(pred.masks[best_q][v][i]);
    if (mass > best_mass) {
      best_mass = mass;
      best_v = v;
    }
  }
  pred.best_view = best_v;

  if (pointmaps) {
    auto res = geom::mask_weighted_centroid(pred.masks[best_q][best_v], (*pointmaps)[best_v]);
    pred.centroid = res.centroid;
    pred.mask_weight_sum = res.weight_sum;
  }

  // centroid head on the best query state (selection detached)
  tr.cent_in = num::Tensor<T>({1, D});
  for (std::size_t c = 0; c < D; ++c) tr.cent_in.at(0, c) = tr.qhat.at(best_q, c);
  tr.cent_h_pre = num::linear(tr.cent_in, model.cent_w1.value, model.cent_b1.value);
  tr.cent_h = num::elementwise(num::Unary::kGelu, tr.cent_h_pre);
  auto cent_out = num::linear(tr.cent_h, model.cent_w2.value, model.cent_b2.value);
  for (int c = 0; c < 3; ++c) pred.centroid_regressed[c] = cent_out.at(0, c);

  return pred;
}

template <typename T>
struct PredictionGrads {
  // pixel-space mask gradients, [Q][V] (empty tensors allowed)
  std::vector<std::vector<num::Tensor<T>>> gmask;
  std::vector<T> gconf;
  T gpresence{};
  std::array<T, 3> gcentroid_regressed{};
};

// Reverse pass of decode. Accumulates parameter gradients on the model and
// returns per-view gradients for the encoder memory features (for
// build_memory_backward).
template <typename T>
std::vector<num::Tensor<T>> decode_backward(GasaModel<T>& model, const EncoderMemory<T>& mem,
                                            const DecodeTrace<T>& tr,
                                            const PredictionGrads<T>& pg) {
  const auto& cfg = model.cfg;
  const auto Q = static_cast<std::size_t>(cfg.num_queries);
  const auto D = static_cast<std::size_t>(cfg.model_dim);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(D));

  num::Tensor<T> gqhat({Q, D});

  // centroid head
  {
    num::Tensor<T> gout({1, 3});
    for (int c = 0; c < 3; ++c) gout.at(0, c) = pg.gcentroid_regressed[c];
    num::Tensor<T> gh(tr.cent_h.shape());
    num::linear_backward(tr.cent_h, model.cent_w2.value, gout, gh, model.cent_w2.grad,
                         model.cent_b2.grad);
    num::Tensor<T> gh_pre(tr.cent_h_pre.shape());
    num::elementwise_backward(num::Unary::kGelu, tr.cent_h_pre, tr.cent_h, gh, gh_pre);
    num::Tensor<T> gcin(tr.cent_in.shape());
    num::linear_backward(tr.cent_in, model.cent_w1.value, gh_pre, gcin, model.cent_w1.grad,
                         model.cent_b1.grad);
    for (std::size_t c = 0; c < D; ++c)
      gqhat.at(static_cast<std::size_t>(tr.best_query), c) += gcin.at(0, c);
  }

  // confidence head (+ presence routed to the selected query)
  {
    for (std::size_t qi = 0; qi < Q; ++qi) {
      T g = qi < pg.gconf.size() ? pg.gconf[qi] : T(0);
      if (static_cast<int>(qi) == tr.best_query) g += pg.gpresence;
      if (g == T(0)) continue;
      const T c = num::sigmoid_scalar(tr.conf_logits.at(qi, 0));
      const T glogit = g * c * (T(1) - c);
      model.conf_b.grad[0] += glogit;
      for (std::size_t j = 0; j < D; ++j) {
        model.conf_w.grad[j] += glogit * tr.qhat.at(qi, j);
        gqhat.at(qi, j) += glogit * model.conf_w.value[j];
      }
    }
  }

  // mask head
  std::vector<num::Tensor<T>> grefined;
  for (int v = 0; v < mem.views; ++v) grefined.emplace_back(tr.refined[v].shape());
  num::Tensor<T> gmask_q(tr.mask_q.shape());
  for (int v = 0; v < mem.views; ++v) {
    const std::size_t ntok = tr.tok_probs[v].cols();
    num::Tensor<T> gtok({Q, ntok});
    bool any = false;
    for (std::size_t qi = 0; qi < Q; ++qi) {
      if (pg.gmask.empty() || pg.gmask[qi].empty() || pg.gmask[qi][v].numel() == 0) continue;
      const auto& gm = pg.gmask[qi][v];
      for (std::size_t j = 0; j < mem.blocks[v].size(); ++j) {
        const auto& b = mem.blocks[v][j];
        T acc = 0;
        for (int yy = b[1]; yy < b[1] + b[3]; ++yy)
          for (int xx = b[0]; xx < b[0] + b[2]; ++xx)
            acc += gm.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        if (acc != T(0)) any = true;
        gtok.at(qi, j) += acc;
      }
    }
    if (!any) continue;
    // sigmoid backward on token logits
    num::Tensor<T> glogits({Q, ntok});
    for (std::size_t i = 0; i < glogits.numel(); ++i) {
      const T p = tr.tok_probs[v][i];
      glogits[i] = gtok[i] * p * (T(1) - p) * inv_sqrt_d;
    }
    // logits = mask_q * refined^T
    auto refT = num::transpose(tr.refined[v]);
    num::Tensor<T> grefT(refT.shape());
    num::matmul_backward(tr.mask_q, refT, glogits, gmask_q, grefT);
    auto gref = num::transpose(grefT);
    for (std::size_t i = 0; i < gref.numel(); ++i) grefined[v][i] += gref[i];
  }
  {
    num::Tensor<T> gq_tmp(tr.qhat.shape());
    num::linear_backward(tr.qhat, model.mask_proj_w.value, gmask_q, gq_tmp,
                         model.mask_proj_w.grad, model.mask_proj_b.grad);
    for (std::size_t i = 0; i < gq_tmp.numel(); ++i) gqhat[i] += gq_tmp[i];
  }

  // final layer norm
  num::Tensor<T> gx(tr.pre_final.shape());
  num::layer_norm_backward(tr.final_ln, model.final_ln_g.value, gqhat, gx, model.final_ln_g.grad,
                           model.final_ln_b.grad);

  // decoder layers in reverse
  num::Tensor<T> gmem_cat(tr.mem_cat.shape());
  num::Tensor<T> gtext_mem(tr.text_mem.shape());
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& lt = tr.layers[l];
    auto& blk = model.layers[l];
    num::Tensor<T> gx3(lt.x3.shape());
    ffn_backward(blk.ffn, lt.x3, lt.ffn_t, gx, gx3);
    num::Tensor<T> gx2(lt.x2.shape());
    if (lt.cross_biased) {
      num::Tensor<T> gbias(lt.cross_bias.bias.shape());
      attn_backward(blk.cross_attn, lt.x2, &tr.mem_cat, lt.cross_t, gx3, cfg.num_heads, gx2,
                    &gmem_cat, &gbias);
      bias_backward(model, lt.cross_bias, blk.beta.value[0], gbias, blk.beta.grad[0]);
    } else {
      attn_backward(blk.cross_attn, lt.x2, &tr.mem_cat, lt.cross_t, gx3, cfg.num_heads, gx2,
                    &gmem_cat, static_cast<num::Tensor<T>*>(nullptr));
    }
    num::Tensor<T> gx1(lt.x1.shape());
    attn_backward(blk.text_attn, lt.x1, &tr.text_mem, lt.text_t, gx2, cfg.num_heads, gx1,
                  &gtext_mem, static_cast<num::Tensor<T>*>(nullptr));
    num::Tensor<T> gx0(lt.x0.shape());
    attn_backward(blk.self_attn, lt.x0, static_cast<const num::Tensor<T>*>(nullptr), lt.self_t,
                  gx1, cfg.num_heads, gx0, static_cast<num::Tensor<T>*>(nullptr),
                  static_cast<num::Tensor<T>*>(nullptr));
    gx = std::move(gx0);
  }

  // initial queries
  for (std::size_t i = 0; i < gx.numel(); ++i) model.query_embeddings.grad[i] += gx[i];
  if (cfg.spatial_tokens && tr.qualifier > 0) {
    for (std::size_t qi = 0; qi < Q; ++qi)
      for (std::size_t c = 0; c < D; ++c)
        model.spatial_embeddings.grad.at(static_cast<std::size_t>(tr.qualifier), c) +=
            gx.at(qi, c);
  }

  // text projection
  {
    num::Tensor<T> gtext_in(tr.text_in.shape());
    num::linear_backward(tr.text_in, model.text_proj_w.value, gtext_mem, gtext_in,
                         model.text_proj_w.grad, model.text_proj_b.grad);
  }

  // token round: memory-grad = cross-attn contribution + mask head
  {
    std::size_t r = 0;
    for (int v = 0; v < mem.views; ++v) {
      const std::size_t n = tr.refined[v].rows();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < D; ++c)
          grefined[v].at(i, c) += gmem_cat.at(r + i, c);
      r += n;
    }
  }
  std::vector<num::Tensor<T>> gmem_in;
  for (int v = 0; v < mem.views; ++v) {
    num::Tensor<T> gin(tr.mem_in[v].shape());
    num::Tensor<T> gbias(tr.token_bias[v].bias.shape());
    const bool biased = tr.token_bias[v].mode != KernelMode::kOff;
    attn_backward(model.token_attn, tr.mem_in[v], static_cast<const num::Tensor<T>*>(nullptr),
                  tr.token_t[v], grefined[v], cfg.num_heads, gin,
                  static_cast<num::Tensor<T>*>(nullptr), biased ? &gbias : nullptr);
    if (biased) {
      bias_backward(model, tr.token_bias[v], model.token_beta.value[0], gbias,
                    model.token_beta.grad[0]);
    }
    gmem_in.push_back(std::move(gin));
  }
  return gmem_in;
}

// ---------------------------------------------------------------------------
// attention-cost model

// Score/value FLOPs of the token attention stage. Per-view processing runs
// one n x n attention per view; concatenating all views' memories runs a
// single (V n) x (V n) attention, V times the work for the same tokens.
inline double token_attention_cost(int views, int tokens_per_view, int dim, bool concatenated) {
  const double n = tokens_per_view;
  const double v = views;
  const double d = dim;
  if (concatenated) return 2.0 * (v * n) * (v * n) * d;
  return v * 2.0 * n * n * d;
}

}  // namespace geoseg::gasa
