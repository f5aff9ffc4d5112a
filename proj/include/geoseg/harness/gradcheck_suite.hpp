#pragma once

#include <string>
#include <vector>

#include "geoseg/gasa/decoder.hpp"
#include "geoseg/losses/losses.hpp"
#include "geoseg/numerics/grad_check.hpp"

// The verification oracle behind the `gradcheck` command: every
// differentiable operation is checked against central differences in double
// precision across several seeds. Each entry reports the worst relative
// error observed for that operation.

namespace geoseg::harness {

struct OpCheck {
  std::string name;
  double max_rel_error = 0;
  bool pass(double tol = 1e-4) const { return max_rel_error < tol; }
};

struct GradCheckSuite {
  std::vector<OpCheck> ops;
  bool all_pass(double tol = 1e-4) const {
    for (const auto& o : ops)
      if (!o.pass(tol)) return false;
    return !ops.empty();
  }
};

namespace gradcheck_detail {

inline num::Tensor<double> randn(num::Rng& rng, std::vector<std::size_t> shape, double s = 1.0) {
  num::Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, s);
  return t;
}

inline gasa::GasaConfig tiny_config(std::uint64_t seed) {
  gasa::GasaConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.num_queries = 3;
  cfg.feature_dim = 4;
  cfg.pe_hidden = 8;
  cfg.centroid_hidden = 8;
  cfg.kernel_hidden = 8;
  if (seed % 3 == 1) cfg.biased_query_attention = true;
  if (seed % 3 == 2) cfg.kernel_mode = gasa::KernelMode::kRbf;
  return cfg;
}

inline std::vector<gasa::TokenGridView> tiny_grids(std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<gasa::TokenGridView> grids;
  for (int v = 0; v < 2; ++v) {
    gasa::TokenGridView g;
    g.image_width = 4;
    g.image_height = 4;
    g.block = 2;
    g.features = num::Tensor<float>({4, 4});
    for (std::size_t i = 0; i < g.features.numel(); ++i)
      g.features[i] = static_cast<float>(rng.normal(0, 0.5));
    for (int t = 0; t < 4; ++t) {
      g.positions.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 6)});
      // one invalid token keeps the kernel bias non-uniform per softmax row,
      // so no kernel parameter is an exactly flat direction
      g.valid.push_back(v == 1 && t == 2 ? 0 : 1);
      g.blocks.push_back({(t % 2) * 2, (t / 2) * 2, 2, 2});
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

inline double check_attention_with_bias(std::uint64_t seed) {
  // scalar loss through one geometry-biased attention block, checking the
  // block weights, the kernel parameters and beta jointly
  auto cfg = tiny_config(0);
  auto model = gasa::GasaModel<double>::init(cfg, 400 + seed);
  num::Rng rng(500 + seed);
  const std::size_t n = 5;
  auto x = randn(rng, {n, 8}, 0.6);
  num::Tensor<double> pos({n, 3});
  for (std::size_t i = 0; i < pos.numel(); ++i) pos[i] = rng.uniform(-2, 4);
  std::vector<std::uint8_t> valid(n, 1);
  valid[3] = 0;
  auto weights = randn(rng, {n, 8}, 0.001);

  // theta: attention block + kernel + beta
  auto flatten = [&](gasa::GasaModel<double>& m) {
    std::vector<double> out;
    m.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
      if (name.rfind("token_attn", 0) == 0 || name.rfind("kernel.", 0) == 0)
        for (std::size_t i = 0; i < p.value.numel(); ++i) out.push_back(p.value[i]);
    });
    const std::size_t sz = out.size();
    return num::Tensor<double>({sz}, std::move(out));
  };
  auto load = [&](gasa::GasaModel<double>& m, const num::Tensor<double>& t) {
    std::size_t k = 0;
    m.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
      if (name.rfind("token_attn", 0) == 0 || name.rfind("kernel.", 0) == 0)
        for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] = t[k++];
    });
  };
  auto run = [&](gasa::GasaModel<double>& m, bool backward) {
    auto dist = geom::pairwise_distances(pos, pos);
    auto bias = gasa::make_bias(m, m.token_beta.value[0], dist, valid, valid, backward);
    gasa::AttnTrace<double> tr;
    auto y = gasa::attn_forward(m.token_attn, x, static_cast<const num::Tensor<double>*>(nullptr),
                                &bias.bias, m.cfg.num_heads, tr);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += weights[i] * y[i];
    if (backward) {
      num::Tensor<double> gx(x.shape()), gbias(bias.bias.shape());
      gasa::attn_backward(m.token_attn, x, static_cast<const num::Tensor<double>*>(nullptr), tr,
                          weights, m.cfg.num_heads, gx,
                          static_cast<num::Tensor<double>*>(nullptr), &gbias);
      gasa::bias_backward(m, bias, m.token_beta.value[0], gbias, m.token_beta.grad[0]);
    }
    return s;
  };

  num::Differentiable f;
  f.value = [&](const num::Tensor<double>& t) {
    auto m = model;
    load(m, t);
    return run(m, false);
  };
  f.gradient = [&](const num::Tensor<double>& t) {
    auto m = model;
    load(m, t);
    m.zero_grads();
    run(m, true);
    std::vector<double> out;
    m.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
      if (name.rfind("token_attn", 0) == 0 || name.rfind("kernel.", 0) == 0)
        for (std::size_t i = 0; i < p.grad.numel(); ++i) out.push_back(p.grad[i]);
    });
    const std::size_t sz = out.size();
    return num::Tensor<double>({sz}, std::move(out));
  };
  auto theta = flatten(model);
  std::size_t k = 0;
  std::vector<char> is_kernel;
  model.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
    if (name.rfind("token_attn", 0) == 0 || name.rfind("kernel.", 0) == 0)
      for (std::size_t i = 0; i < p.value.numel(); ++i)
        is_kernel.push_back(name.rfind("kernel.", 0) == 0 ? 1 : 0);
  });
  (void)k;
  for (std::size_t i = 0; i < theta.numel(); ++i)
    theta[i] += rng.uniform(-1.0, 1.0) * (is_kernel[i] ? 0.01 : 0.3);
  return num::grad_check(f, theta).max_rel_error;
}

inline double check_full_decoder(std::uint64_t seed) {
  auto cfg = tiny_config(seed);
  auto model = gasa::GasaModel<double>::init(cfg, 100 + seed);
  auto grids = tiny_grids(200 + seed);
  num::Rng rng(300 + seed);
  num::Tensor<double> text({1, 4});
  for (std::size_t i = 0; i < 4; ++i) text[i] = rng.normal(0, 0.5);
  const int qual = static_cast<int>(seed % 3);

  std::vector<std::vector<num::Tensor<double>>> wmask;
  for (int q = 0; q < cfg.num_queries; ++q) {
    wmask.emplace_back();
    for (int v = 0; v < 2; ++v) wmask.back().push_back(randn(rng, {4, 4}, 0.001));
  }
  std::vector<double> wconf(cfg.num_queries);
  for (auto& w : wconf) w = 0.001 * rng.normal();
  std::array<double, 3> wcent{0.001 * rng.normal(), 0.001 * rng.normal(), 0.001 * rng.normal()};
  const double wpres = 0.001 * rng.normal();

  auto scalarize = [&](const gasa::Prediction<double>& p) {
    double s = 0;
    for (int q = 0; q < cfg.num_queries; ++q)
      for (int v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < p.masks[q][v].numel(); ++i)
          s += wmask[q][v][i] * p.masks[q][v][i];
    for (int q = 0; q < cfg.num_queries; ++q) s += wconf[q] * p.confidences[q];
    s += wpres * p.presence;
    for (int c = 0; c < 3; ++c) s += wcent[c] * p.centroid_regressed[c];
    return s;
  };

  num::Differentiable f;
  f.value = [&](const num::Tensor<double>& theta) {
    auto m = model;
    m.load_flat_values(theta);
    auto mem = gasa::build_memory(m, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
    auto p = gasa::decode(m, mem, text, qual,
                          static_cast<const std::vector<geom::PointMap>*>(nullptr),
                          static_cast<gasa::DecodeTrace<double>*>(nullptr));
    return scalarize(p);
  };
  f.gradient = [&](const num::Tensor<double>& theta) {
    auto m = model;
    m.load_flat_values(theta);
    m.zero_grads();
    gasa::MemoryTrace<double> mt;
    auto mem = gasa::build_memory(m, grids, &mt);
    gasa::DecodeTrace<double> dt;
    gasa::decode(m, mem, text, qual, static_cast<const std::vector<geom::PointMap>*>(nullptr),
                 &dt);
    gasa::PredictionGrads<double> pg;
    pg.gmask = wmask;
    pg.gconf = wconf;
    pg.gpresence = wpres;
    pg.gcentroid_regressed = wcent;
    auto gmem = gasa::decode_backward(m, mem, dt, pg);
    gasa::build_memory_backward(m, mem, mt, gmem);
    return m.flatten_grads();
  };

  std::vector<char> is_kernel;
  model.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
    const bool k = name.rfind("kernel.", 0) == 0;
    for (std::size_t i = 0; i < p.value.numel(); ++i) is_kernel.push_back(k ? 1 : 0);
  });
  auto theta = model.flatten_values();
  for (std::size_t i = 0; i < theta.numel(); ++i)
    theta[i] += rng.uniform(-1.0, 1.0) * (is_kernel[i] ? 0.01 : 0.3);
  return num::grad_check(f, theta).max_rel_error;
}

}  // namespace gradcheck_detail

inline GradCheckSuite run_gradcheck_suite(int seeds = 10) {
  using namespace gradcheck_detail;
  GradCheckSuite suite;
  auto record = [&](const std::string& name, double err) {
    for (auto& o : suite.ops)
      if (o.name == name) {
        o.max_rel_error = std::max(o.max_rel_error, err);
        return;
      }
    suite.ops.push_back({name, err});
  };

  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
    num::Rng rng(900 + seed);

    // core tensor ops
    {
      const std::size_t mdim = 3, kdim = 4, ndim = 2;
      auto a = randn(rng, {mdim, kdim});
      auto b = randn(rng, {kdim, ndim});
      auto w = randn(rng, {mdim, ndim});
      num::Differentiable f;
      f.value = [&](const num::Tensor<double>& t) {
        num::Tensor<double> at({mdim, kdim}, std::vector<double>(t.data(), t.data() + mdim * kdim));
        auto y = num::matmul(at, b);
        double s = 0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
        return s;
      };
      f.gradient = [&](const num::Tensor<double>& t) {
        num::Tensor<double> at({mdim, kdim}, std::vector<double>(t.data(), t.data() + mdim * kdim));
        num::Tensor<double> ga({mdim, kdim}), gb({kdim, ndim});
        num::matmul_backward(at, b, w, ga, gb);
        const std::size_t sz = ga.numel();
        return num::Tensor<double>({sz}, std::vector<double>(ga.data(), ga.data() + sz));
      };
      num::Tensor<double> theta({mdim * kdim},
                                std::vector<double>(a.data(), a.data() + a.numel()));
      record("matmul", num::grad_check(f, theta).max_rel_error);
    }
    {
      auto bias = randn(rng, {1, 5});
      auto w = randn(rng, {1, 5});
      num::Differentiable f;
      f.value = [&](const num::Tensor<double>& t) {
        auto y = num::softmax_with_bias(t, bias);
        double s = 0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
        return s;
      };
      f.gradient = [&](const num::Tensor<double>& t) {
        auto y = num::softmax_with_bias(t, bias);
        num::Tensor<double> gl(t.shape()), gb(bias.shape());
        num::softmax_with_bias_backward(y, w, gl, gb);
        return gl;
      };
      record("softmax_with_bias", num::grad_check(f, randn(rng, {1, 5})).max_rel_error);
    }
    for (auto [op, name] : {std::pair{num::Unary::kGelu, "gelu"},
                            std::pair{num::Unary::kSigmoid, "sigmoid"},
                            std::pair{num::Unary::kExp, "exp"}}) {
      auto w = randn(rng, {6});
      num::Differentiable f;
      f.value = [&, op](const num::Tensor<double>& t) {
        auto y = num::elementwise(op, t);
        double s = 0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
        return s;
      };
      f.gradient = [&, op](const num::Tensor<double>& t) {
        auto y = num::elementwise(op, t);
        num::Tensor<double> g(t.shape());
        num::elementwise_backward(op, t, y, w, g);
        return g;
      };
      record(name, num::grad_check(f, randn(rng, {6})).max_rel_error);
    }
    {
      const std::size_t rows = 3, d = 5;
      auto gamma = randn(rng, {d});
      auto beta = randn(rng, {d});
      auto w = randn(rng, {rows, d});
      num::Differentiable f;
      f.value = [&](const num::Tensor<double>& t) {
        num::LayerNormTrace<double> tr;
        auto y = num::layer_norm(t, gamma, beta, &tr);
        double s = 0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
        return s;
      };
      f.gradient = [&](const num::Tensor<double>& t) {
        num::LayerNormTrace<double> tr;
        num::layer_norm(t, gamma, beta, &tr);
        num::Tensor<double> gx(t.shape()), gg(gamma.shape()), gb(beta.shape());
        num::layer_norm_backward(tr, gamma, w, gx, gg, gb);
        return gx;
      };
      record("layer_norm", num::grad_check(f, randn(rng, {rows, d})).max_rel_error);
    }

    // the six loss terms
    {
      const std::size_t n = 8;
      num::Tensor<double> target({n});
      for (std::size_t i = 0; i < n; ++i) target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      num::Tensor<double> probs({n});
      for (std::size_t i = 0; i < n; ++i) probs[i] = rng.uniform(0.1, 0.9);

      num::Differentiable focal;
      focal.value = [&](const num::Tensor<double>& t) {
        return loss::focal_loss(t, target, 0.75, 2.0);
      };
      focal.gradient = [&](const num::Tensor<double>& t) {
        num::Tensor<double> g(t.shape());
        loss::focal_loss_backward(t, target, 0.75, 2.0, 1.0, g);
        return g;
      };
      record("loss_focal", num::grad_check(focal, probs).max_rel_error);

      num::Differentiable dice;
      dice.value = [&](const num::Tensor<double>& t) { return loss::dice_loss(t, target, 1.0); };
      dice.gradient = [&](const num::Tensor<double>& t) {
        num::Tensor<double> g(t.shape());
        loss::dice_loss_backward(t, target, 1.0, 1.0, g);
        return g;
      };
      record("loss_dice", num::grad_check(dice, probs).max_rel_error);

      num::Tensor<double> iou({n});
      for (std::size_t i = 0; i < n; ++i) iou[i] = rng.uniform(0.0, 1.0);
      auto ranks = loss::iou_ranks(iou);
      auto tc = loss::align_soft_targets(probs, iou, ranks, 0.5, 2.0);
      num::Differentiable align;
      align.value = [&](const num::Tensor<double>& t) {
        return loss::align_loss_with_targets(t, tc, 2.0);
      };
      align.gradient = [&](const num::Tensor<double>& t) {
        num::Tensor<double> g(t.shape());
        loss::align_loss_backward(t, tc, 2.0, 1.0, g);
        return g;
      };
      record("loss_align", num::grad_check(align, probs).max_rel_error);

      num::Differentiable contrast;
      contrast.value = [&](const num::Tensor<double>& t) {
        return loss::contrastive_rank_loss(t, iou, 0.5);
      };
      contrast.gradient = [&](const num::Tensor<double>& t) {
        num::Tensor<double> g(t.shape());
        loss::contrastive_rank_loss_backward(t, iou, 0.5, 1.0, g);
        return g;
      };
      // hinge kinks violate the smoothness precondition; nudge away
      auto scores = probs;
      bool moved = true;
      while (moved) {
        moved = false;
        for (std::size_t i = 0; i < n && !moved; ++i)
          for (std::size_t j = 0; j < n && !moved; ++j)
            if (iou[i] > iou[j] && std::abs(0.5 - (scores[i] - scores[j])) < 1e-3) {
              for (std::size_t q = 0; q < n; ++q) scores[q] = rng.uniform(0.1, 0.9);
              moved = true;
            }
      }
      // larger step: the hinge is piecewise linear (no truncation error)
      // and exactly-cancelling pair gradients need the lower noise floor
      record("loss_contrastive", num::grad_check(contrast, scores, 1e-4).max_rel_error);

      std::array<double, 3> gt{rng.normal(), rng.normal(), rng.normal()};
      num::Differentiable loc;
      loc.value = [&](const num::Tensor<double>& t) {
        std::array<double, 3> c{t[0], t[1], t[2]};
        return loss::localization_loss(c, gt, 0.5, 1).centroid;
      };
      loc.gradient = [&](const num::Tensor<double>& t) {
        std::array<double, 3> c{t[0], t[1], t[2]};
        std::array<double, 3> gc{};
        double gp = 0;
        loss::localization_loss_backward(c, gt, 0.5, 1, 1.0, 0.0, gc, gp);
        return num::Tensor<double>({3}, {gc[0], gc[1], gc[2]});
      };
      record("loss_centroid", num::grad_check(loc, randn(rng, {3}, 2.0)).max_rel_error);

      num::Differentiable pres;
      pres.value = [&](const num::Tensor<double>& t) {
        return loss::localization_loss(gt, gt, loss::clamp_prob(t[0]),
                                       seed % 2 ? 1 : 0).presence;
      };
      pres.gradient = [&](const num::Tensor<double>& t) {
        std::array<double, 3> gc{};
        double gp = 0;
        loss::localization_loss_backward(gt, gt, t[0], seed % 2 ? 1 : 0, 0.0, 1.0, gc, gp);
        return num::Tensor<double>({1}, {gp});
      };
      record("loss_presence",
             num::grad_check(pres, num::Tensor<double>({1}, {rng.uniform(0.1, 0.9)}))
                 .max_rel_error);
    }

    record("attention_with_bias", check_attention_with_bias(seed));
    record("full_decoder", check_full_decoder(seed));
  }
  return suite;
}

}  // namespace geoseg::harness
