#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "geoseg/gasa/checkpoint.hpp"
#include "geoseg/gasa/decoder.hpp"
#include "geoseg/numerics/grad_check.hpp"

using namespace geoseg;
using gasa::GasaConfig;
using gasa::GasaModel;
using gasa::KernelMode;
using gasa::TokenGridView;
using num::Tensor;

namespace {

GasaConfig tiny_config() {
  GasaConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.num_queries = 3;
  cfg.feature_dim = 4;
  cfg.pe_hidden = 8;
  cfg.centroid_hidden = 8;
  cfg.kernel_hidden = 8;
  return cfg;
}

// two views of a 4x4 image with 2x2 token blocks
std::vector<TokenGridView> tiny_grids(std::uint64_t seed, int feature_dim = 4,
                                      bool with_invalid_token = false) {
  num::Rng rng(seed);
  std::vector<TokenGridView> grids;
  for (int v = 0; v < 2; ++v) {
    TokenGridView g;
    g.image_width = 4;
    g.image_height = 4;
    g.block = 2;
    g.features = Tensor<float>({4, static_cast<std::size_t>(feature_dim)});
    for (std::size_t i = 0; i < g.features.numel(); ++i)
      g.features[i] = static_cast<float>(rng.normal(0, 0.5));
    for (int t = 0; t < 4; ++t) {
      g.positions.push_back(
          {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 6)});
      // an invalid token exercises the bias floor; it also keeps the kernel
      // bias non-uniform per row, so no kernel parameter is a flat direction
      g.valid.push_back(with_invalid_token && v == 1 && t == 2 ? 0 : 1);
      const int gx = t % 2, gy = t / 2;
      g.blocks.push_back({gx * 2, gy * 2, 2, 2});
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

std::vector<geom::PointMap> tiny_pointmaps(std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<geom::PointMap> pms;
  for (int v = 0; v < 2; ++v) {
    geom::PointMap pm(4, 4);
    for (int i = 0; i < 16; ++i) {
      pm.points[i] = geom::Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 6)};
      pm.valid[i] = 1;
    }
    pms.push_back(std::move(pm));
  }
  return pms;
}

template <typename T>
Tensor<T> random_text(num::Rng& rng, int f) {
  Tensor<T> t({1, static_cast<std::size_t>(f)});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0, 0.5));
  return t;
}

template <typename T>
bool predictions_equal(const gasa::Prediction<T>& a, const gasa::Prediction<T>& b, T tol) {
  for (std::size_t q = 0; q < a.masks.size(); ++q)
    for (std::size_t v = 0; v < a.masks[q].size(); ++v)
      for (std::size_t i = 0; i < a.masks[q][v].numel(); ++i)
        if (std::abs(a.masks[q][v][i] - b.masks[q][v][i]) > tol) return false;
  for (std::size_t q = 0; q < a.confidences.size(); ++q)
    if (std::abs(a.confidences[q] - b.confidences[q]) > tol) return false;
  return std::abs(a.presence - b.presence) <= tol;
}

}  // namespace

TEST_CASE("decode produces valid probabilities and is deterministic") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 7);
  auto grids = tiny_grids(1);
  auto pms = tiny_pointmaps(2);
  num::Rng rng(3);
  auto text = random_text<double>(rng, cfg.feature_dim);

  auto mem = gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto p1 = gasa::decode(model, mem, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  auto p2 = gasa::decode(model, mem, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));

  REQUIRE(p1.masks.size() == 3);
  REQUIRE(p1.masks[0].size() == 2);
  for (const auto& per_query : p1.masks)
    for (const auto& m : per_query)
      for (std::size_t i = 0; i < m.numel(); ++i) {
        CHECK(m[i] >= 0.0);
        CHECK(m[i] <= 1.0);
      }
  for (double c : p1.confidences) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  CHECK(predictions_equal(p1, p2, 0.0));
}

TEST_CASE("reduction identity: beta frozen at zero equals kernel off") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 11);
  auto grids = tiny_grids(4);
  auto pms = tiny_pointmaps(5);
  num::Rng rng(6);
  auto text = random_text<double>(rng, cfg.feature_dim);

  auto beta_zero = model;
  beta_zero.token_beta.value[0] = 0.0;
  for (auto& l : beta_zero.layers) l.beta.value[0] = 0.0;

  auto off = model;
  off.cfg.kernel_mode = KernelMode::kOff;
  off.token_beta.value[0] = 0.0;
  for (auto& l : off.layers) l.beta.value[0] = 0.0;

  auto mem_a = gasa::build_memory(beta_zero, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto mem_b = gasa::build_memory(off, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto pa = gasa::decode(beta_zero, mem_a, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  auto pb = gasa::decode(off, mem_b, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  CHECK(predictions_equal(pa, pb, 1e-9));
}

TEST_CASE("reduction identity: phi == 0 equals standard attention") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 13);
  auto grids = tiny_grids(8);
  auto pms = tiny_pointmaps(9);
  num::Rng rng(10);
  auto text = random_text<double>(rng, cfg.feature_dim);

  auto zero_phi = model;
  zero_phi.kernel.w2.value.fill(0.0);
  zero_phi.kernel.b2.value[0] = 0.0;

  auto off = model;
  off.cfg.kernel_mode = KernelMode::kOff;

  auto mem_a = gasa::build_memory(zero_phi, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto mem_b = gasa::build_memory(off, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto pa = gasa::decode(zero_phi, mem_a, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  auto pb = gasa::decode(off, mem_b, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  CHECK(predictions_equal(pa, pb, 1e-9));
}

TEST_CASE("geometric veto: weight ratio obeys the softmax-bias identity") {
  // three tokens; keys 1 and 2 share identical features, at different
  // distances from token 0. World PE stays off so the twin keys coincide
  // exactly and the ratio is pure softmax algebra.
  auto cfg = tiny_config();
  cfg.world_pe = false;
  auto model = GasaModel<double>::init(cfg, 17);
  const double beta = 1.7;
  model.token_beta.value[0] = beta;

  TokenGridView g;
  g.image_width = 4;
  g.image_height = 2;
  g.block = 2;
  g.features = Tensor<float>({3, 4});
  num::Rng rng(18);
  for (int c = 0; c < 4; ++c) {
    g.features.at(0, c) = static_cast<float>(rng.normal());
    const float shared = static_cast<float>(rng.normal());
    g.features.at(1, c) = shared;
    g.features.at(2, c) = shared;
  }
  g.positions = {{0, 0, 2}, {0.3, 0, 2}, {5, 0, 2}};  // d(0,1)=0.3, d(0,2)=5
  g.valid = {1, 1, 1};
  g.blocks = {{0, 0, 2, 2}, {2, 0, 2, 2}, {0, 0, 0, 0}};

  auto mem = gasa::build_memory(model, {g}, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  gasa::DecodeTrace<double> tr;
  num::Rng rng2(19);
  auto text = random_text<double>(rng2, cfg.feature_dim);
  gasa::decode(model, mem, text, 0, static_cast<const std::vector<geom::PointMap>*>(nullptr), &tr);

  const double phi_near = model.kernel.eval(geom::distance({0, 0, 2}, {0.3, 0, 2}));
  const double phi_far = model.kernel.eval(geom::distance({0, 0, 2}, {5, 0, 2}));
  const double want_ratio = std::exp(beta * (phi_near - phi_far));
  for (const auto& w : tr.token_t[0].weights) {
    const double got_ratio = w.at(0, 1) / w.at(0, 2);
    CHECK(std::abs(got_ratio - want_ratio) < 1e-6 * want_ratio);
  }
}

TEST_CASE("single key: attention output ignores the bias") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 23);
  num::Rng rng(24);
  Tensor<double> x({2, 8});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
  Tensor<double> memory({1, 8});
  for (std::size_t i = 0; i < memory.numel(); ++i) memory[i] = rng.normal();

  gasa::AttnTrace<double> t1, t2;
  Tensor<double> bias1({2, 1});
  Tensor<double> bias2({2, 1}, {-7.0, -3.0});
  auto y1 = gasa::attn_forward(model.layers[0].cross_attn, x, &memory, &bias1, cfg.num_heads, t1);
  auto y2 = gasa::attn_forward(model.layers[0].cross_attn, x, &memory, &bias2, cfg.num_heads, t2);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
}

TEST_CASE("qualifier 0 vs zeroed spatial row produce identical predictions") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 29);
  for (std::size_t c = 0; c < 8; ++c) model.spatial_embeddings.value.at(1, c) = 0.0;
  auto grids = tiny_grids(30);
  auto pms = tiny_pointmaps(31);
  num::Rng rng(32);
  auto text = random_text<double>(rng, cfg.feature_dim);
  auto mem = gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto p0 = gasa::decode(model, mem, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  auto p1 = gasa::decode(model, mem, text, 1, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  CHECK(predictions_equal(p0, p1, 0.0));
}

TEST_CASE("prediction is invariant to token order within a view") {
  auto cfg = tiny_config();
  auto model = GasaModel<double>::init(cfg, 37);
  auto grids = tiny_grids(38);
  auto pms = tiny_pointmaps(39);
  num::Rng rng(40);
  auto text = random_text<double>(rng, cfg.feature_dim);

  auto permuted = grids;
  // swap tokens 0 and 3 of view 0 while carrying every per-token attribute
  auto& g = permuted[0];
  for (int c = 0; c < 4; ++c) std::swap(g.features.at(0, c), g.features.at(3, c));
  std::swap(g.positions[0], g.positions[3]);
  std::swap(g.valid[0], g.valid[3]);
  std::swap(g.blocks[0], g.blocks[3]);

  auto mem_a = gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto mem_b = gasa::build_memory(model, permuted, static_cast<gasa::MemoryTrace<double>*>(nullptr));
  auto pa = gasa::decode(model, mem_a, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  auto pb = gasa::decode(model, mem_b, text, 0, &pms, static_cast<gasa::DecodeTrace<double>*>(nullptr));
  CHECK(predictions_equal(pa, pb, 1e-12));
}

TEST_CASE("select_mask follows confidence with tie rules") {
  gasa::Prediction<double> p;
  p.confidences = {0.2, 0.9, 0.5};
  p.best_view = 1;
  CHECK(gasa::select_mask(p).first == 1);
  p.confidences = {0.4, 0.4, 0.4};
  CHECK(gasa::select_mask(p).first == 0);
  CHECK(gasa::select_mask_oracle({0.1, 0.3, 0.9}) == 2);
}

TEST_CASE("token attention cost: concatenated cross-view costs V times more") {
  const double per_view = gasa::token_attention_cost(4, 64, 64, false);
  const double concat = gasa::token_attention_cost(4, 64, 64, true);
  CHECK(concat / per_view == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("full decoder gradient check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = tiny_config();
    if (seed % 3 == 1) cfg.biased_query_attention = true;
    if (seed % 3 == 2) cfg.kernel_mode = KernelMode::kRbf;
    auto model = GasaModel<double>::init(cfg, 100 + seed);
    auto grids = tiny_grids(200 + seed, cfg.feature_dim, /*with_invalid_token=*/true);
    num::Rng rng(300 + seed);
    auto text = random_text<double>(rng, cfg.feature_dim);
    const int qual = static_cast<int>(seed % 3);

    // random linear scalarization over every decoder output
    std::vector<std::vector<Tensor<double>>> wmask;
    for (int q = 0; q < cfg.num_queries; ++q) {
      wmask.emplace_back();
      for (int v = 0; v < 2; ++v) {
        Tensor<double> w({4, 4});
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.001 * rng.normal();
        wmask.back().push_back(std::move(w));
      }
    }
    std::vector<double> wconf(cfg.num_queries);
    for (auto& w : wconf) w = 0.001 * rng.normal();
    std::array<double, 3> wcent{0.001 * rng.normal(), 0.001 * rng.normal(),
                                0.001 * rng.normal()};
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
    f.value = [&](const Tensor<double>& theta) {
      auto m = model;
      m.load_flat_values(theta);
      auto mem = gasa::build_memory(m, grids, static_cast<gasa::MemoryTrace<double>*>(nullptr));
      auto p = gasa::decode(m, mem, text, qual,
                            static_cast<const std::vector<geom::PointMap>*>(nullptr),
                            static_cast<gasa::DecodeTrace<double>*>(nullptr));
      return scalarize(p);
    };
    f.gradient = [&](const Tensor<double>& theta) {
      auto m = model;
      m.load_flat_values(theta);
      m.zero_grads();
      gasa::MemoryTrace<double> mt;
      auto mem = gasa::build_memory(m, grids, &mt);
      gasa::DecodeTrace<double> dt;
      auto p = gasa::decode(m, mem, text, qual,
                            static_cast<const std::vector<geom::PointMap>*>(nullptr), &dt);
      gasa::PredictionGrads<double> pg;
      pg.gmask = wmask;
      pg.gconf = wconf;
      pg.gpresence = wpres;
      pg.gcentroid_regressed = wcent;
      (void)p;
      auto gmem = gasa::decode_backward(m, mem, dt, pg);
      gasa::build_memory_backward(m, mem, mt, gmem);
      return m.flatten_grads();
    };

    // check at a well-conditioned point: the 0.02-scale init leaves deep
    // paths with gradients below the finite-difference noise floor. Kernel
    // parameters get only a small nudge so phi stays inside the clamp range
    // (a fully saturated kernel is exactly flat).
    std::vector<char> is_kernel;
    model.visit_params([&](const std::string& name, num::DualTensor<double>& p) {
      const bool k = name.rfind("kernel.", 0) == 0;
      for (std::size_t i = 0; i < p.value.numel(); ++i) is_kernel.push_back(k ? 1 : 0);
    });
    auto theta = model.flatten_values();
    for (std::size_t i = 0; i < theta.numel(); ++i)
      theta[i] += rng.uniform(-1.0, 1.0) * (is_kernel[i] ? 0.01 : 0.3);
    auto rep = num::grad_check(f, theta);
    INFO("seed ", seed, " worst index ", rep.worst_index, " analytic ", rep.analytic_at_worst,
         " numeric ", rep.numeric_at_worst);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is exact and corruption is detected") {
  auto cfg = tiny_config();
  auto model = GasaModel<float>::init(cfg, 55);
  const std::string path = "/tmp/geoseg_test_ckpt.bin";
  gasa::save_checkpoint(model, path);
  auto loaded = gasa::load_checkpoint<float>(path);

  bool equal = true;
  auto va = model.flatten_values();
  auto vb = loaded.flatten_values();
  for (std::size_t i = 0; i < va.numel(); ++i)
    if (va[i] != vb[i]) equal = false;
  CHECK(equal);

  // second save is byte-identical
  const std::string path2 = "/tmp/geoseg_test_ckpt2.bin";
  gasa::save_checkpoint(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // flip one payload byte
  b1[b1.size() / 2] = static_cast<char>(b1[b1.size() / 2] ^ 0x40);
  const std::string bad = "/tmp/geoseg_test_ckpt_bad.bin";
  std::ofstream out(bad, std::ios::binary);
  out.write(b1.data(), static_cast<std::streamsize>(b1.size()));
  out.close();
  CHECK_THROWS_WITH_AS(gasa::load_checkpoint<float>(bad), doctest::Contains("crc"),
                       CheckpointError);
}
