// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. The ablation fixture trains fifteen models and is shared by the
// criteria that need trained weights.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "geoseg/gasa/checkpoint.hpp"
#include "geoseg/harness/ablation.hpp"
#include "geoseg/harness/gradcheck_suite.hpp"
#include "geoseg/harness/train.hpp"
#include "geoseg/spatial/augment.hpp"

using namespace geoseg;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
  int index;
  const char* label;
  bool ok = true;
  Clock::time_point t0 = Clock::now();

  void expect(bool cond, const char* what) {
    if (!cond) {
      ok = false;
      std::printf("  criterion %d violated: %s\n", index, what);
    }
    CHECK_MESSAGE(cond, what);
  }
  ~Criterion() {
    std::printf("[%s] criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", index, label,
                seconds_since(t0));
    std::fflush(stdout);
  }
};

// ---------------------------------------------------------------------------
// shared training fixture (criteria 3, 6, 7)

harness::TrainConfig ablation_config() {
  harness::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 2;
  cfg.learning_rate = 1.5e-3;
  cfg.seed = 100;
  cfg.threads = 2;
  cfg.token_block = 2;
  cfg.eval_every = 0;
  return cfg;
}

struct TrainedFixture {
  scenegen::Dataset dataset;
  harness::AblationTable table;
  gasa::GasaModel<float> full_model;          // full variant, first seed
  std::vector<int> holdout_scenes;
  double train_seconds = 0;
};

const TrainedFixture& trained_fixture() {
  static const TrainedFixture fixture = [] {
    TrainedFixture f;
    const auto t0 = Clock::now();
    f.dataset = scenegen::make_dataset({50, 424242, 0.5, scenegen::NoiseSpec{}, 32});
    auto cfg = ablation_config();
    f.table = harness::run_ablation_suite(f.dataset, cfg, 3);
    // keep the full model of the first seed for the gap and veto criteria
    auto model = gasa::GasaModel<float>::init(cfg.model_config(f.dataset.feature_dim), cfg.seed);
    auto result = harness::train(std::move(model), f.dataset, cfg);
    f.full_model = std::move(result.model);
    f.holdout_scenes = result.holdout_scenes;
    f.train_seconds = seconds_since(t0);
    std::printf("-- ablation fixture: %.1f s total\n%s", f.train_seconds,
                f.table.table().c_str());
    std::fflush(stdout);
    return f;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("criterion 1: gradient oracle") {
  Criterion c{1, "gradient oracle < 1e-4 over 10 seeds, < 60 s"};
  const auto t0 = Clock::now();
  auto suite = harness::run_gradcheck_suite(10);
  for (const auto& op : suite.ops) {
    std::printf("  %-22s max rel error %.3e\n", op.name.c_str(), op.max_rel_error);
    c.expect(op.max_rel_error < 1e-4, op.name.c_str());
  }
  c.expect(suite.all_pass(), "all operations pass");
  c.expect(seconds_since(t0) < 60.0, "runtime under 60 s");
}

TEST_CASE("criterion 2: reduction identity") {
  Criterion c{2, "beta = 0 (and phi == 0) decoder equals standard attention within 1e-9"};
  auto classes = scenegen::ClassTable::standard(32, 7);
  auto sample = scenegen::make_twin_scene(3.0, 7, classes, scenegen::NoiseSpec{});
  auto grids = scenegen::tokenize_sample(sample, 4);
  std::vector<geom::PointMap> pms;
  for (const auto& v : sample.views) pms.push_back(scenegen::view_pointmap(v));
  num::Tensor<float> text({1, 32});
  for (int i = 0; i < 32; ++i) text[i] = classes.classes[1].embedding[i];

  gasa::GasaConfig cfg;  // toy defaults: D=64, 4 heads, 6 layers
  auto base = gasa::GasaModel<float>::init(cfg, 11);

  auto beta_zero = base;
  beta_zero.token_beta.value[0] = 0.0f;
  for (auto& l : beta_zero.layers) l.beta.value[0] = 0.0f;

  auto phi_zero = base;
  phi_zero.kernel.w2.value.fill(0.0f);
  phi_zero.kernel.b2.value[0] = 0.0f;

  auto off = base;
  off.cfg.kernel_mode = gasa::KernelMode::kOff;
  off.token_beta.value[0] = 0.0f;
  for (auto& l : off.layers) l.beta.value[0] = 0.0f;

  auto run = [&](gasa::GasaModel<float>& m) {
    auto mem = gasa::build_memory(m, grids, static_cast<gasa::MemoryTrace<float>*>(nullptr));
    return gasa::decode(m, mem, text, 0, &pms, static_cast<gasa::DecodeTrace<float>*>(nullptr));
  };
  auto pa = run(beta_zero);
  auto pb = run(off);
  auto pc = run(phi_zero);

  double worst = 0;
  for (std::size_t q = 0; q < pa.masks.size(); ++q)
    for (std::size_t v = 0; v < pa.masks[q].size(); ++v)
      for (std::size_t i = 0; i < pa.masks[q][v].numel(); ++i) {
        worst = std::max(worst, std::abs(double(pa.masks[q][v][i]) - pb.masks[q][v][i]));
        worst = std::max(worst, std::abs(double(pc.masks[q][v][i]) - pb.masks[q][v][i]));
      }
  for (std::size_t q = 0; q < pa.confidences.size(); ++q) {
    worst = std::max(worst, std::abs(double(pa.confidences[q]) - pb.confidences[q]));
    worst = std::max(worst, std::abs(double(pc.confidences[q]) - pb.confidences[q]));
  }
  std::printf("  max |delta| = %.3g\n", worst);
  c.expect(worst < 1e-9, "elementwise difference below 1e-9");
}

TEST_CASE("criterion 3: geometric veto") {
  Criterion c{3, "softmax-bias weight ratio exact; trained far-twin attention mass < 0.05"};

  // (a) algebraic identity with identical features (world PE off so the twin
  // keys coincide exactly)
  {
    gasa::GasaConfig cfg;
    cfg.world_pe = false;
    auto model = gasa::GasaModel<double>::init(cfg, 17);
    const double beta = 1.6;
    model.token_beta.value[0] = beta;

    gasa::TokenGridView g;
    g.image_width = 8;
    g.image_height = 4;
    g.block = 4;
    g.features = num::Tensor<float>({3, 32});
    num::Rng rng(18);
    for (int f = 0; f < 32; ++f) {
      g.features.at(0, f) = static_cast<float>(rng.normal());
      const float shared = static_cast<float>(rng.normal());
      g.features.at(1, f) = shared;
      g.features.at(2, f) = shared;
    }
    g.positions = {{0, 0, 2}, {0.4, 0, 2}, {3.0, 0, 2}};
    g.valid = {1, 1, 1};
    g.blocks = {{0, 0, 4, 4}, {4, 0, 4, 4}, {0, 0, 0, 0}};

    auto mem = gasa::build_memory(model, {g}, static_cast<gasa::MemoryTrace<double>*>(nullptr));
    gasa::DecodeTrace<double> tr;
    num::Tensor<double> text({1, 32});
    gasa::decode(model, mem, text, 0, static_cast<const std::vector<geom::PointMap>*>(nullptr),
                 &tr);
    const double phi_near = model.kernel.eval(0.4);
    const double phi_far = model.kernel.eval(3.0);
    const double want = std::exp(beta * (phi_near - phi_far));
    for (const auto& w : tr.token_t[0].weights) {
      const double got = w.at(0, 1) / w.at(0, 2);
      c.expect(std::abs(got - want) < 1e-6 * want, "weight ratio equals exp(beta dphi)");
    }
  }

  // (b) trained model: aggregate attention mass on the far twin
  {
    const auto& fx = trained_fixture();
    auto model = fx.full_model;
    auto classes = fx.dataset.classes;
    // noiseless, identical-feature twin fixture at 3 m
    auto sample = scenegen::make_twin_scene(3.0, 5, classes, scenegen::NoiseSpec{0.0, 0.0});
    auto grids = scenegen::tokenize_sample(sample, 2);
    auto mem = gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<float>*>(nullptr));
    num::Tensor<float> text({1, 32});
    for (int i = 0; i < 32; ++i) text[i] = classes.classes[1].embedding[i];
    gasa::DecodeTrace<float> tr;
    gasa::decode(model, mem, text, 1, static_cast<const std::vector<geom::PointMap>*>(nullptr),
                 &tr);

    // token sets of each twin in view 0, via GT instance ids at block centers
    const auto& view = sample.views[0];
    std::vector<int> near_tokens, far_tokens;
    for (std::size_t t = 0; t < grids[0].count(); ++t) {
      const auto& b = grids[0].blocks[t];
      const int cu = std::min(b[0] + grids[0].block / 2, view.width - 1);
      const int cv = std::min(b[1] + grids[0].block / 2, view.height - 1);
      const auto inst = view.instance_ids[view.pixel_index(cu, cv)];
      if (inst == 1) near_tokens.push_back(static_cast<int>(t));
      if (inst == 2) far_tokens.push_back(static_cast<int>(t));
    }
    c.expect(near_tokens.size() >= 2, "near twin visible in tokens");
    c.expect(far_tokens.size() >= 1, "far twin visible in tokens");

    double mass = 0;
    std::size_t samples = 0;
    for (int qt : near_tokens) {
      for (const auto& w : tr.token_t[0].weights) {
        double m = 0;
        for (int kt : far_tokens) m += w.at(qt, kt);
        mass += m;
        ++samples;
      }
    }
    mass /= static_cast<double>(samples);
    std::printf("  trained far-twin attention mass %.4f (beta %.3f)\n", mass,
                double(model.token_beta.value[0]));
    c.expect(mass < 0.05, "far twin aggregate attention mass < 0.05");
  }
}

TEST_CASE("criterion 4: kernel init contract") {
  Criterion c{4, "kernel init tracks -log(1+d) within 0.05; clamp floor exact"};
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    auto k = gasa::kernel_init(seed);
    double worst = 0;
    for (double d = 0.0; d <= 20.0 + 1e-9; d += 0.05)
      worst = std::max(worst, std::abs(k.eval(d) + std::log(1.0 + d)));
    std::printf("  seed %llu: max |phi(d) + log(1+d)| = %.4f\n",
                static_cast<unsigned long long>(seed), worst);
    c.expect(worst < 0.05, "fit within 0.05 on [0, 20]");
    c.expect(k.eval(1e6) == -10.0, "clamp floor exactly -10");
    c.expect(k.eval(0.0) <= 0.0, "phi(0) clamped at 0");
  }
}

TEST_CASE("criterion 5: unprojection and world-PE invariants") {
  Criterion c{5, "project(unproject) < 1e-6 px on 1e4 pixels; PE bitwise view-invariant on 1e3 points"};
  const auto t0 = Clock::now();

  const geom::Mat3 r = geom::Mat3::from_euler(0.21, -0.12, 0.05);
  geom::Camera cam_a(480, 505, 321.5, 239.0, r, {0.4, -0.2, 1.0});
  geom::Camera cam_b(64, 64, 16, 16, geom::Mat3::from_euler(-0.3, 0.08, 0.0), {-1.0, 0.5, -2.0});

  num::Rng rng(5);
  double worst_px = 0, worst_depth = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(0, 640), v = rng.uniform(0, 480), d = rng.uniform(0.3, 15.0);
    const auto p = cam_a.unproject_pixel(u, v, d);
    const auto uvd = cam_a.project_point(p);
    worst_px = std::max({worst_px, std::abs(uvd[0] - u), std::abs(uvd[1] - v)});
    worst_depth = std::max(worst_depth, std::abs(uvd[2] - d));
  }
  std::printf("  round trip: max %.3g px, %.3g m depth\n", worst_px, worst_depth);
  c.expect(worst_px < 1e-6, "round trip under 1e-6 px");
  c.expect(worst_depth < 1e-9, "round trip depth under 1e-9 m");

  // 1000 shared world points, fed through two different views' token
  // pipelines: the embedding path has no camera-dependent input, so the
  // memory rows must match bitwise
  gasa::GasaConfig cfg;
  auto model = gasa::GasaModel<float>::init(cfg, 3);
  const int n = 1000;
  gasa::TokenGridView ga, gb;
  ga.image_width = gb.image_width = 4;
  ga.image_height = gb.image_height = 4;
  ga.block = gb.block = 4;
  ga.features = num::Tensor<float>({static_cast<std::size_t>(n), 32});
  for (std::size_t i = 0; i < ga.features.numel(); ++i)
    ga.features[i] = static_cast<float>(rng.normal());
  gb.features = ga.features;
  for (int i = 0; i < n; ++i) {
    const geom::Vec3 p{rng.uniform(-6, 6), rng.uniform(-4, 4), rng.uniform(0.5, 15)};
    ga.positions.push_back(p);
    gb.positions.push_back(p);
    ga.valid.push_back(1);
    gb.valid.push_back(1);
    ga.blocks.push_back({0, 0, 0, 0});
    gb.blocks.push_back({0, 0, 0, 0});
  }
  (void)cam_a;
  (void)cam_b;
  auto mem = gasa::build_memory(model, {ga, gb}, static_cast<gasa::MemoryTrace<float>*>(nullptr));
  bool bitwise = true;
  for (std::size_t i = 0; i < mem.feat[0].numel(); ++i)
    if (mem.feat[0][i] != mem.feat[1][i]) bitwise = false;
  c.expect(bitwise, "world-PE embeddings bitwise identical across views");
  c.expect(seconds_since(t0) < 10.0, "runtime under 10 s");
}

TEST_CASE("criterion 6: directional ablation reproduction") {
  Criterion c{6, "full beats -kernel/-pe/-both (both worst); learned beats rbf; < 15 min"};
  const auto& fx = trained_fixture();
  c.expect(fx.train_seconds < 900.0, "ablation fixture under 15 minutes");
  REQUIRE(fx.table.rows.size() == 5);
  const auto& rows = fx.table.rows;
  const double full = rows[0].miou;
  const double no_kernel = rows[1].miou;
  const double no_pe = rows[2].miou;
  const double no_both = rows[3].miou;
  const double rbf = rows[4].miou;
  c.expect(full > no_kernel, "full > kernel-off");
  c.expect(full > no_pe, "full > world-PE-off");
  c.expect(full > no_both, "full > both-off");
  c.expect(no_both <= no_kernel && no_both <= no_pe, "both-off is the worst single ablation");
  c.expect(full > rbf, "learned kernel beats the RBF kernel");
}

TEST_CASE("criterion 7: oracle-gap property") {
  Criterion c{7, "oracle >= predicted everywhere; trained gap < 5 points"};
  const auto& fx = trained_fixture();
  harness::EvalProtocol proto;
  proto.token_block = ablation_config().token_block;
  auto rep = harness::evaluate(fx.full_model, fx.dataset, proto, &fx.holdout_scenes, 2);
  std::printf("  holdout: %s\n", rep.table().c_str());
  for (const auto& row : rep.rows)
    c.expect(row.oracle_iou >= row.iou - 1e-12, "oracle dominates per object");
  c.expect(rep.oracle_miou >= rep.miou, "oracle mIoU >= predicted mIoU");
  c.expect(rep.gap < 0.05, "oracle-predicted gap under 5 points");

  // untrained model: dominance still holds
  auto cfg = ablation_config();
  auto fresh = gasa::GasaModel<float>::init(cfg.model_config(fx.dataset.feature_dim), 9);
  auto rep2 = harness::evaluate(fresh, fx.dataset, proto, &fx.holdout_scenes, 2);
  c.expect(rep2.oracle_miou >= rep2.miou, "oracle dominance for an untrained model");
}

TEST_CASE("criterion 8: spatial engine corpus") {
  Criterion c{8, "48 phrases + 8 relations parse; resolver matches oracle; augment sound; < 30 s"};
  const auto t0 = Clock::now();

  const auto& vocab = spatial::Vocabulary::builtin();
  c.expect(vocab.qualifiers().size() == 48, "exactly 48 phrases");
  c.expect(vocab.relations().size() == 8, "exactly 8 relation patterns");
  for (const auto& e : vocab.qualifiers()) {
    auto q = spatial::parse_query(e.phrase + " mug");
    c.expect(q.qualifier && q.qualifier->kind == e.kind, "phrase parses to canonical kind");
    c.expect(q.embedding_index() == e.embedding_index, "embedding index matches table");
  }
  for (const auto& rel : vocab.relations()) {
    for (const auto& p : rel.phrases) {
      auto q = spatial::parse_query("mug " + p + " the box");
      c.expect(q.relation && q.relation->kind == rel.kind, "relation phrasing parses");
    }
  }

  // brute-force selection oracle over 1000 random candidate sets
  num::Rng rng(7);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.next_u32(6);
    std::vector<spatial::CandidateObject> cs;
    for (std::size_t i = 0; i < n; ++i) {
      spatial::CandidateObject cand;
      cand.cx = rng.uniform();
      cand.cy = rng.uniform();
      cand.depth = rng.uniform(0.5, 8.0);
      cand.centroid3d = {cand.cx, cand.cy, cand.depth};
      cand.pixel_count = rng.next_u32(200);
      cand.confidence = rng.uniform(0.2, 1.0);
      cs.push_back(cand);
    }
    for (int k = 0; k <= static_cast<int>(spatial::QualifierKind::kSmallest); ++k) {
      const auto kind = static_cast<spatial::QualifierKind>(k);
      // oracle: exhaustive sort with the documented key and tie rules
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      auto key = [&](std::size_t i) -> double {
        switch (kind) {
          case spatial::QualifierKind::kLeftmost:
          case spatial::QualifierKind::kRightmost:
          case spatial::QualifierKind::kSecondLeftmost:
          case spatial::QualifierKind::kSecondRightmost:
            return cs[i].cx;
          case spatial::QualifierKind::kTopmost:
          case spatial::QualifierKind::kBottommost:
          case spatial::QualifierKind::kSecondTopmost:
          case spatial::QualifierKind::kSecondBottommost:
            return cs[i].cy;
          case spatial::QualifierKind::kCenter: {
            double mx = 0, my = 0;
            for (const auto& o : cs) {
              mx += o.cx;
              my += o.cy;
            }
            mx /= n;
            my /= n;
            return std::hypot(cs[i].cx - mx, cs[i].cy - my);
          }
          case spatial::QualifierKind::kLargest:
          case spatial::QualifierKind::kSmallest:
            return cs[i].pixel_count;
          default:
            return cs[i].depth;
        }
      };
      bool desc = kind == spatial::QualifierKind::kFarthest ||
                  kind == spatial::QualifierKind::kSecondFarthest ||
                  kind == spatial::QualifierKind::kRightmost ||
                  kind == spatial::QualifierKind::kSecondRightmost ||
                  kind == spatial::QualifierKind::kBottommost ||
                  kind == spatial::QualifierKind::kSecondBottommost ||
                  kind == spatial::QualifierKind::kLargest;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (key(a) != key(b)) return desc ? key(a) > key(b) : key(a) < key(b);
        if (cs[a].confidence != cs[b].confidence) return cs[a].confidence > cs[b].confidence;
        return a < b;
      });
      std::size_t want;
      switch (kind) {
        case spatial::QualifierKind::kSecondNearest:
        case spatial::QualifierKind::kSecondFarthest:
        case spatial::QualifierKind::kSecondLeftmost:
        case spatial::QualifierKind::kSecondRightmost:
        case spatial::QualifierKind::kSecondTopmost:
        case spatial::QualifierKind::kSecondBottommost:
          want = order[n >= 2 ? 1 : 0];
          break;
        case spatial::QualifierKind::kMidDepth:
          want = order[(n - 1) / 2];
          break;
        default:
          want = order[0];
      }
      if (spatial::resolve_qualifier(cs, kind) != want) ++mismatches;
    }
  }
  std::printf("  resolver oracle mismatches: %d\n", mismatches);
  c.expect(mismatches == 0, "resolve_qualifier matches the brute-force oracle");

  // augmentation soundness over 500 random scenes
  spatial::AugmentConfig acfg;
  acfg.probability = 1.0;
  int emitted = 0, unsound = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    auto ds = scenegen::make_dataset({1, 50'000 + s, s % 2 ? 0.0 : 1.0, scenegen::NoiseSpec{}, 16});
    const auto& sample = ds.scenes[0];
    num::Rng arng(s);
    for (const auto& obj : sample.objects) {
      auto prompt = spatial::gt_aware_augment(sample, obj.instance_id, ds.classes, acfg, arng);
      if (!prompt || !prompt->query.qualifier) continue;
      ++emitted;
      const auto& view = sample.views[0];
      std::vector<std::uint16_t> same_class;
      for (const auto& o : sample.objects) {
        if (o.class_id != obj.class_id) continue;
        for (auto id : view.instance_ids)
          if (id == o.instance_id) {
            same_class.push_back(o.instance_id);
            break;
          }
      }
      auto cands = spatial::gt_candidates(view, same_class);
      const auto pick = spatial::resolve_qualifier(cands, prompt->query.qualifier->kind);
      if (same_class[pick] != obj.instance_id) ++unsound;
    }
  }
  std::printf("  augmentation: %d qualifier prompts, %d unsound\n", emitted, unsound);
  c.expect(emitted > 100, "augmentation emits prompts");
  c.expect(unsound == 0, "every emitted qualifier re-selects its target");
  c.expect(seconds_since(t0) < 30.0, "runtime under 30 s");
}

TEST_CASE("criterion 9: loss-value spot checks") {
  Criterion c{9, "focal/align/contrastive match scalar oracles within 1e-6"};
  {
    num::Tensor<double> p({1}, {0.9});
    num::Tensor<double> t({1}, {1.0});
    const double got = loss::focal_loss(p, t, 0.75, 2.0);
    const double oracle = 0.75 * std::pow(0.1, 2.0) * (-std::log(0.9));
    std::printf("  focal(p=0.9 fg) = %.6e (oracle %.6e)\n", got, oracle);
    c.expect(std::abs(got - oracle) < 1e-6, "focal matches 7.902e-4 oracle");
    c.expect(std::abs(got - 7.902e-4) < 1e-6, "focal magnitude");
  }
  {
    const double got = loss::align_soft_target(0.0, 0.8, 0.9, 0.5, 2.0);
    const double oracle = std::exp(-0.0 / 2.0) * std::pow(0.8, 0.5) * std::pow(0.9, 0.5);
    std::printf("  t_c(r=0, p=0.8, u=0.9) = %.6f (oracle %.6f)\n", got, oracle);
    c.expect(std::abs(got - oracle) < 1e-6, "align soft target matches oracle");
    c.expect(std::abs(got - 0.84853) < 1e-5, "align soft target magnitude");
  }
  {
    num::Tensor<double> u({2}, {0.8, 0.1});
    num::Tensor<double> s1({2}, {0.9, 0.2});
    num::Tensor<double> s2({2}, {0.3, 0.2});
    c.expect(std::abs(loss::contrastive_rank_loss(s1, u, 0.5) - 0.0) < 1e-6,
             "separated pair costs zero");
    c.expect(std::abs(loss::contrastive_rank_loss(s2, u, 0.5) - 0.4) < 1e-6,
             "violating pair costs margin minus difference");
  }
}

TEST_CASE("criterion 10: determinism and serialization") {
  Criterion c{10, "seed-pinned bitwise checkpoints; exact round trips; named corruption errors"};

  auto ds = scenegen::make_dataset({6, 77, 0.5, scenegen::NoiseSpec{}, 32});
  harness::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.threads = 1;

  auto run = [&](const std::string& path) {
    auto model = gasa::GasaModel<float>::init(cfg.model_config(ds.feature_dim), cfg.seed);
    auto result = harness::train(std::move(model), ds, cfg);
    gasa::save_checkpoint(result.model, path);
  };
  run("/tmp/geoseg_acc_a.ckpt");
  run("/tmp/geoseg_acc_b.ckpt");
  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  };
  auto a = slurp("/tmp/geoseg_acc_a.ckpt");
  c.expect(!a.empty() && a == slurp("/tmp/geoseg_acc_b.ckpt"),
           "two same-seed runs give byte-identical checkpoints");

  // dataset round trip, bitwise
  const std::string dir = "/tmp/geoseg_acc_ds";
  std::filesystem::remove_all(dir);
  scenegen::write_dataset(dir, ds);
  auto loaded = scenegen::read_dataset(dir);
  bool exact = loaded.scenes.size() == ds.scenes.size();
  for (std::size_t s = 0; exact && s < ds.scenes.size(); ++s)
    for (std::size_t v = 0; exact && v < ds.scenes[s].views.size(); ++v)
      exact = loaded.scenes[s].views[v].features == ds.scenes[s].views[v].features &&
              loaded.scenes[s].views[v].depth == ds.scenes[s].views[v].depth &&
              loaded.scenes[s].views[v].instance_ids == ds.scenes[s].views[v].instance_ids;
  c.expect(exact, "dataset round trip bitwise exact");

  // checkpoint round trip, bitwise at the file level
  auto reloaded = gasa::load_checkpoint<float>("/tmp/geoseg_acc_a.ckpt");
  gasa::save_checkpoint(reloaded, "/tmp/geoseg_acc_c.ckpt");
  c.expect(slurp("/tmp/geoseg_acc_c.ckpt") == a, "checkpoint round trip byte-identical");

  // distinct, named errors
  bool checksum_named = false, version_named = false, truncated_named = false,
       ckpt_named = false;
  {
    std::fstream f(dir + "/scenes/scene_0000/features.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(20);
    char ch;
    f.get(ch);
    f.seekp(20);
    f.put(static_cast<char>(ch ^ 0x11));
  }
  try {
    scenegen::read_dataset(dir);
  } catch (const DatasetChecksumError& e) {
    checksum_named = std::string(e.what()).find("features.bin") != std::string::npos;
  }
  scenegen::write_dataset(dir, ds);
  std::filesystem::resize_file(dir + "/scenes/scene_0001/depth.bin", 8);
  try {
    scenegen::read_dataset(dir);
  } catch (const DatasetTruncatedError& e) {
    truncated_named = std::string(e.what()).find("depth.bin") != std::string::npos;
  }
  scenegen::write_dataset(dir, ds);
  {
    std::ifstream in(dir + "/manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"version\": 1");
    text.replace(pos, 12, "\"version\": 3");
    std::ofstream out(dir + "/manifest.json");
    out << text;
  }
  try {
    scenegen::read_dataset(dir);
  } catch (const DatasetVersionError&) {
    version_named = true;
  }
  {
    auto bytes = a;
    bytes[bytes.size() / 3] = static_cast<char>(bytes[bytes.size() / 3] ^ 0x5a);
    std::ofstream f("/tmp/geoseg_acc_bad.ckpt", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    gasa::load_checkpoint<float>("/tmp/geoseg_acc_bad.ckpt");
  } catch (const CheckpointError& e) {
    ckpt_named = std::string(e.what()).find("crc") != std::string::npos;
  }
  c.expect(checksum_named, "payload corruption raises a checksum error naming the file");
  c.expect(truncated_named, "truncation raises a truncation error naming the file");
  c.expect(version_named, "unknown manifest version raises a version error");
  c.expect(ckpt_named, "corrupt checkpoint raises a crc error");
}
