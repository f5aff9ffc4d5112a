// Command line front end: dataset generation, training, evaluation, the
// ablation suite, single text queries against a scene, and the gradient
// verification suite.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoseg/gasa/checkpoint.hpp"
#include "geoseg/harness/ablation.hpp"
#include "geoseg/harness/gradcheck_suite.hpp"
#include "geoseg/harness/train.hpp"
#include "geoseg/spatial/augment.hpp"

using namespace geoseg;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_path;
  json config;
};

// flags override config-file values; config values override defaults
template <typename T>
void from_config(const json& cfg, const char* section, const char* key, T& value) {
  if (cfg.contains(section) && cfg[section].contains(key)) {
    value = cfg[section][key].get<T>();
  }
}

harness::TrainConfig train_config_from(const GlobalOpts& g) {
  harness::TrainConfig cfg;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  from_config(g.config, "train", "epochs", cfg.epochs);
  from_config(g.config, "train", "batch_size", cfg.batch_size);
  from_config(g.config, "train", "learning_rate", cfg.learning_rate);
  from_config(g.config, "train", "weight_decay", cfg.weight_decay);
  from_config(g.config, "train", "warmup_epochs", cfg.warmup_epochs);
  from_config(g.config, "train", "negative_prob", cfg.negative_prob);
  from_config(g.config, "train", "augment_prob", cfg.augment_prob);
  from_config(g.config, "train", "holdout_fraction", cfg.holdout_fraction);
  from_config(g.config, "train", "token_block", cfg.token_block);
  from_config(g.config, "train", "eval_every", cfg.eval_every);
  from_config(g.config, "model", "model_dim", cfg.base_model.model_dim);
  from_config(g.config, "model", "num_heads", cfg.base_model.num_heads);
  from_config(g.config, "model", "num_layers", cfg.base_model.num_layers);
  from_config(g.config, "model", "num_queries", cfg.base_model.num_queries);
  from_config(g.config, "model", "pe_scale", cfg.base_model.pe_scale);
  from_config(g.config, "model", "rbf_sigma", cfg.base_model.rbf_sigma);
  return cfg;
}

gasa::KernelMode parse_kernel_mode(const std::string& s) {
  if (s == "learned") return gasa::KernelMode::kLearned;
  if (s == "rbf") return gasa::KernelMode::kRbf;
  if (s == "off") return gasa::KernelMode::kOff;
  throw CLI::ValidationError("--kernel must be learned, rbf, or off");
}

std::string camera_relative_phrase(const geom::Camera& cam, const geom::Vec3& world) {
  const geom::Vec3 rel = cam.rotation.apply_transposed(world - cam.translation);
  // camera frame: +z ahead, +x right, +y down
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.1fm ahead, %.1fm %s, %.1fm %s", rel.z, std::abs(rel.x),
                rel.x < 0 ? "left" : "right", std::abs(rel.y), rel.y < 0 ? "up" : "down");
  return buf;
}

int cmd_gen(const GlobalOpts& g, const std::string& out, int scenes, double twin_fraction,
            int feature_dim) {
  scenegen::DatasetSpec spec;
  spec.num_scenes = scenes;
  spec.seed = g.seed;
  spec.twin_fraction = twin_fraction;
  spec.feature_dim = feature_dim;
  from_config(g.config, "scenegen", "depth_noise", spec.noise.depth_rel);
  from_config(g.config, "scenegen", "feature_noise", spec.noise.feature);
  auto ds = scenegen::make_dataset(spec);
  scenegen::write_dataset(out, ds);
  std::printf("wrote %d scenes (%d views, %dx%d, F=%d) to %s\n", scenes, ds.views, ds.width,
              ds.height, ds.feature_dim, out.c_str());
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data, const std::string& out,
              harness::TrainConfig cfg, const std::string& log_path) {
  auto ds = scenegen::read_dataset(data);
  auto model = gasa::GasaModel<float>::init(cfg.model_config(ds.feature_dim), cfg.seed);
  std::printf("training on %zu scenes (%zu parameters, kernel=%s, world_pe=%d)\n",
              ds.scenes.size(), model.num_params(), gasa::kernel_mode_name(cfg.kernel_mode),
              cfg.world_pe ? 1 : 0);
  auto result = harness::train(std::move(model), ds, cfg, log_path);
  gasa::save_checkpoint(result.model, out);
  std::printf("holdout: %s\n", result.holdout_eval.table().c_str());
  std::printf("checkpoint written to %s\n", out.c_str());
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& data, const std::string& ckpt,
             const std::string& out, bool no_spatial) {
  auto ds = scenegen::read_dataset(data);
  auto model = gasa::load_checkpoint<float>(ckpt);
  harness::EvalProtocol proto;
  proto.seed = g.seed;
  proto.use_spatial_queries = !no_spatial;
  from_config(g.config, "eval", "mask_threshold", proto.mask_threshold);
  from_config(g.config, "eval", "sample_objects", proto.sample_objects);
  from_config(g.config, "eval", "token_block", proto.token_block);
  auto rep = harness::evaluate(model, ds, proto, nullptr, g.threads);
  std::printf("%s\n", rep.table().c_str());
  if (!out.empty()) {
    std::ofstream f(out);
    f << rep.to_json() << "\n";
    std::printf("report written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_ablate(const GlobalOpts& g, const std::string& data, harness::TrainConfig base,
               int seeds, const std::string& out) {
  auto ds = scenegen::read_dataset(data);
  auto table = harness::run_ablation_suite(ds, base, seeds);
  std::printf("%s", table.table().c_str());
  if (!out.empty()) {
    json j = json::array();
    for (const auto& r : table.rows)
      j.push_back({{"name", r.name}, {"miou", r.miou}, {"delta", r.delta},
                   {"per_seed", r.per_seed}});
    std::ofstream f(out);
    f << j.dump(1) << "\n";
    std::printf("table written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_query(const GlobalOpts& g, const std::string& data, int scene_index,
              const std::string& text, const std::string& ckpt, bool gt_candidates_mode,
              int token_block) {
  auto ds = scenegen::read_dataset(data);
  if (scene_index < 0 || scene_index >= static_cast<int>(ds.scenes.size()))
    throw Error("query: scene index out of range");
  const auto& sample = ds.scenes[scene_index];
  auto query = spatial::parse_query(text);
  std::printf("query: \"%s\"\n", text.c_str());
  std::printf("parsed: base=%s", query.base_noun.c_str());
  if (query.qualifier)
    std::printf(" qualifier=%s embedding=%d", spatial::qualifier_name(query.qualifier->kind),
                query.embedding_index());
  if (query.relation)
    std::printf(" relation=%s reference=%s", spatial::relation_name(query.relation->kind),
                query.relation->reference.c_str());
  std::printf("\n");

  const int cls = ds.classes.find(query.base_noun);
  if (cls < 0) std::printf("note: '%s' is not a known class name\n", query.base_noun.c_str());

  std::vector<geom::PointMap> pointmaps;
  for (const auto& view : sample.views) pointmaps.push_back(scenegen::view_pointmap(view));

  geom::Vec3 centroid;
  int matched_instance = -1;

  if (gt_candidates_mode) {
    // resolve against ground-truth candidates (diagnostic path, no model)
    const auto& view0 = sample.views[0];
    std::vector<std::uint16_t> targets, refs;
    for (const auto& o : sample.objects) {
      const std::string& name = ds.classes.classes[o.class_id].name;
      if (cls >= 0 && o.class_id == cls) targets.push_back(o.instance_id);
      if (query.relation && name == query.relation->reference) refs.push_back(o.instance_id);
    }
    if (targets.empty()) throw Error("query: no ground-truth instances of that class");
    auto cands = spatial::gt_candidates(view0, targets);
    std::size_t pick = 0;
    if (query.qualifier) {
      pick = spatial::resolve_qualifier(cands, query.qualifier->kind);
    } else if (query.relation) {
      if (refs.empty()) throw Error("query: no ground-truth reference instances");
      auto ref_cands = spatial::gt_candidates(view0, refs);
      auto res = spatial::resolve_relation(cands, ref_cands, query.relation->kind);
      pick = res.target_index;
      if (!res.satisfied) std::printf("relation unsatisfied; best-confidence fallback\n");
    }
    matched_instance = targets[pick];
    centroid = cands[pick].centroid3d;
    std::printf("selected candidate %zu of %zu (gt mode)\n", pick, cands.size());
  } else {
    auto model = gasa::load_checkpoint<float>(ckpt);
    auto grids = scenegen::tokenize_sample(sample, token_block);
    auto memory =
        gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<float>*>(nullptr));
    num::Tensor<float> feat({1, static_cast<std::size_t>(ds.feature_dim)});
    if (cls >= 0)
      for (int i = 0; i < ds.feature_dim; ++i) feat[i] = ds.classes.classes[cls].embedding[i];
    auto pred = gasa::decode(model, memory, feat, query.embedding_index(), &pointmaps,
                             static_cast<gasa::DecodeTrace<float>*>(nullptr));

    int selected = gasa::select_mask(pred).first;
    if (query.qualifier) {
      std::vector<spatial::CandidateObject> cands;
      std::vector<int> cand_query;
      float max_conf = 0;
      for (auto c : pred.confidences) max_conf = std::max(max_conf, c);
      for (int q = 0; q < static_cast<int>(pred.confidences.size()); ++q) {
        if (pred.confidences[q] < 0.5f * max_conf) continue;
        int best_v = 0;
        double best_mass = -1;
        for (std::size_t v = 0; v < pred.masks[q].size(); ++v) {
          double mass = 0;
          for (std::size_t i = 0; i < pred.masks[q][v].numel(); ++i) mass += pred.masks[q][v][i];
          if (mass > best_mass) {
            best_mass = mass;
            best_v = static_cast<int>(v);
          }
        }
        cands.push_back(spatial::candidate_from_mask(sample.views[best_v], pointmaps[best_v],
                                                     pred.masks[q][best_v],
                                                     pred.confidences[q]));
        cand_query.push_back(q);
      }
      if (!cands.empty())
        selected = cand_query[spatial::resolve_qualifier(cands, query.qualifier->kind)];
    }

    std::printf("selected query %d view %d (confidence %.3f, presence %.3f)\n", selected,
                pred.best_view, double(pred.confidences[selected]), double(pred.presence));
    std::printf("mask summary:");
    for (std::size_t v = 0; v < pred.masks[selected].size(); ++v) {
      int px = 0;
      for (std::size_t i = 0; i < pred.masks[selected][v].numel(); ++i)
        if (pred.masks[selected][v][i] > 0.5f) ++px;
      std::printf(" view%zu=%dpx", v, px);
    }
    std::printf("\n");

    // unprojection centroid of the selected query's best-mass view
    int best_v = 0;
    double best_mass = -1;
    for (std::size_t v = 0; v < pred.masks[selected].size(); ++v) {
      double mass = 0;
      for (std::size_t i = 0; i < pred.masks[selected][v].numel(); ++i)
        mass += pred.masks[selected][v][i];
      if (mass > best_mass) {
        best_mass = mass;
        best_v = static_cast<int>(v);
      }
    }
    auto res = geom::mask_weighted_centroid(pred.masks[selected][best_v], pointmaps[best_v]);
    centroid = res.centroid;
    if (res.weight_sum < 1.0) std::printf("low-confidence mask (weight sum %.3f)\n", res.weight_sum);

    // best-overlap GT instance, for diagnostics
    double best_iou = 0;
    for (const auto& o : sample.objects) {
      std::vector<num::Tensor<float>> gt, pm;
      for (const auto& view : sample.views)
        gt.push_back(scenegen::instance_mask<float>(view, o.instance_id));
      const double iou = harness::binary_iou_pooled(pred.masks[selected], gt, 0.5);
      if (iou > best_iou) {
        best_iou = iou;
        matched_instance = o.instance_id;
      }
    }
  }

  std::printf("centroid: %.3f %.3f %.3f meters\n", centroid.x, centroid.y, centroid.z);
  std::printf("relative to view 0 camera: %s\n",
              camera_relative_phrase(sample.views[0].camera, centroid).c_str());
  if (matched_instance >= 0) std::printf("matched gt instance: %d\n", matched_instance);
  return 0;
}

int cmd_gradcheck(int seeds) {
  auto suite = harness::run_gradcheck_suite(seeds);
  bool all = true;
  for (const auto& op : suite.ops) {
    std::printf("%-22s max rel error %.3e  %s\n", op.name.c_str(), op.max_rel_error,
                op.pass() ? "ok" : "FAIL");
    all &= op.pass();
  }
  std::printf("%s\n", all ? "all gradient checks passed" : "gradient checks FAILED");
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometry-aware multi-view segmentation on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master random seed");
  app.add_option("--threads", g.threads, "worker threads (1 = fully serialized)");
  app.add_option("--config", g.config_path, "JSON config file");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out = "dataset";
  int gen_scenes = 50;
  double gen_twin = 0.5;
  int gen_fdim = 32;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--twin-fraction", gen_twin, "fraction of twin fixtures");
  gen->add_option("--feature-dim", gen_fdim, "backbone feature channels");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_out = "model.ckpt", tr_log, tr_kernel = "learned";
  int tr_epochs = -1, tr_batch = -1, tr_block = -1;
  double tr_lr = -1;
  bool tr_no_pe = false, tr_no_spatial = false;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--log", tr_log, "training log path");
  tr->add_option("--epochs", tr_epochs, "training epochs");
  tr->add_option("--batch", tr_batch, "batch size");
  tr->add_option("--lr", tr_lr, "learning rate");
  tr->add_option("--token-block", tr_block, "token pixel block size");
  tr->add_option("--kernel", tr_kernel, "distance kernel: learned|rbf|off");
  tr->add_flag("--no-world-pe", tr_no_pe, "disable world positional encoding");
  tr->add_flag("--no-spatial-tokens", tr_no_spatial, "disable spatial embeddings");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_data, ev_ckpt, ev_out;
  bool ev_no_spatial = false;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--out", ev_out, "machine-readable report path");
  ev->add_flag("--no-spatial-queries", ev_no_spatial, "plain class prompts only");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare ablation variants");
  std::string ab_data, ab_out;
  int ab_seeds = 3, ab_epochs = -1, ab_block = -1;
  double ab_lr = -1;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--seeds", ab_seeds, "seeds per variant");
  ab->add_option("--epochs", ab_epochs, "training epochs");
  ab->add_option("--lr", ab_lr, "learning rate");
  ab->add_option("--token-block", ab_block, "token pixel block size");
  ab->add_option("--out", ab_out, "machine-readable table path");

  // query
  auto* qu = app.add_subcommand("query", "run a text query against one scene");
  std::string qu_data, qu_ckpt, qu_text;
  int qu_scene = 0, qu_block = -1;
  bool qu_gt = false;
  qu->add_option("--data", qu_data, "dataset directory")->required();
  qu->add_option("--scene", qu_scene, "scene index");
  qu->add_option("--text", qu_text, "query text")->required();
  qu->add_option("--ckpt", qu_ckpt, "checkpoint path");
  qu->add_option("--token-block", qu_block, "token pixel block size");
  qu->add_flag("--gt-candidates", qu_gt, "resolve against ground-truth candidates (no model)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification suite");
  int gc_seeds = 10;
  gc->add_option("--seeds", gc_seeds, "random seeds per operation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  }

  try {
    if (!g.config_path.empty()) {
      std::ifstream f(g.config_path);
      if (!f) throw Error("cannot open config '" + g.config_path + "'");
      f >> g.config;
    }

    if (gen->parsed()) return cmd_gen(g, gen_out, gen_scenes, gen_twin, gen_fdim);

    if (tr->parsed()) {
      auto cfg = train_config_from(g);
      if (tr_epochs >= 0) cfg.epochs = tr_epochs;
      if (tr_batch > 0) cfg.batch_size = tr_batch;
      if (tr_lr > 0) cfg.learning_rate = tr_lr;
      if (tr_block > 0) cfg.token_block = tr_block;
      cfg.kernel_mode = parse_kernel_mode(tr_kernel);
      cfg.world_pe = !tr_no_pe;
      cfg.spatial_tokens = !tr_no_spatial;
      return cmd_train(g, tr_data, tr_out, cfg, tr_log);
    }

    if (ev->parsed()) return cmd_eval(g, ev_data, ev_ckpt, ev_out, ev_no_spatial);

    if (ab->parsed()) {
      auto cfg = train_config_from(g);
      if (ab_epochs >= 0) cfg.epochs = ab_epochs;
      if (ab_lr > 0) cfg.learning_rate = ab_lr;
      if (ab_block > 0) cfg.token_block = ab_block;
      return cmd_ablate(g, ab_data, cfg, ab_seeds, ab_out);
    }

    if (qu->parsed()) {
      if (!qu_gt && qu_ckpt.empty()) {
        std::fprintf(stderr, "query: either --ckpt or --gt-candidates is required\n");
        return 1;
      }
      auto cfg = train_config_from(g);
      const int block = qu_block > 0 ? qu_block : cfg.token_block;
      return cmd_query(g, qu_data, qu_scene, qu_text, qu_ckpt, qu_gt, block);
    }

    if (gc->parsed()) return cmd_gradcheck(gc_seeds);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
