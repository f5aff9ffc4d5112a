#include "geoseg/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "geoseg/harness/optimizer.hpp"
#include "geoseg/spatial/augment.hpp"

namespace geoseg::harness {

namespace {

// hard per-query IoU targets, detached
std::vector<float> query_ious(const gasa::Prediction<float>& pred,
                              const std::vector<num::Tensor<float>>& gt) {
  std::vector<float> out;
  for (const auto& per_view : pred.masks)
    out.push_back(static_cast<float>(binary_iou_pooled(per_view, gt, 0.5)));
  return out;
}

}  // namespace

loss::LossReport<float> item_loss(gasa::GasaModel<float>& model,
                                  const scenegen::Dataset& dataset, const TrainItem& item,
                                  const loss::LossWeights<float>& weights, int token_block,
                                  float grad_scale, bool backward) {
  const auto& sample = dataset.scenes[item.scene];
  const int V = static_cast<int>(sample.views.size());
  const int Q = model.cfg.num_queries;

  auto grids = scenegen::tokenize_sample(sample, token_block);
  gasa::MemoryTrace<float> mt;
  auto memory = gasa::build_memory(model, grids, backward ? &mt : nullptr);

  num::Tensor<float> text({1, static_cast<std::size_t>(dataset.feature_dim)});
  {
    const auto& emb = dataset.classes.classes[item.class_id].embedding;
    for (std::size_t i = 0; i < emb.size(); ++i) text[i] = emb[i];
  }

  gasa::DecodeTrace<float> dt;
  auto pred = gasa::decode(model, memory, text, item.qualifier_index,
                           static_cast<const std::vector<geom::PointMap>*>(nullptr),
                           backward ? &dt : nullptr);

  // ground truth
  std::vector<num::Tensor<float>> gt;
  for (int v = 0; v < V; ++v)
    gt.push_back(item.present
                     ? scenegen::instance_mask<float>(sample.views[v], item.instance)
                     : num::Tensor<float>({static_cast<std::size_t>(sample.views[v].height),
                                           static_cast<std::size_t>(sample.views[v].width)}));

  const auto ious = query_ious(pred, gt);
  num::Tensor<float> iou_t({static_cast<std::size_t>(Q)});
  num::Tensor<float> conf_t({static_cast<std::size_t>(Q)});
  for (int q = 0; q < Q; ++q) {
    iou_t[q] = ious[q];
    conf_t[q] = pred.confidences[q];
  }
  const auto ranks = loss::iou_ranks(iou_t);
  const auto tc = loss::align_soft_targets(conf_t, iou_t, ranks, weights.align_alpha,
                                           weights.align_tau);

  // mask supervision goes to the GT-best query
  int best_gt = 0;
  for (int q = 1; q < Q; ++q)
    if (ious[q] > ious[best_gt]) best_gt = q;

  float focal = 0, dice = 0;
  std::vector<num::Tensor<float>> pred_stack, gt_stack;
  if (item.present) {
    // stack views into one tensor per side
    std::size_t total = 0;
    for (const auto& m : gt) total += m.numel();
    num::Tensor<float> ps({total}), gs({total});
    std::size_t off = 0;
    for (int v = 0; v < V; ++v) {
      std::copy(pred.masks[best_gt][v].data(),
                pred.masks[best_gt][v].data() + pred.masks[best_gt][v].numel(),
                ps.data() + off);
      std::copy(gt[v].data(), gt[v].data() + gt[v].numel(), gs.data() + off);
      off += gt[v].numel();
    }
    focal = loss::focal_loss(ps, gs, weights.focal_alpha, weights.focal_gamma);
    dice = loss::dice_loss(ps, gs, weights.dice_epsilon);
    pred_stack.push_back(std::move(ps));
    gt_stack.push_back(std::move(gs));
  }

  const float align =
      loss::align_loss_with_targets(conf_t, tc, weights.align_gamma);
  const float contrastive =
      loss::contrastive_rank_loss(conf_t, iou_t, weights.contrastive_margin);

  std::array<float, 3> gt_center{};
  if (item.present) {
    for (const auto& o : sample.objects)
      if (o.instance_id == item.instance) {
        gt_center = {static_cast<float>(o.center.x), static_cast<float>(o.center.y),
                     static_cast<float>(o.center.z)};
      }
  }
  const auto loc = loss::localization_loss(pred.centroid_regressed, gt_center, pred.presence,
                                           item.present ? 1 : 0);

  const auto report =
      loss::combine(weights, focal, dice, align, contrastive, loc.centroid, loc.presence);

  if (!backward) return report;

  // reverse pass: loss gradients -> prediction gradients -> model gradients
  gasa::PredictionGrads<float> pg;
  pg.gconf.assign(Q, 0.0f);
  pg.gmask.assign(Q, std::vector<num::Tensor<float>>(V));

  if (item.present) {
    num::Tensor<float> gstack({pred_stack[0].numel()});
    loss::focal_loss_backward(pred_stack[0], gt_stack[0], weights.focal_alpha,
                              weights.focal_gamma, grad_scale * weights.lambda_focal, gstack);
    loss::dice_loss_backward(pred_stack[0], gt_stack[0], weights.dice_epsilon,
                             grad_scale * weights.lambda_dice, gstack);
    std::size_t off = 0;
    for (int v = 0; v < V; ++v) {
      const auto H = static_cast<std::size_t>(sample.views[v].height);
      const auto W = static_cast<std::size_t>(sample.views[v].width);
      num::Tensor<float> gv({H, W});
      std::copy(gstack.data() + off, gstack.data() + off + H * W, gv.data());
      off += H * W;
      pg.gmask[best_gt][v] = std::move(gv);
    }
  }

  num::Tensor<float> gconf({static_cast<std::size_t>(Q)});
  loss::align_loss_backward(conf_t, tc, weights.align_gamma, grad_scale * weights.lambda_align,
                            gconf);
  loss::contrastive_rank_loss_backward(conf_t, iou_t, weights.contrastive_margin,
                                       grad_scale * weights.lambda_contrastive, gconf);
  for (int q = 0; q < Q; ++q) pg.gconf[q] = gconf[q];

  std::array<float, 3> gcent{};
  float gpresence = 0;
  loss::localization_loss_backward(pred.centroid_regressed, gt_center, pred.presence,
                                   item.present ? 1 : 0, grad_scale * weights.lambda_centroid,
                                   grad_scale * weights.lambda_presence, gcent, gpresence);
  pg.gcentroid_regressed = gcent;
  pg.gpresence = gpresence;

  auto gmem = gasa::decode_backward(model, memory, dt, pg);
  gasa::build_memory_backward(model, memory, mt, gmem);
  return report;
}

TrainResult train(gasa::GasaModel<float> model, const scenegen::Dataset& dataset,
                  const TrainConfig& cfg, const std::string& log_path) {
  if (dataset.scenes.empty()) throw TrainAbortError("train: empty dataset");

  TrainResult result{std::move(model), {}, {}, {}, {}};
  auto& m = result.model;

  // deterministic scene split
  const int holdout =
      std::min<int>(static_cast<int>(dataset.scenes.size()) - 1,
                    std::max(0, static_cast<int>(std::lround(dataset.scenes.size() *
                                                             cfg.holdout_fraction))));
  for (int i = 0; i < static_cast<int>(dataset.scenes.size()); ++i) {
    // spread the holdout across the twin/random interleaving
    if (holdout > 0 && (i % std::max<int>(1, static_cast<int>(dataset.scenes.size()) / holdout)) ==
                           0 &&
        static_cast<int>(result.holdout_scenes.size()) < holdout) {
      result.holdout_scenes.push_back(i);
    } else {
      result.train_scenes.push_back(i);
    }
  }

  // one item per (scene, object)
  std::vector<TrainItem> base_items;
  for (int si : result.train_scenes) {
    for (const auto& o : dataset.scenes[si].objects) {
      TrainItem it;
      it.scene = si;
      it.instance = o.instance_id;
      it.class_id = o.class_id;
      base_items.push_back(it);
    }
  }
  if (base_items.empty()) throw TrainAbortError("train: no trainable objects");

  const long steps_per_epoch =
      (static_cast<long>(base_items.size()) + cfg.batch_size - 1) / cfg.batch_size;
  LrSchedule schedule{cfg.learning_rate, cfg.warmup_epochs * steps_per_epoch,
                      cfg.epochs * steps_per_epoch};
  AdamW opt(cfg.weight_decay);

  spatial::AugmentConfig aug;
  aug.probability = cfg.augment_prob;
  aug.multi_instance_only = cfg.multi_instance_only;

  std::ofstream log_file;
  if (!log_path.empty()) log_file.open(log_path, std::ios::trunc);
  auto emit = [&](const std::string& line) {
    result.log_lines.push_back(line);
    if (log_file) log_file << line << "\n";
  };

  num::Rng order_rng = num::Rng::split(cfg.seed, 1);
  num::Rng item_rng = num::Rng::split(cfg.seed, 2);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto items = base_items;
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = order_rng.next_u32(static_cast<std::uint32_t>(i));
      std::swap(items[i - 1], items[j]);
    }
    for (std::size_t b = 0; b < items.size(); b += cfg.batch_size) {
      const std::size_t batch_end = std::min(items.size(), b + cfg.batch_size);
      std::vector<TrainItem> batch(items.begin() + b, items.begin() + batch_end);
      // per-item prompt decisions (negatives + augmentation), deterministic
      for (auto& it : batch) {
        it.present = true;
        it.qualifier_index = 0;
        const auto& sample = dataset.scenes[it.scene];
        if (item_rng.uniform() < cfg.negative_prob) {
          std::vector<std::uint16_t> absent;
          for (std::uint16_t c = 1; c < dataset.classes.classes.size(); ++c) {
            bool in_scene = false;
            for (const auto& o : sample.objects)
              if (o.class_id == c) in_scene = true;
            if (!in_scene) absent.push_back(c);
          }
          if (!absent.empty()) {
            it.present = false;
            it.class_id = absent[item_rng.next_u32(static_cast<std::uint32_t>(absent.size()))];
            continue;
          }
        }
        if (cfg.spatial_tokens) {
          auto prompt = spatial::gt_aware_augment(sample, it.instance, dataset.classes, aug,
                                                  item_rng);
          if (prompt && prompt->query.qualifier) {
            it.qualifier_index = prompt->query.embedding_index();
          }
        }
      }

      m.zero_grads();
      const float scale = 1.0f / static_cast<float>(batch.size());
      loss::LossReport<float> mean_report;
      auto accumulate = [&](const loss::LossReport<float>& r) {
        mean_report.total += scale * r.total;
        mean_report.focal += scale * r.focal;
        mean_report.dice += scale * r.dice;
        mean_report.align += scale * r.align;
        mean_report.contrastive += scale * r.contrastive;
        mean_report.centroid += scale * r.centroid;
        mean_report.presence += scale * r.presence;
      };

      if (cfg.threads <= 1 || batch.size() < 2) {
        for (const auto& it : batch)
          accumulate(item_loss(m, dataset, it, cfg.weights, cfg.token_block, scale, true));
      } else {
        // per-item model clones carry private gradient buffers; grads merge
        // in item order, so the result matches the sequential path
        std::vector<gasa::GasaModel<float>> clones(batch.size(), m);
        std::vector<loss::LossReport<float>> reports(batch.size());
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(cfg.threads, static_cast<int>(batch.size()));
        for (int k = 0; k < nthreads; ++k) {
          pool.emplace_back([&, k]() {
            for (std::size_t i = k; i < batch.size(); i += nthreads) {
              reports[i] = item_loss(clones[i], dataset, batch[i], cfg.weights,
                                     cfg.token_block, scale, true);
            }
          });
        }
        for (auto& th : pool) th.join();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          accumulate(reports[i]);
          std::size_t slot = 0;
          std::vector<num::Tensor<float>*> dst;
          m.visit_params([&](const std::string&, num::DualTensor<float>& p) {
            dst.push_back(&p.grad);
          });
          clones[i].visit_params([&](const std::string&, num::DualTensor<float>& p) {
            auto& target = *dst[slot++];
            for (std::size_t j = 0; j < p.grad.numel(); ++j) target[j] += p.grad[j];
          });
        }
      }

      if (!std::isfinite(mean_report.total)) {
        const char* term = !std::isfinite(mean_report.focal)       ? "focal"
                           : !std::isfinite(mean_report.dice)      ? "dice"
                           : !std::isfinite(mean_report.align)     ? "align"
                           : !std::isfinite(mean_report.contrastive) ? "contrastive"
                           : !std::isfinite(mean_report.centroid)  ? "centroid"
                                                                   : "presence";
        emit("abort step=" + std::to_string(step) + " non-finite term=" + term);
        throw TrainAbortError(std::string("train: non-finite loss in term '") + term +
                              "' at step " + std::to_string(step) +
                              " (parameters left at the last finite step)");
      }

      const double lr = schedule.at(step);
      opt.step(m, lr, cfg.freeze_beta);
      emit(mean_report.line(step) + " lr=" + std::to_string(lr));
      ++step;
    }

    const bool last_epoch = epoch + 1 == cfg.epochs;
    if (last_epoch || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)) {
      EvalProtocol proto;
      proto.token_block = cfg.token_block;
      auto holdout_eval = evaluate(m, dataset, proto,
                                   result.holdout_scenes.empty() ? nullptr
                                                                 : &result.holdout_scenes,
                                   cfg.threads);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch=%d holdout_miou=%.4f holdout_oracle=%.4f gap=%.4f",
                    epoch, holdout_eval.miou, holdout_eval.oracle_miou, holdout_eval.gap);
      emit(buf);
      result.holdout_eval = std::move(holdout_eval);
    }
  }
  return result;
}

}  // namespace geoseg::harness
