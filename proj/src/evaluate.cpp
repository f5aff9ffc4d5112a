#include "geoseg/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "geoseg/spatial/augment.hpp"
#include "geoseg/spatial/resolve.hpp"

namespace geoseg::harness {

double binary_iou_pooled(const std::vector<num::Tensor<float>>& pred,
                         const std::vector<num::Tensor<float>>& gt, double threshold) {
  double inter = 0, uni = 0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    for (std::size_t i = 0; i < pred[v].numel(); ++i) {
      const bool p = pred[v][i] > threshold;
      const bool g = gt[v][i] > 0.5f;
      inter += (p && g) ? 1 : 0;
      uni += (p || g) ? 1 : 0;
    }
  }
  return uni > 0 ? inter / uni : 1.0;
}

namespace {

double recall_pooled(const std::vector<num::Tensor<float>>& pred,
                     const std::vector<num::Tensor<float>>& gt, double threshold) {
  double hit = 0, total = 0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    for (std::size_t i = 0; i < pred[v].numel(); ++i) {
      if (gt[v][i] <= 0.5f) continue;
      total += 1;
      if (pred[v][i] > threshold) hit += 1;
    }
  }
  return total > 0 ? hit / total : 1.0;
}

// Unprojection centroid of one query's mask in its best-mass view.
std::pair<geom::Vec3, int> query_centroid(const gasa::Prediction<float>& pred, int q,
                                          const std::vector<geom::PointMap>& pointmaps) {
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
  auto res = geom::mask_weighted_centroid(pred.masks[q][best_v], pointmaps[best_v]);
  return {res.centroid, best_v};
}

}  // namespace

PerObjectRow evaluate_object(const gasa::Prediction<float>& pred,
                             const scenegen::SceneSample& sample, std::uint16_t instance,
                             const spatial::Query& query, const EvalProtocol& proto,
                             const std::vector<geom::PointMap>& pointmaps) {
  PerObjectRow row;
  row.scene = sample.name;
  row.instance = instance;
  row.prompt = query.raw_text;

  const int Q = static_cast<int>(pred.masks.size());
  const int V = static_cast<int>(sample.views.size());
  std::vector<num::Tensor<float>> gt;
  for (int v = 0; v < V; ++v) gt.push_back(scenegen::instance_mask<float>(sample.views[v], instance));

  std::vector<double> per_query_iou(Q, 0.0);
  for (int q = 0; q < Q; ++q)
    per_query_iou[q] = binary_iou_pooled(pred.masks[q], gt, proto.mask_threshold);

  // selection: geometric when the prompt carries a qualifier, otherwise
  // highest confidence
  int selected = gasa::select_mask(pred).first;
  if (query.qualifier) {
    row.spatial_query = true;
    float max_conf = 0;
    for (auto c : pred.confidences) max_conf = std::max(max_conf, c);
    std::vector<spatial::CandidateObject> candidates;
    std::vector<int> candidate_query;
    for (int q = 0; q < Q; ++q) {
      if (pred.confidences[q] < proto.candidate_conf_ratio * max_conf) continue;
      auto [c3d, view] = query_centroid(pred, q, pointmaps);
      auto cand = spatial::candidate_from_mask(sample.views[view], pointmaps[view],
                                               pred.masks[q][view], pred.confidences[q]);
      candidates.push_back(std::move(cand));
      candidate_query.push_back(q);
    }
    if (!candidates.empty()) {
      const auto pick = spatial::resolve_qualifier(candidates, query.qualifier->kind);
      selected = candidate_query[pick];
    }
  }
  row.selected_query = selected;

  row.iou = per_query_iou[selected];
  row.oracle_iou = *std::max_element(per_query_iou.begin(), per_query_iou.end());
  row.recall = recall_pooled(pred.masks[selected], gt, proto.mask_threshold);

  const auto* obj = [&]() -> const scenegen::ObjectSpec* {
    for (const auto& o : sample.objects)
      if (o.instance_id == instance) return &o;
    return nullptr;
  }();
  if (obj) {
    auto [c3d, view] = query_centroid(pred, selected, pointmaps);
    row.centroid_err = geom::distance(c3d, obj->center);
  }
  return row;
}

EvalReport aggregate_rows(std::vector<PerObjectRow> rows) {
  EvalReport rep;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) return rep;
  std::vector<double> errs;
  for (const auto& r : rep.rows) {
    rep.miou += r.iou;
    rep.macc += r.recall;
    rep.oracle_miou += r.oracle_iou;
    errs.push_back(r.centroid_err);
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.miou /= n;
  rep.macc /= n;
  rep.oracle_miou /= n;
  rep.gap = rep.oracle_miou - rep.miou;
  rep.centroid_mean = 0;
  for (double e : errs) rep.centroid_mean += e;
  rep.centroid_mean /= n;
  std::sort(errs.begin(), errs.end());
  rep.centroid_median = errs[(errs.size() - 1) / 2];
  return rep;
}

EvalReport evaluate(const gasa::GasaModel<float>& model, const scenegen::Dataset& dataset,
                    const EvalProtocol& proto, const std::vector<int>* scene_subset,
                    int threads) {
  std::vector<int> scenes;
  if (scene_subset) {
    scenes = *scene_subset;
  } else {
    for (int i = 0; i < static_cast<int>(dataset.scenes.size()); ++i) scenes.push_back(i);
  }

  struct Task {
    int scene;
    std::uint16_t instance;
  };
  std::vector<Task> tasks;
  for (int si : scenes) {
    const auto& sample = dataset.scenes[si];
    std::vector<std::uint16_t> ids;
    for (const auto& o : sample.objects) ids.push_back(o.instance_id);
    if (proto.sample_objects > 0 && static_cast<int>(ids.size()) > proto.sample_objects) {
      num::Rng rng = num::Rng::split(proto.seed, static_cast<std::uint64_t>(si));
      for (std::size_t i = ids.size() - 1; i > 0; --i) {
        const auto j = rng.next_u32(static_cast<std::uint32_t>(i + 1));
        std::swap(ids[i], ids[j]);
      }
      ids.resize(proto.sample_objects);
      std::sort(ids.begin(), ids.end());
    }
    for (auto id : ids) tasks.push_back({si, id});
  }

  std::vector<PerObjectRow> rows(tasks.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    int cached_scene = -1;
    std::vector<gasa::TokenGridView> grids;
    std::vector<geom::PointMap> pointmaps;
    gasa::EncoderMemory<float> memory;
    for (std::size_t t = begin; t < end; ++t) {
      const auto& sample = dataset.scenes[tasks[t].scene];
      if (tasks[t].scene != cached_scene) {
        cached_scene = tasks[t].scene;
        grids = scenegen::tokenize_sample(sample, proto.token_block);
        pointmaps.clear();
        for (const auto& view : sample.views) pointmaps.push_back(scenegen::view_pointmap(view));
        memory = gasa::build_memory(model, grids, static_cast<gasa::MemoryTrace<float>*>(nullptr));
      }
      const auto& obj = [&]() -> const scenegen::ObjectSpec& {
        for (const auto& o : sample.objects)
          if (o.instance_id == tasks[t].instance) return o;
        return sample.objects.front();
      }();
      const std::string& class_name = dataset.classes.classes[obj.class_id].name;

      // spatially qualified prompt for multi-instance classes
      std::string prompt = class_name;
      if (proto.use_spatial_queries) {
        std::vector<std::uint16_t> same_class;
        const auto& view0 = sample.views[0];
        for (const auto& o : sample.objects) {
          if (o.class_id != obj.class_id) continue;
          for (auto id : view0.instance_ids)
            if (id == o.instance_id) {
              same_class.push_back(o.instance_id);
              break;
            }
        }
        const auto pos = std::find(same_class.begin(), same_class.end(), obj.instance_id);
        if (same_class.size() >= 2 && pos != same_class.end()) {
          const auto cands = spatial::gt_candidates(view0, same_class);
          const auto valid = spatial::valid_qualifiers(
              cands, static_cast<std::size_t>(pos - same_class.begin()), 0.01);
          if (!valid.empty()) prompt = spatial::canonical_phrase(valid.front()) + " " + class_name;
        }
      }
      auto query = spatial::parse_query(prompt);

      num::Tensor<float> text({1, static_cast<std::size_t>(dataset.feature_dim)});
      const int cls = dataset.classes.find(query.base_noun);
      if (cls >= 0) {
        const auto& emb = dataset.classes.classes[cls].embedding;
        for (std::size_t i = 0; i < emb.size(); ++i) text[i] = emb[i];
      }
      auto pred = gasa::decode(model, memory, text, query.embedding_index(), &pointmaps,
                               static_cast<gasa::DecodeTrace<float>*>(nullptr));
      rows[t] = evaluate_object(pred, sample, tasks[t].instance, query, proto, pointmaps);
    }
  };

  if (threads <= 1 || tasks.size() < 2) {
    worker(0, tasks.size());
  } else {
    // scene-contiguous chunks; rows land at fixed indices so the result is
    // identical for any thread count
    const int nthreads = std::min<int>(threads, 8);
    std::vector<std::thread> pool;
    const std::size_t chunk = (tasks.size() + nthreads - 1) / nthreads;
    for (int k = 0; k < nthreads; ++k) {
      const std::size_t b = k * chunk;
      const std::size_t e = std::min(tasks.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return aggregate_rows(std::move(rows));
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "mIoU %.4f  mAcc %.4f  oracle mIoU %.4f  gap %.4f  centroid L2 mean %.3f m "
                "median %.3f m  (%zu object queries)",
                miou, macc, oracle_miou, gap, centroid_mean, centroid_median, rows.size());
  os << buf;
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["miou"] = miou;
  j["macc"] = macc;
  j["oracle_miou"] = oracle_miou;
  j["gap"] = gap;
  j["centroid_mean"] = centroid_mean;
  j["centroid_median"] = centroid_median;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"scene", r.scene},
                         {"instance", r.instance},
                         {"prompt", r.prompt},
                         {"iou", r.iou},
                         {"oracle_iou", r.oracle_iou},
                         {"recall", r.recall},
                         {"centroid_err", r.centroid_err},
                         {"selected_query", r.selected_query},
                         {"spatial_query", r.spatial_query}});
  }
  return j.dump(1);
}

}  // namespace geoseg::harness
