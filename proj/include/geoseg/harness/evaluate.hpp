#pragma once

#include <string>
#include <vector>

#include "geoseg/gasa/decoder.hpp"
#include "geoseg/scenegen/dataset.hpp"
#include "geoseg/spatial/parser.hpp"

namespace geoseg::harness {

struct EvalProtocol {
  double mask_threshold = 0.5;
  int sample_objects = -1;  // < 0 evaluates every object in every scene
  bool use_spatial_queries = true;
  std::uint64_t seed = 0;
  int token_block = 4;
  double candidate_conf_ratio = 0.5;  // spatial-selection candidate filter
};

struct PerObjectRow {
  std::string scene;
  std::uint16_t instance = 0;
  std::string prompt;
  double iou = 0;
  double oracle_iou = 0;
  double recall = 0;
  double centroid_err = 0;
  int selected_query = 0;
  bool spatial_query = false;
};

struct EvalReport {
  double miou = 0;
  double macc = 0;
  double oracle_miou = 0;
  double gap = 0;
  double centroid_mean = 0;
  double centroid_median = 0;
  std::vector<PerObjectRow> rows;

  std::string table() const;
  std::string to_json() const;
};

// Thresholded intersection-over-union pooled across views.
double binary_iou_pooled(const std::vector<num::Tensor<float>>& pred,
                         const std::vector<num::Tensor<float>>& gt, double threshold);

// One object-query given an already-computed prediction (exposed so metric
// tests can drive it with hand-built predictions).
PerObjectRow evaluate_object(const gasa::Prediction<float>& pred,
                             const scenegen::SceneSample& sample, std::uint16_t instance,
                             const spatial::Query& query, const EvalProtocol& proto,
                             const std::vector<geom::PointMap>& pointmaps);

EvalReport aggregate_rows(std::vector<PerObjectRow> rows);

// Full evaluation: per object, a (possibly spatially qualified) prompt,
// decode, confidence- or geometry-based mask selection, IoU against the GT
// instance mask, plus the oracle (GT-best query) and the unprojection
// centroid error against the object center.
EvalReport evaluate(const gasa::GasaModel<float>& model, const scenegen::Dataset& dataset,
                    const EvalProtocol& proto, const std::vector<int>* scene_subset = nullptr,
                    int threads = 1);

}  // namespace geoseg::harness
