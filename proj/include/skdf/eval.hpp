#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skdf/data.hpp"
#include "skdf/prediction.hpp"
#include "skdf/supervision_types.hpp"

namespace skdf {

/// One composed open-world detection.
struct Detection {
  std::string scene_id;
  std::string category;  // known name or kUnknownName
  double score = 0.0;
  BoxCCWH box;
};

struct EvalConfig {
  double score_threshold = 0.25;
  double nms_iou = 0.5;
  double match_iou = 0.5;
  /// All-point interpolation by default; true switches to 11-point.
  bool eleven_point = false;
};

/// Per-query argmax over the C+1 channels, threshold, then category-wise
/// NMS (the unknown channel is its own category).
std::vector<Detection> compose_inference(const PredictionSet& preds, const std::string& scene_id,
                                         const std::vector<std::string>& known_names, const EvalConfig& cfg);

struct GtBox {
  std::string scene_id;
  std::string category;  // known name or kUnknownName
  BoxCCWH box;
};

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct ApResult {
  double ap = 0.0;
  int num_gt = 0;
  int tp = 0;
  int fp = 0;
  PrCurve curve;
};

/// Score-sorted greedy one-to-one matching at IoU >= match_iou per
/// category and scene; AP by all-point (or 11-point) interpolation.
/// Categories with zero GT are absent from the result.
std::map<std::string, ApResult> average_precision(const std::vector<Detection>& detections,
                                                  const std::vector<GtBox>& gts, const EvalConfig& cfg);

struct UnknownMetrics {
  std::optional<double> u_recall;
  std::optional<double> precision;
  std::optional<double> ap;
  int total_unknown_gt = 0;
  int matched_unknown_gt = 0;
  int unknown_detections = 0;
};

/// Unknown detections are matched only against unknown GT (strict
/// category separation). u_recall is absent when there is no unknown GT;
/// precision is absent when there are no unknown detections.
UnknownMetrics unknown_metrics(const std::vector<Detection>& detections, const std::vector<GtBox>& gts,
                               const EvalConfig& cfg);

struct MetricsReport {
  int task_index = 0;
  double score_threshold = 0.25;
  std::vector<std::string> previously_known;
  std::vector<std::string> currently_known;
  std::map<std::string, double> per_category_ap;  // known categories with GT
  std::optional<double> map_previously;
  std::optional<double> map_currently;
  std::optional<double> map_both;
  UnknownMetrics unknown;
  int known_gt = 0;
  int unknown_gt = 0;
  std::map<std::string, PrCurve> pr_curves;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Full OWOD evaluation for one task: detections vs. the task's test
/// scenes, with Previously/Current/Both known mAP groupings.
MetricsReport evaluate_task(const std::vector<Detection>& detections, const std::vector<GtBox>& gts,
                            const std::vector<std::string>& previously_known,
                            const std::vector<std::string>& currently_known, int task_index, const EvalConfig& cfg);

/// Flattens a dataset's test scenes into evaluation GT with categories
/// outside the known set mapped to kUnknownName.
std::vector<GtBox> evaluation_ground_truth(const Dataset& dataset, const std::vector<std::string>& scene_ids,
                                           const std::vector<std::string>& known);

}  // namespace skdf
