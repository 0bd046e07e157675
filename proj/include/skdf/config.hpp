#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "skdf/data.hpp"
#include "skdf/eval.hpp"
#include "skdf/model.hpp"
#include "skdf/trainer.hpp"

namespace skdf {

struct TeacherSettings {
  std::string mode = "oracle";  // oracle | file | off
  double recall = 0.9;
  double sigma = 0.01;
  double beta_a = 2.0;
  double beta_b = 4.0;
  std::string file;       // precomputed detections (mode = file)
  std::string alignment;  // optional alignment-map JSON; identity over knowns otherwise
  double nms_iou = 0.5;
  bool drop_gt_overlap = true;
  double gt_overlap_iou = 0.7;

  TeacherNoise noise() const { return TeacherNoise{recall, sigma, beta_a, beta_b}; }
  SupervisionConfig supervision() const { return SupervisionConfig{nms_iou, drop_gt_overlap, gt_overlap_iou}; }
};

struct GeneratorSettings {
  GeneratorConfig base;
  /// Category groups per task; empty means one task over the whole
  /// universe. Groups must partition the universe.
  std::vector<std::vector<std::string>> tasks;
};

/// The canonical run configuration: defaults, overridden by a config
/// file, overridden by command-line flags. Unknown keys are rejected.
/// The resolved form (every key populated) is dumped beside every output
/// and is itself a valid config file.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/out";
  std::string dataset;  // dataset.json path
  std::string split;    // split.json path
  GeneratorSettings generator;
  ModelConfig model;
  TrainConfig train;
  TeacherSettings teacher;
  EvalConfig eval;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Ablation presets: baseline | distill | distill_dw | distill_cs | full.
  void apply_variant(const std::string& name);

  /// Writes the fully resolved config (plus the version string) to path.
  void dump(const std::filesystem::path& path) const;
};

}  // namespace skdf
