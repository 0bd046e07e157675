#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skdf/data.hpp"
#include "skdf/losses.hpp"
#include "skdf/matching.hpp"
#include "skdf/model.hpp"
#include "skdf/supervision.hpp"

namespace skdf {

struct TrainConfig {
  int epochs = 50;
  int finetune_epochs = 20;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
  double finetune_lr_factor = 0.1;
  int batch_size = 8;
  std::uint64_t seed = 1;
  int k_pseudo = 5;
  FocalParams focal;
  LossWeights loss_weights;
  MatchWeights match_weights;
  double grad_clip = 0.1;
  bool distill_during_finetune = false;
  bool replay = true;
  int exemplars_per_class = 50;  // B
};

/// Source of open-world teacher detections for a scene.
class Teacher {
 public:
  static Teacher oracle(const TeacherNoise& noise, const SupervisionConfig& sup, std::uint64_t seed);
  static Teacher from_file(const std::filesystem::path& path, const SupervisionConfig& sup);
  static Teacher off(const SupervisionConfig& sup);

  bool active() const { return mode_ != Mode::kOff; }
  const SupervisionConfig& supervision() const { return sup_; }
  std::vector<TeacherDetection> detections(const SceneAnnotation& scene) const;

 private:
  enum class Mode { kOracle, kFile, kOff };
  Mode mode_ = Mode::kOff;
  TeacherNoise noise_;
  SupervisionConfig sup_;
  std::uint64_t seed_ = 0;
  TeacherFile file_;
};

/// One training scene: the full annotation (teacher input), the
/// channel-indexed GT labels of the active task, and the pixels.
struct TrainScene {
  SceneAnnotation full;
  std::vector<SupervisionLabel> gt;
  ImageU8 image;
};

struct TaskContext {
  std::vector<std::string> known;  // K^t, channel order
  AlignmentMap alignment;          // identity over the known names by default
  std::vector<TrainScene> scenes;
};

/// Loads the task's train scenes with GT restricted to the given
/// annotation categories (the task's group under the open-world premise).
TaskContext build_task_context(const Dataset& dataset, const std::vector<std::string>& known,
                               const std::vector<std::string>& annotated_categories,
                               const std::vector<std::string>& scene_ids);

/// Identity alignment over known names; everything else stays unknown.
AlignmentMap identity_alignment(const std::vector<std::string>& known);

struct IterationLog {
  int iteration = 0;
  int epoch = 0;
  LossValues losses;
  double grad_norm = 0.0;
  bool clipped = false;
  int n_distilled = 0;
  int n_pseudo = 0;
};

struct TrainResult {
  std::vector<IterationLog> log;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> abort_scene_ids;
  LossDiagnostics diagnostics;
};

/// Down-weight training loop: supervision -> matching -> pseudo labels ->
/// seven-term loss -> clipped adaptive-moment step. Deterministic in
/// (seed, config, data). On a non-finite loss the step is rolled back and
/// the result reports the offending batch.
TrainResult train_task(Detector& model, const TaskContext& ctx, const Teacher& teacher, const TrainConfig& cfg,
                       int epochs, double lr_factor, const std::string& phase_tag);

/// Per known category, up to `budget` scenes ranked by how many instances
/// of that category they contain (index tiebreak). A scene may serve
/// several categories.
struct ExemplarStore {
  std::map<std::string, std::vector<std::string>> per_category;

  std::vector<std::string> all_scene_ids() const;
  void merge(const ExemplarStore& other);
};

ExemplarStore select_exemplars(const Dataset& dataset, const std::vector<std::string>& scene_ids,
                               const std::vector<std::string>& categories, int budget,
                               std::vector<std::string>* warnings = nullptr);

struct IncrementResult {
  TrainResult new_task;
  TrainResult finetune;
  bool finetuned = false;
};

/// Incremental update: expand the class head for the new task's
/// categories, train on the new data, then (when replay is on) fine-tune
/// at lr/10 on the balanced exemplar set covering all known categories.
IncrementResult increment_task(Detector& model, const Dataset& dataset, const TaskSplit& split, int task_index,
                               ExemplarStore& store, const Teacher& teacher, const TrainConfig& cfg);

/// Renders the training log as the CSV the CLI writes.
std::string log_to_csv(const std::vector<IterationLog>& log, const std::string& version, std::uint64_t seed);

}  // namespace skdf
