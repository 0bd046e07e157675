#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skdf/geometry.hpp"
#include "skdf/image.hpp"

namespace skdf {

struct Instance {
  std::string category;
  BoxCCWH box;
};

struct SceneAnnotation {
  std::string scene_id;
  std::string image_path;  // relative to the dataset root
  std::vector<Instance> instances;
};

/// Synthetic category universe: the cross product of shape kinds and
/// colors, named "<color> <shape>".
struct CategoryUniverse {
  std::vector<std::string> shapes{"square", "circle", "triangle", "bar"};
  std::vector<std::string> colors{"red", "green", "blue", "yellow"};

  std::vector<std::string> names() const;
  static void split_name(const std::string& name, std::string& color, std::string& shape);
};

struct Dataset {
  std::vector<std::string> categories;
  std::vector<SceneAnnotation> scenes;
  std::filesystem::path root;

  const SceneAnnotation& scene_by_id(const std::string& id) const;
  std::vector<std::string> scene_ids_with_prefix(const std::string& prefix) const;
};

ImageU8 load_scene_image(const Dataset& dataset, const SceneAnnotation& scene);

struct GeneratorConfig {
  int num_train = 200;
  int num_test = 50;
  int image_size = 64;
  int min_instances = 2;
  int max_instances = 6;
  double min_extent = 0.12;
  double max_extent = 0.35;
  double overlap_cap = 0.3;
  double background_noise = 0.04;
  int max_placement_retries = 40;
  int max_scene_retries = 25;
  CategoryUniverse universe;
};

struct GenerationReport {
  int regenerated_scenes = 0;
};

/// Renders one scene deterministically from its derived seed.
struct GeneratedScene {
  SceneAnnotation annotation;
  ImageU8 image;
};
GeneratedScene generate_scene(const GeneratorConfig& cfg, const std::string& scene_id, std::uint64_t dataset_seed,
                              GenerationReport* report = nullptr);

/// Writes dataset.json plus one PNG per scene under out_dir/images/.
/// Bit-identical output for identical (cfg, seed).
Dataset generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                         GenerationReport* report = nullptr);

void save_dataset(const Dataset& dataset, const std::filesystem::path& json_path, std::uint64_t seed);
Dataset load_dataset(const std::filesystem::path& json_path);

struct TaskSpec {
  std::vector<std::string> known;  // cumulative known set K^t
  std::vector<std::string> group;  // categories introduced at this task
  std::vector<std::string> train_scenes;
  std::vector<std::string> test_scenes;

  std::vector<std::string> unknown(const std::vector<std::string>& universe) const;
};

struct TaskSplit {
  std::vector<TaskSpec> tasks;

  /// Groups must partition the universe; train scenes of task t are the
  /// train ids whose scene contains at least one instance introduced at
  /// task t.
  static TaskSplit make(const std::vector<std::string>& universe, const std::vector<std::vector<std::string>>& groups,
                        const Dataset& dataset, const std::vector<std::string>& train_ids,
                        const std::vector<std::string>& test_ids);

  /// Asserts monotone known growth and disjoint known/unknown sets.
  void validate(const std::vector<std::string>& universe) const;
};

void save_split(const TaskSplit& split, const std::filesystem::path& json_path, std::uint64_t seed);
TaskSplit load_split(const std::filesystem::path& json_path, const std::vector<std::string>& universe);

/// The open-world premise: training annotations carry only the categories
/// introduced at the active task.
std::vector<Instance> training_instances(const SceneAnnotation& scene, const std::vector<std::string>& group);

/// Writes a dataset view holding task t's train scenes with annotations
/// filtered to that task's group.
void write_task_train_view(const Dataset& dataset, const TaskSplit& split, int task_index,
                           const std::filesystem::path& json_path, std::uint64_t seed);

struct DatasetStats {
  int num_scenes = 0;
  std::int64_t known_instances = 0;
  std::int64_t unknown_instances = 0;
  double avg_known = 0.0;
  double avg_unknown = 0.0;
  std::vector<double> area_bin_edges;  // instance area fractions, geometric bins
  std::vector<int> area_hist;
  std::vector<double> aspect_bin_edges;  // w/h, geometric bins
  std::vector<int> aspect_hist;
  int center_grid_size = 8;
  std::vector<int> center_grid;  // row-major center heat grid
};

DatasetStats dataset_stats(const Dataset& dataset, const std::vector<std::string>& known,
                           const std::vector<std::string>& scene_ids);

}  // namespace skdf
