#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skdf/data.hpp"
#include "skdf/supervision_types.hpp"

namespace skdf {

/// Synthetic stand-in for the open-vocabulary teacher: finds a seeded
/// fraction of the scene's instances, jitters their boxes and draws
/// confidences from a Beta distribution.
struct TeacherNoise {
  double recall = 0.9;
  double sigma = 0.01;
  double beta_a = 2.0;
  double beta_b = 4.0;
};

/// Deterministic in (seed, scene_id): repeated calls and the offline
/// precompute path produce identical detections.
std::vector<TeacherDetection> teacher_oracle(const SceneAnnotation& scene, const TeacherNoise& noise,
                                             std::uint64_t seed);

using TeacherFile = std::map<std::string, std::vector<TeacherDetection>>;

void save_teacher_detections(const std::filesystem::path& path, const TeacherFile& detections, std::uint64_t seed);
TeacherFile load_teacher_detections(const std::filesystem::path& path);

void save_alignment_map(const std::filesystem::path& path, const AlignmentMap& map);
AlignmentMap load_alignment_map(const std::filesystem::path& path);

struct SupervisionConfig {
  double nms_iou = 0.5;
  /// Drop teacher boxes overlapping a ground-truth box even when their
  /// aligned name is not in the known set; guards against synthetic
  /// teacher vocabularies that miss known names.
  bool drop_gt_overlap = true;
  double gt_overlap_iou = 0.7;
};

/// Builds the open-world supervision set: ground truth passes through
/// untouched; teacher detections survive NMS, align through the map,
/// lose everything aligned to a known category, and the remainder become
/// distilled unknown labels that keep the teacher's confidence.
std::vector<SupervisionLabel> build_supervision(const std::vector<SupervisionLabel>& gt,
                                                const std::vector<TeacherDetection>& teacher, const AlignmentMap& map,
                                                const std::vector<std::string>& known_names,
                                                const SupervisionConfig& cfg);

}  // namespace skdf
