#include "skdf/supervision.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "skdf/rng.hpp"
#include "skdf/version.hpp"

namespace skdf {

using json = nlohmann::json;

std::vector<TeacherDetection> teacher_oracle(const SceneAnnotation& scene, const TeacherNoise& noise,
                                             std::uint64_t seed) {
  if (noise.recall < 0.0 || noise.recall > 1.0)
    throw std::invalid_argument("teacher_oracle: recall must lie in [0,1]");
  Rng rng(Rng::derive(seed, "teacher/" + scene.scene_id));
  std::vector<TeacherDetection> out;
  for (const auto& inst : scene.instances) {
    if (!rng.bernoulli(noise.recall)) continue;
    const BoxCCWH& b = inst.box;
    double cx = b.cx, cy = b.cy, w = b.w, h = b.h;
    if (noise.sigma > 0.0) {
      cx = std::clamp(cx + rng.normal(0.0, noise.sigma), 0.0, 1.0);
      cy = std::clamp(cy + rng.normal(0.0, noise.sigma), 0.0, 1.0);
      w = std::max(0.01, w + rng.normal(0.0, noise.sigma));
      h = std::max(0.01, h + rng.normal(0.0, noise.sigma));
    }
    const double score = rng.beta(noise.beta_a, noise.beta_b);
    out.push_back(TeacherDetection{BoxCCWH(cx, cy, w, h), inst.category, score});
  }
  return out;
}

void save_teacher_detections(const std::filesystem::path& path, const TeacherFile& detections, std::uint64_t seed) {
  json scenes = json::array();
  for (const auto& [scene_id, dets] : detections) {
    json jd = json::array();
    for (const auto& d : dets)
      jd.push_back(json{{"box_ccwh", {d.box.cx, d.box.cy, d.box.w, d.box.h}}, {"category", d.category},
                        {"score", d.score}});
    scenes.push_back(json{{"scene_id", scene_id}, {"detections", jd}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_teacher_detections: cannot open " + path.string());
  out << json{{"format", "skdf-teacher-v1"}, {"version", kVersion}, {"seed", seed}, {"scenes", scenes}}.dump(2)
      << "\n";
}

TeacherFile load_teacher_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_teacher_detections: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_teacher_detections: failed to parse " + path.string() + ": " + e.what());
  }
  if (!j.contains("scenes") || !j["scenes"].is_array())
    throw std::runtime_error("load_teacher_detections: " + path.string() + " is missing the scenes array");

  TeacherFile out;
  for (const auto& js : j["scenes"]) {
    const std::string scene_id = js.value("scene_id", std::string{});
    if (scene_id.empty()) throw std::runtime_error("load_teacher_detections: scene record without scene_id");
    auto& dets = out[scene_id];
    for (const auto& jd : js.value("detections", json::array())) {
      auto fail = [&](const std::string& field) {
        throw std::runtime_error("load_teacher_detections: scene " + scene_id + ": bad field '" + field + "'");
      };
      if (!jd.contains("box_ccwh") || !jd["box_ccwh"].is_array() || jd["box_ccwh"].size() != 4) fail("box_ccwh");
      if (!jd.contains("category") || !jd["category"].is_string()) fail("category");
      if (!jd.contains("score") || !jd["score"].is_number()) fail("score");
      const double score = jd["score"].get<double>();
      if (!(score > 0.0) || score > 1.0)
        throw std::runtime_error("load_teacher_detections: scene " + scene_id + ": score " + std::to_string(score) +
                                 " outside (0,1]");
      TeacherDetection d;
      try {
        d.box = BoxCCWH(jd["box_ccwh"][0].get<double>(), jd["box_ccwh"][1].get<double>(),
                        jd["box_ccwh"][2].get<double>(), jd["box_ccwh"][3].get<double>());
      } catch (const std::exception& e) {
        throw std::runtime_error("load_teacher_detections: scene " + scene_id + ": " + e.what());
      }
      d.category = jd["category"].get<std::string>();
      d.score = score;
      dets.push_back(std::move(d));
    }
  }
  return out;
}

void save_alignment_map(const std::filesystem::path& path, const AlignmentMap& map) {
  json entries = json::object();
  for (const auto& [from, to] : map.entries()) entries[from] = to;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_alignment_map: cannot open " + path.string());
  out << json{{"format", "skdf-align-v1"}, {"version", kVersion}, {"map", entries}}.dump(2) << "\n";
}

AlignmentMap load_alignment_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_alignment_map: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_alignment_map: failed to parse " + path.string() + ": " + e.what());
  }
  if (!j.contains("map") || !j["map"].is_object())
    throw std::runtime_error("load_alignment_map: " + path.string() + " is missing the map object");
  std::unordered_map<std::string, std::string> entries;
  for (const auto& [from, to] : j["map"].items()) {
    if (!to.is_string()) throw std::runtime_error("load_alignment_map: entry '" + from + "' must map to a string");
    entries[from] = to.get<std::string>();
  }
  return AlignmentMap(std::move(entries));
}

std::vector<SupervisionLabel> build_supervision(const std::vector<SupervisionLabel>& gt,
                                                const std::vector<TeacherDetection>& teacher, const AlignmentMap& map,
                                                const std::vector<std::string>& known_names,
                                                const SupervisionConfig& cfg) {
  for (const auto& label : gt) {
    if (label.source != LabelSource::kGroundTruth)
      throw std::invalid_argument("build_supervision: gt list contains a non-GT label");
  }
  std::set<std::string> known(known_names.begin(), known_names.end());

  std::vector<SupervisionLabel> out = gt;  // pass-through, byte-identical
  if (teacher.empty()) return out;

  std::vector<std::pair<BoxCCWH, double>> scored;
  scored.reserve(teacher.size());
  for (const auto& d : teacher) scored.emplace_back(d.box, d.score);

  for (int idx : nms(scored, cfg.nms_iou)) {
    const TeacherDetection& d = teacher[static_cast<std::size_t>(idx)];
    const std::string& aligned = map.align(d.category);
    if (known.count(aligned)) continue;  // known objects are already covered by GT
    if (cfg.drop_gt_overlap) {
      bool overlaps = false;
      for (const auto& g : gt) {
        if (iou(d.box, g.box) > cfg.gt_overlap_iou) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
    }
    out.push_back(SupervisionLabel::distilled(d.box, d.score));
  }
  return out;
}

}  // namespace skdf
