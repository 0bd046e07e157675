#pragma once

#include <string>
#include <unordered_map>

#include "skdf/geometry.hpp"

namespace skdf {

/// Category channel sentinel for the open-world unknown class.
inline constexpr int kUnknownCategory = -1;

/// Name used for the unknown class in files and reports.
inline const std::string kUnknownName = "__unknown__";

enum class LabelSource { kGroundTruth, kDistilled, kPseudo };

const char* to_string(LabelSource source);

/// One open-world supervision target: a box, a category channel, a
/// confidence (the S-hat of the down-weight losses) and its provenance.
struct SupervisionLabel {
  BoxCCWH box;
  int category = kUnknownCategory;
  double confidence = 1.0;
  LabelSource source = LabelSource::kGroundTruth;

  static SupervisionLabel ground_truth(const BoxCCWH& box, int category);
  static SupervisionLabel distilled(const BoxCCWH& box, double confidence);
};

/// Raw output of the open-vocabulary teacher before NMS and alignment.
struct TeacherDetection {
  BoxCCWH box;
  std::string category;
  double score = 1.0;
};

/// Total map from teacher vocabulary to the target annotation space;
/// names without an entry align to the unknown class.
class AlignmentMap {
 public:
  AlignmentMap() = default;
  explicit AlignmentMap(std::unordered_map<std::string, std::string> entries) : entries_(std::move(entries)) {}

  void set(const std::string& teacher_name, const std::string& target) { entries_[teacher_name] = target; }

  /// Target category name, or kUnknownName when unmapped.
  const std::string& align(const std::string& teacher_name) const;

  const std::unordered_map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::unordered_map<std::string, std::string> entries_;
};

}  // namespace skdf
