#include "skdf/supervision_types.hpp"

#include <stdexcept>

namespace skdf {

const char* to_string(LabelSource source) {
  switch (source) {
    case LabelSource::kGroundTruth:
      return "GT";
    case LabelSource::kDistilled:
      return "DISTILLED";
    case LabelSource::kPseudo:
      return "PSEUDO";
  }
  return "?";
}

SupervisionLabel SupervisionLabel::ground_truth(const BoxCCWH& box, int category) {
  if (category == kUnknownCategory || category < 0)
    throw std::invalid_argument("SupervisionLabel: ground-truth labels need a known category channel");
  return SupervisionLabel{box, category, 1.0, LabelSource::kGroundTruth};
}

SupervisionLabel SupervisionLabel::distilled(const BoxCCWH& box, double confidence) {
  if (!(confidence > 0.0) || confidence > 1.0)
    throw std::invalid_argument("SupervisionLabel: distilled confidence must lie in (0,1], got " +
                                std::to_string(confidence));
  return SupervisionLabel{box, kUnknownCategory, confidence, LabelSource::kDistilled};
}

const std::string& AlignmentMap::align(const std::string& teacher_name) const {
  auto it = entries_.find(teacher_name);
  return it == entries_.end() ? kUnknownName : it->second;
}

}  // namespace skdf
