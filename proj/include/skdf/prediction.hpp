#pragma once

#include <vector>

#include "skdf/geometry.hpp"

namespace skdf {

/// Value snapshot of one query's outputs: box, box score, and per-channel
/// class probabilities (independent sigmoids; the last channel is the
/// unknown category).
struct Prediction {
  BoxCCWH box;
  double box_score = 0.0;
  std::vector<double> cls;

  int unknown_channel() const { return static_cast<int>(cls.size()) - 1; }
};

using PredictionSet = std::vector<Prediction>;

}  // namespace skdf
