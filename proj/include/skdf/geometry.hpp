#pragma once

#include <utility>
#include <vector>

#include "skdf/tensor.hpp"

namespace skdf {

/// Normalized center-format bounding box: (cx, cy) in [0,1], w/h > 0.
/// Derived corners may leave [0,1]; they are clipped only at rasterization.
struct BoxCCWH {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.1;
  double h = 0.1;

  BoxCCWH() = default;
  BoxCCWH(double cx_, double cy_, double w_, double h_);

  static BoxCCWH from_corners(double x0, double y0, double x1, double y1);

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
};

double iou(const BoxCCWH& a, const BoxCCWH& b);

/// IoU minus the empty fraction of the smallest enclosing box; in [-1, 1].
double giou(const BoxCCWH& a, const BoxCCWH& b);

/// Differentiable GIoU for rows of ccwh boxes: a and b are [K,4], the
/// result is [K,1]. Gradients flow through whichever operands are recorded.
ad::Tensor giou_rows(const ad::Tensor& a, const ad::Tensor& b);

/// Greedy descending-score suppression. Returns kept indices in greedy
/// order; score ties break toward the lower original index.
std::vector<int> nms(const std::vector<std::pair<BoxCCWH, double>>& scored_boxes, double iou_threshold);

}  // namespace skdf
