#include "skdf/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace skdf {

namespace {

void validate(const BoxCCWH& b, const char* who) {
  if (!(b.w > 0.0) || !(b.h > 0.0))
    throw std::invalid_argument(std::string(who) + ": box width/height must be positive, got w=" + std::to_string(b.w) +
                                " h=" + std::to_string(b.h));
  if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0)
    throw std::invalid_argument(std::string(who) + ": box center must lie in [0,1]^2, got cx=" + std::to_string(b.cx) +
                                " cy=" + std::to_string(b.cy));
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) || !std::isfinite(b.h))
    throw std::invalid_argument(std::string(who) + ": box fields must be finite");
}

double intersection_area(const BoxCCWH& a, const BoxCCWH& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

BoxCCWH::BoxCCWH(double cx_, double cy_, double w_, double h_) : cx(cx_), cy(cy_), w(w_), h(h_) {
  validate(*this, "BoxCCWH");
}

BoxCCWH BoxCCWH::from_corners(double x0, double y0, double x1, double y1) {
  return BoxCCWH(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0);
}

double iou(const BoxCCWH& a, const BoxCCWH& b) {
  validate(a, "iou");
  validate(b, "iou");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

double giou(const BoxCCWH& a, const BoxCCWH& b) {
  validate(a, "giou");
  validate(b, "giou");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double ew = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double eh = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double enclosing = ew * eh;
  return inter / uni - (enclosing - uni) / enclosing;
}

ad::Tensor giou_rows(const ad::Tensor& a, const ad::Tensor& b) {
  using namespace ad;
  if (a.rank() != 2 || a.dim(1) != 4 || b.rank() != 2 || b.dim(1) != 4 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("giou_rows: expected matching [K,4] tensors, got " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  const int k = a.dim(0);
  const Tensor half = Tensor::scalar(0.5);
  const Tensor zero = Tensor::zeros({k, 1});

  auto corners = [&](const Tensor& box) {
    Tensor cx = slice(box, 1, 0, 1), cy = slice(box, 1, 1, 2);
    Tensor w = slice(box, 1, 2, 3), h = slice(box, 1, 3, 4);
    Tensor hw = mul(w, half), hh = mul(h, half);
    return std::array<Tensor, 6>{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh), w, h};
  };
  auto [ax0, ay0, ax1, ay1, aw, ah] = corners(a);
  auto [bx0, by0, bx1, by1, bw, bh] = corners(b);

  Tensor iw = maximum(sub(minimum(ax1, bx1), maximum(ax0, bx0)), zero);
  Tensor ih = maximum(sub(minimum(ay1, by1), maximum(ay0, by0)), zero);
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add(mul(aw, ah), mul(bw, bh)), inter);
  Tensor ew = sub(maximum(ax1, bx1), minimum(ax0, bx0));
  Tensor eh = sub(maximum(ay1, by1), minimum(ay0, by0));
  Tensor enclosing = mul(ew, eh);
  return sub(div(inter, uni), div(sub(enclosing, uni), enclosing));
}

std::vector<int> nms(const std::vector<std::pair<BoxCCWH, double>>& scored_boxes, double iou_threshold) {
  if (!(iou_threshold > 0.0) || !(iou_threshold < 1.0))
    throw std::invalid_argument("nms: iou_threshold must lie in (0,1), got " + std::to_string(iou_threshold));
  for (const auto& [box, score] : scored_boxes) {
    validate(box, "nms");
    if (!std::isfinite(score)) throw std::invalid_argument("nms: scores must be finite");
  }
  std::vector<int> order(scored_boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    return scored_boxes[static_cast<std::size_t>(lhs)].second > scored_boxes[static_cast<std::size_t>(rhs)].second;
  });

  std::vector<int> kept;
  std::vector<char> suppressed(scored_boxes.size(), 0);
  for (int idx : order) {
    if (suppressed[static_cast<std::size_t>(idx)]) continue;
    kept.push_back(idx);
    for (int other : order) {
      if (other == idx || suppressed[static_cast<std::size_t>(other)]) continue;
      if (iou(scored_boxes[static_cast<std::size_t>(idx)].first, scored_boxes[static_cast<std::size_t>(other)].first) >
          iou_threshold)
        suppressed[static_cast<std::size_t>(other)] = 1;
    }
  }
  return kept;
}

}  // namespace skdf
