#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "skdf/geometry.hpp"
#include "skdf/rng.hpp"

using namespace skdf;

namespace {

BoxCCWH random_box(Rng& rng) {
  const double w = rng.uniform(0.05, 0.4);
  const double h = rng.uniform(0.05, 0.4);
  return BoxCCWH(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), w, h);
}

}  // namespace

TEST_CASE("iou fixtures") {
  BoxCCWH a(0.5, 0.5, 0.2, 0.2);
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));

  BoxCCWH far(0.1, 0.1, 0.05, 0.05);
  CHECK(iou(a, far) == 0.0);

  // Corners (0.4,0.4)-(0.6,0.6) vs (0.5,0.4)-(0.7,0.6): hand-computed 1/3.
  BoxCCWH left = BoxCCWH::from_corners(0.4, 0.4, 0.6, 0.6);
  BoxCCWH right = BoxCCWH::from_corners(0.5, 0.4, 0.7, 0.6);
  CHECK(iou(left, right) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(BoxCCWH(0.5, 0.5, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(BoxCCWH(0.5, 0.5, 0.1, -0.2), std::invalid_argument);
}

TEST_CASE("giou fixtures") {
  BoxCCWH a(0.5, 0.5, 0.2, 0.2);
  CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-15));

  // Diagonal corner-touching pair: enclosing 1, union 0.5, IoU 0 -> -0.5.
  BoxCCWH tl = BoxCCWH::from_corners(0.0, 0.0, 0.5, 0.5);
  BoxCCWH br = BoxCCWH::from_corners(0.5, 0.5, 1.0, 1.0);
  CHECK(giou(tl, br) == doctest::Approx(-0.5).epsilon(1e-12));

  // Overlap fixture where the enclosing box equals the union hull: 1/3.
  BoxCCWH left = BoxCCWH::from_corners(0.4, 0.4, 0.6, 0.6);
  BoxCCWH right = BoxCCWH::from_corners(0.5, 0.4, 0.7, 0.6);
  CHECK(giou(left, right) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("giou properties against iou") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    BoxCCWH a = random_box(rng);
    BoxCCWH b = random_box(rng);
    const double gi = giou(a, b);
    const double io = iou(a, b);
    CHECK(gi <= io + 1e-15);
    CHECK(gi >= -1.0);
    CHECK(gi <= 1.0);
    CHECK(io >= 0.0);
    CHECK(io <= 1.0);
    CHECK(gi == doctest::Approx(giou(b, a)).epsilon(1e-14));
    CHECK(io == doctest::Approx(iou(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("giou_rows matches scalar giou and its gradient matches finite differences") {
  Rng rng(29);
  for (int rep = 0; rep < 100; ++rep) {
    BoxCCWH a = random_box(rng);
    BoxCCWH b = random_box(rng);
    // Exclude near-degenerate corner-touching configurations from the
    // differentiability check.
    if (std::fabs(iou(a, b)) < 1e-3 && giou(a, b) > -1e-3) continue;

    std::vector<double> av{a.cx, a.cy, a.w, a.h};
    std::vector<double> bv{b.cx, b.cy, b.w, b.h};

    ad::Tape tape;
    ad::Tensor ta = tape.leaf({1, 4}, av);
    ad::Tensor g = giou_rows(ta, ad::Tensor::constant({1, 4}, bv));
    CHECK(g.value() == doctest::Approx(giou(a, b)).epsilon(1e-12));

    tape.backward(ad::sum(g));
    auto analytic = tape.grad(ta);
    auto f = [&](const std::vector<double>& x) {
      ad::Tape t2;
      ad::Tensor l = t2.leaf({1, 4}, x);
      return ad::sum(giou_rows(l, ad::Tensor::constant({1, 4}, bv))).value();
    };
    auto fd = oracles::finite_difference_gradient(f, av);
    CHECK(oracles::max_rel_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("nms fixtures") {
  SUBCASE("high-overlap pair keeps the higher score") {
    BoxCCWH a(0.5, 0.5, 0.2, 0.2);
    BoxCCWH b(0.51, 0.5, 0.2, 0.2);
    REQUIRE(iou(a, b) > 0.5);
    auto kept = nms({{a, 0.9}, {b, 0.8}}, 0.5);
    CHECK(kept == std::vector<int>{0});
  }
  SUBCASE("disjoint boxes all survive") {
    auto kept = nms({{BoxCCWH(0.2, 0.2, 0.1, 0.1), 0.3},
                     {BoxCCWH(0.5, 0.5, 0.1, 0.1), 0.9},
                     {BoxCCWH(0.8, 0.8, 0.1, 0.1), 0.5}},
                    0.5);
    CHECK(kept.size() == 3);
  }
  SUBCASE("empty input yields empty output") { CHECK(nms({}, 0.5).empty()); }
  SUBCASE("score ties break toward the lower index") {
    BoxCCWH a(0.5, 0.5, 0.2, 0.2);
    BoxCCWH b(0.52, 0.5, 0.2, 0.2);
    auto kept = nms({{a, 0.7}, {b, 0.7}}, 0.5);
    CHECK(kept == std::vector<int>{0});
  }
  SUBCASE("invalid threshold rejected") { CHECK_THROWS_AS(nms({}, 1.0), std::invalid_argument); }
}

TEST_CASE("nms equals the reference implementation on random scenes") {
  Rng rng(41);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::pair<BoxCCWH, double>> boxes;
    const int n = 20;
    for (int i = 0; i < n; ++i) boxes.emplace_back(random_box(rng), rng.uniform(0.0, 1.0));
    const double thr = rng.uniform(0.2, 0.8);
    CHECK(nms(boxes, thr) == oracles::reference_nms(boxes, thr));
  }
}

TEST_CASE("nms is idempotent") {
  Rng rng(43);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::pair<BoxCCWH, double>> boxes;
    for (int i = 0; i < 12; ++i) boxes.emplace_back(random_box(rng), rng.uniform(0.0, 1.0));
    const double thr = 0.5;
    auto kept = nms(boxes, thr);
    std::vector<std::pair<BoxCCWH, double>> survivors;
    for (int idx : kept) survivors.push_back(boxes[static_cast<std::size_t>(idx)]);
    auto again = nms(survivors, thr);
    CHECK(again.size() == survivors.size());
  }
}
