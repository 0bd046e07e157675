#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "skdf/matching.hpp"
#include "skdf/rng.hpp"

using namespace skdf;

namespace {

Prediction make_pred(const BoxCCWH& box, double bs, std::vector<double> cls) {
  return Prediction{box, bs, std::move(cls)};
}

CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  CostMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m.at(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

std::vector<double> flatten(const CostMatrix& m) {
  std::vector<double> out;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.push_back(m.at(r, c));
  return out;
}

}  // namespace

TEST_CASE("match_cost fixtures") {
  BoxCCWH box(0.5, 0.5, 0.2, 0.2);
  MatchWeights w;

  SUBCASE("perfect box, full class score, full confidence costs -2") {
    auto label = SupervisionLabel::ground_truth(box, 1);
    auto pred = make_pred(box, 0.9, {0.0, 1.0, 0.0});
    CHECK(match_cost(label, pred, w) == doctest::Approx(-2.0).epsilon(1e-12));
  }
  SUBCASE("confidence enters additively") {
    auto pred = make_pred(box, 0.5, {0.2, 0.3, 0.4});
    SupervisionLabel a{box, kUnknownCategory, 0.9, LabelSource::kDistilled};
    SupervisionLabel b{box, kUnknownCategory, 0.4, LabelSource::kDistilled};
    CHECK(match_cost(a, pred, w) - match_cost(b, pred, w) == doctest::Approx(-0.5).epsilon(1e-12));
  }
  SUBCASE("random pairs equal independent recomputation") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
      BoxCCWH lb(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3));
      BoxCCWH pb(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3));
      std::vector<double> cls{rng.uniform(), rng.uniform(), rng.uniform()};
      auto pred = make_pred(pb, rng.uniform(), cls);
      const double s_hat = rng.uniform(0.1, 1.0);
      SupervisionLabel label{lb, kUnknownCategory, s_hat, LabelSource::kDistilled};

      const double l1 = std::fabs(pb.cx - lb.cx) + std::fabs(pb.cy - lb.cy) + std::fabs(pb.w - lb.w) +
                        std::fabs(pb.h - lb.h);
      const double expected = w.lambda_l1 * l1 + w.lambda_giou * (1.0 - giou(pb, lb)) - cls[2] - s_hat;
      CHECK(match_cost(label, pred, w) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("monotone in confidence, class score, and regression distance") {
    auto pred = make_pred(box, 0.5, {0.2, 0.3, 0.4});
    SupervisionLabel base{box, 0, 0.5, LabelSource::kGroundTruth};
    SupervisionLabel more_conf = base;
    more_conf.confidence = 0.7;
    CHECK(match_cost(more_conf, pred, w) < match_cost(base, pred, w));

    auto better_cls = pred;
    better_cls.cls[0] = 0.9;
    CHECK(match_cost(base, better_cls, w) < match_cost(base, pred, w));

    auto shifted = pred;
    shifted.box = BoxCCWH(0.6, 0.5, 0.2, 0.2);
    CHECK(match_cost(base, shifted, w) > match_cost(base, pred, w));
  }
}

TEST_CASE("hungarian fixtures") {
  SUBCASE("1x1") {
    auto a = hungarian(from_rows({{3.5}}));
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}});
    CHECK(a.total_cost == 3.5);
    CHECK(a.unmatched_predictions.empty());
  }
  SUBCASE("3x3 fixture has minimum 5") {
    auto a = hungarian(from_rows({{4, 1, 3}, {2, 0, 5}, {3, 2, 2}}));
    CHECK(a.total_cost == doctest::Approx(5.0));
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{1, 0}, {0, 1}, {2, 2}});
  }
  SUBCASE("symmetric 2x2 picks the diagonal") {
    auto a = hungarian(from_rows({{1.0, 4.0}, {4.0, 1.0}}));
    CHECK(a.total_cost == doctest::Approx(2.0));
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  }
  SUBCASE("rows > cols rejected") {
    CHECK_THROWS_AS(hungarian(from_rows({{1.0}, {2.0}})), std::invalid_argument);
  }
  SUBCASE("non-finite entries rejected") {
    CostMatrix m(1, 2);
    m.at(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian(m), std::invalid_argument);
  }
  SUBCASE("zero rows leaves everything unmatched") {
    auto a = hungarian(CostMatrix(0, 3));
    CHECK(a.pairs.empty());
    CHECK(a.unmatched_predictions == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("hungarian equals brute force on random matrices") {
  Rng rng(59);
  for (int rows = 2; rows <= 5; ++rows) {
    for (int rep = 0; rep < 40; ++rep) {
      const int cols = rows + static_cast<int>(rng.uniform_index(3));
      CostMatrix m(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m.at(r, c) = rng.uniform(-5.0, 5.0);
      auto a = hungarian(m);
      auto [best, cols_for_rows] = oracles::brute_force_assignment(flatten(m), rows, cols);
      CHECK(a.total_cost == doctest::Approx(best).epsilon(1e-9));
      CHECK(static_cast<int>(a.pairs.size()) == rows);
      // Pairs and unmatched partition the prediction index set.
      std::vector<char> seen(static_cast<std::size_t>(cols), 0);
      for (auto [p, s] : a.pairs) seen[static_cast<std::size_t>(p)] = 1;
      for (int u : a.unmatched_predictions) {
        CHECK_FALSE(seen[static_cast<std::size_t>(u)]);
        seen[static_cast<std::size_t>(u)] = 1;
      }
      for (char s : seen) CHECK(s == 1);
    }
  }
}

TEST_CASE("adding a row constant does not change the optimal assignment set") {
  Rng rng(61);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 4;
    CostMatrix m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m.at(r, c) = rng.uniform(-2.0, 2.0);
    CostMatrix shifted = m;
    const int row = static_cast<int>(rng.uniform_index(n));
    const double delta = rng.uniform(-3.0, 3.0);
    for (int c = 0; c < n; ++c) shifted.at(row, c) += delta;

    auto [base_cost, base_asgn] = oracles::brute_force_assignment(flatten(m), n, n);
    auto a = hungarian(shifted);
    CHECK(a.total_cost == doctest::Approx(base_cost + delta).epsilon(1e-9));
  }
}

TEST_CASE("select_pseudo") {
  Assignment a;
  a.pairs = {{0, 0}};
  a.unmatched_predictions = {1, 2};

  SUBCASE("top-1 by box score") {
    CHECK(select_pseudo({0.9, 0.1, 0.8}, a, 1) == std::vector<int>{2});
  }
  SUBCASE("k = 0 selects nothing") { CHECK(select_pseudo({0.9, 0.1, 0.8}, a, 0).empty()); }
  SUBCASE("k larger than the unmatched pool saturates") {
    CHECK(select_pseudo({0.9, 0.1, 0.8}, a, 10) == std::vector<int>{2, 1});
  }
  SUBCASE("ordering is descending score with index tiebreak, disjoint from matches") {
    Assignment b;
    b.pairs = {{3, 0}};
    b.unmatched_predictions = {0, 1, 2, 4};
    auto sel = select_pseudo({0.5, 0.7, 0.5, 0.99, 0.7}, b, 4);
    CHECK(sel == std::vector<int>{1, 4, 0, 2});
    for (int s : sel) CHECK_FALSE(b.is_matched(s));
  }
  SUBCASE("negative k rejected") { CHECK_THROWS_AS(select_pseudo({0.5}, a, -1), std::invalid_argument); }
}
