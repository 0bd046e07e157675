#include "skdf/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace skdf {

double match_cost(const SupervisionLabel& label, const Prediction& pred, const MatchWeights& weights) {
  const BoxCCWH& b_hat = label.box;
  const BoxCCWH& b = pred.box;
  const double l1 = std::fabs(b.cx - b_hat.cx) + std::fabs(b.cy - b_hat.cy) + std::fabs(b.w - b_hat.w) +
                    std::fabs(b.h - b_hat.h);
  const double l_r = weights.lambda_l1 * l1 + weights.lambda_giou * (1.0 - giou(b, b_hat));
  const int channel = label.category == kUnknownCategory ? pred.unknown_channel() : label.category;
  if (channel < 0 || channel >= static_cast<int>(pred.cls.size()))
    throw std::invalid_argument("match_cost: label category channel " + std::to_string(channel) +
                                " outside prediction class vector of size " + std::to_string(pred.cls.size()));
  return l_r - pred.cls[static_cast<std::size_t>(channel)] - label.confidence;
}

CostMatrix::CostMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("CostMatrix: negative dimensions");
  data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
}

CostMatrix build_cost_matrix(const std::vector<SupervisionLabel>& labels, const PredictionSet& preds,
                             const MatchWeights& weights) {
  CostMatrix costs(static_cast<int>(labels.size()), static_cast<int>(preds.size()));
  for (int r = 0; r < costs.rows(); ++r)
    for (int c = 0; c < costs.cols(); ++c)
      costs.at(r, c) = match_cost(labels[static_cast<std::size_t>(r)], preds[static_cast<std::size_t>(c)], weights);
  return costs;
}

bool Assignment::is_matched(int prediction_index) const {
  for (const auto& [p, s] : pairs)
    if (p == prediction_index) return true;
  return false;
}

Assignment hungarian(const CostMatrix& costs) {
  const int n = costs.rows();
  const int m = costs.cols();
  if (n > m)
    throw std::invalid_argument("hungarian: rows (" + std::to_string(n) + ") exceed cols (" + std::to_string(m) + ")");
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c)
      if (!std::isfinite(costs.at(r, c))) throw std::invalid_argument("hungarian: cost matrix entries must be finite");

  Assignment out;
  if (n == 0) {
    out.unmatched_predictions.resize(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) out.unmatched_predictions[static_cast<std::size_t>(c)] = c;
    return out;
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials over rows (u) and columns (v); p[j] is the row
  // currently matched to column j, with column 0 as the virtual root.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = costs.at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    for (; j0 != 0;) {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    }
  }

  std::vector<int> col_of_row(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] > 0) col_of_row[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  std::vector<char> matched(static_cast<std::size_t>(m), 0);
  for (int r = 0; r < n; ++r) {
    const int c = col_of_row[static_cast<std::size_t>(r)];
    out.pairs.emplace_back(c, r);
    matched[static_cast<std::size_t>(c)] = 1;
    out.total_cost += costs.at(r, c);
  }
  for (int c = 0; c < m; ++c)
    if (!matched[static_cast<std::size_t>(c)]) out.unmatched_predictions.push_back(c);
  return out;
}

std::vector<int> select_pseudo(const std::vector<double>& box_scores, const Assignment& assignment, int k) {
  if (k < 0) throw std::invalid_argument("select_pseudo: k must be non-negative");
  std::vector<int> candidates = assignment.unmatched_predictions;
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    const double sa = box_scores[static_cast<std::size_t>(a)];
    const double sb = box_scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

}  // namespace skdf
