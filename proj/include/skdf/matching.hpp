#pragma once

#include <utility>
#include <vector>

#include "skdf/prediction.hpp"
#include "skdf/supervision_types.hpp"

namespace skdf {

struct MatchWeights {
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
};

/// Pair-wise matching cost: L_r(b_hat, b) - cls(c_hat) - S_hat, where L_r
/// is the weighted L1 + GIoU regression loss and cls(c_hat) is the
/// predicted probability of the label's channel (the unknown channel for
/// distilled labels).
double match_cost(const SupervisionLabel& label, const Prediction& pred, const MatchWeights& weights);

/// Dense cost matrix with rows = supervision labels, cols = predictions.
class CostMatrix {
 public:
  CostMatrix(int rows, int cols);

  double& at(int row, int col) { return data_[static_cast<std::size_t>(row) * cols_ + col]; }
  double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * cols_ + col]; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

CostMatrix build_cost_matrix(const std::vector<SupervisionLabel>& labels, const PredictionSet& preds,
                             const MatchWeights& weights);

/// Row-complete optimal assignment plus the unmatched prediction set.
struct Assignment {
  /// (prediction_index, supervision_index), sorted by supervision index.
  std::vector<std::pair<int, int>> pairs;
  /// Ascending prediction indices not matched to any label.
  std::vector<int> unmatched_predictions;
  double total_cost = 0.0;

  bool is_matched(int prediction_index) const;
};

/// Jonker-Volgenant style augmenting-path solver, O(rows^2 * cols).
/// Requires rows <= cols and finite entries; every row gets a column.
Assignment hungarian(const CostMatrix& costs);

/// Top-k unmatched predictions by box score (Eq.-5-style pseudo labels).
/// Result is sorted by descending score with index tiebreak and is always
/// disjoint from the matched set.
std::vector<int> select_pseudo(const std::vector<double>& box_scores, const Assignment& assignment, int k);

}  // namespace skdf
