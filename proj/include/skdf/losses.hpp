#pragma once

#include <vector>

#include "skdf/matching.hpp"
#include "skdf/supervision_types.hpp"
#include "skdf/tensor.hpp"

namespace skdf {

/// Sigmoid focal loss hyperparameters. alpha applies to the hard form
/// only; the soft (quality-focal) form ignores it.
struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] inside the focal
/// losses so the logs stay finite.
inline constexpr double kProbEps = 1e-12;

/// Hard-target sigmoid focal loss for y in {0,1}.
double focal_hard(double p, int y, const FocalParams& fp);

/// Soft-target (quality-focal) form: |t - p|^gamma * BCE(p, t).
/// Continuous in t, zero iff p == t, and equal to the alpha=1 hard form
/// at t in {0,1}.
double focal_soft(double p, double t, double gamma);

/// Elementwise tensor forms; y / t are plain constants of p's shape.
ad::Tensor focal_hard_t(const ad::Tensor& p, const ad::Tensor& y, const FocalParams& fp);
ad::Tensor focal_soft_t(const ad::Tensor& p, const ad::Tensor& t, double gamma);

struct LossWeights {
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  /// Apply the lambdas inside the distilled box loss too. Off by default:
  /// the distilled box loss is computed with unit weights as written.
  bool weighted_kd_box = false;
  /// When false, the distilled and pseudo slots use the same loss forms
  /// as ground-truth supervision (full-weight regression, hard focal
  /// targets, count normalizers) -- the ablation's "DW off" mode.
  bool down_weight = true;
};

struct LossDiagnostics {
  int zero_denominator_events = 0;
};

/// One scene's differentiable detector outputs.
struct DetectionOutputs {
  ad::Tensor boxes;      // [M, 4] ccwh
  ad::Tensor box_score;  // [M, 1]
  ad::Tensor cls;        // [M, C+1], last channel = unknown
};

struct LossValues {
  double l_r = 0, l_bs = 0, l_cls = 0;
  double l_r_kd = 0, l_bs_kd = 0, l_cls_kd = 0, l_cls_p = 0;
  double total = 0;
};

struct LossBreakdown {
  ad::Tensor l_r, l_bs, l_cls;
  ad::Tensor l_r_kd, l_bs_kd, l_cls_kd, l_cls_p;
  ad::Tensor total;

  LossValues values() const;
};

/// Confidence-scaled box loss over distilled pairs:
/// (1/K) sum S_hat * (||b - b_hat||_1 + 1 - GIoU).
ad::Tensor kd_box_loss(const ad::Tensor& boxes, const std::vector<SupervisionLabel>& labels,
                       const std::vector<std::pair<int, int>>& kd_pairs, const LossWeights& lw);

/// Stop-gradient context for the down-weight losses: the normalizers and
/// the pseudo targets are values, not graph nodes, so gradients can never
/// flow into them. Computed once per scene from the prediction values.
struct DownWeightContext {
  double kd_bs_norm = 0.0;       // sum over kd-matched queries of |bs_i|
  double kd_cls_norm = 0.0;      // sum over kd-matched queries of ||cls_i||_1
  double pseudo_cls_norm = 0.0;  // same over the pseudo queries
  std::vector<double> pseudo_targets;  // bs values of the pseudo queries
};

DownWeightContext make_down_weight_context(const DetectionOutputs& out,
                                           const std::vector<std::pair<int, int>>& kd_pairs,
                                           const std::vector<int>& pseudo);

/// Soft-focal box-score loss over distilled pairs, normalized by the
/// detached sum of their box scores.
ad::Tensor kd_boxscore_loss(const ad::Tensor& box_score, const std::vector<SupervisionLabel>& labels,
                            const std::vector<std::pair<int, int>>& kd_pairs, double kd_bs_norm,
                            const FocalParams& fp, const LossWeights& lw, LossDiagnostics* diag);

/// Soft-focal unknown-channel loss over distilled pairs, normalized by
/// the detached sum of their class-vector L1 norms.
ad::Tensor kd_cls_loss(const ad::Tensor& cls, const std::vector<SupervisionLabel>& labels,
                       const std::vector<std::pair<int, int>>& kd_pairs, double kd_cls_norm, const FocalParams& fp,
                       const LossWeights& lw, LossDiagnostics* diag);

/// Pseudo-label loss: unknown channel pulled toward the detached box
/// score of each selected query.
ad::Tensor pseudo_cls_loss(const ad::Tensor& cls, const std::vector<int>& pseudo,
                           const std::vector<double>& pseudo_targets, double pseudo_cls_norm, const FocalParams& fp,
                           const LossWeights& lw, LossDiagnostics* diag);

struct KnownLosses {
  ad::Tensor l_r, l_bs, l_cls;
};

/// Ground-truth losses: weighted L1+GIoU over GT pairs; hard focal for
/// box score and classification with one-hot targets on GT-matched
/// queries and all-background targets on unmatched queries. Queries
/// matched to distilled labels are excluded (their supervision lives in
/// the kd slots).
KnownLosses known_loss(const DetectionOutputs& out, const std::vector<SupervisionLabel>& labels,
                       const Assignment& assignment, const FocalParams& fp, const LossWeights& lw);

/// Full per-scene loss (the seven-term sum). When ctx is null the
/// stop-gradient context is derived from the outputs' current values.
LossBreakdown detection_loss(const DetectionOutputs& out, const std::vector<SupervisionLabel>& labels,
                             const Assignment& assignment, const std::vector<int>& pseudo, const FocalParams& fp,
                             const LossWeights& lw, LossDiagnostics* diag = nullptr,
                             const DownWeightContext* ctx = nullptr);

}  // namespace skdf
