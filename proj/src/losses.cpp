#include "skdf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skdf {

using ad::Tensor;

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

Tensor zero_scalar() { return Tensor::scalar(0.0); }

// Splits assignment pairs by supervision source.
void split_pairs(const std::vector<SupervisionLabel>& labels, const Assignment& assignment,
                 std::vector<std::pair<int, int>>& gt_pairs, std::vector<std::pair<int, int>>& kd_pairs) {
  for (const auto& pr : assignment.pairs) {
    const auto& label = labels[static_cast<std::size_t>(pr.second)];
    if (label.source == LabelSource::kGroundTruth)
      gt_pairs.push_back(pr);
    else
      kd_pairs.push_back(pr);
  }
}

std::vector<int> prediction_indices(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<int> idx;
  idx.reserve(pairs.size());
  for (const auto& pr : pairs) idx.push_back(pr.first);
  return idx;
}

Tensor label_boxes_constant(const std::vector<SupervisionLabel>& labels,
                            const std::vector<std::pair<int, int>>& pairs) {
  std::vector<double> data;
  data.reserve(pairs.size() * 4);
  for (const auto& pr : pairs) {
    const BoxCCWH& b = labels[static_cast<std::size_t>(pr.second)].box;
    data.insert(data.end(), {b.cx, b.cy, b.w, b.h});
  }
  return Tensor::constant({static_cast<int>(pairs.size()), 4}, std::move(data));
}

// Weighted L1 + GIoU box loss over the given pairs, normalized by count.
Tensor box_regression_loss(const Tensor& boxes, const std::vector<SupervisionLabel>& labels,
                           const std::vector<std::pair<int, int>>& pairs, double lambda_l1, double lambda_giou) {
  const int k = static_cast<int>(pairs.size());
  Tensor rows = ad::gather_rows(boxes, prediction_indices(pairs));
  Tensor targets = label_boxes_constant(labels, pairs);
  Tensor l1_sum = ad::sum(ad::abs(ad::sub(rows, targets)));
  Tensor giou_sum = ad::sum(ad::sub(Tensor::full({k, 1}, 1.0), giou_rows(rows, targets)));
  Tensor combined = ad::add(ad::mul(Tensor::scalar(lambda_l1), l1_sum), ad::mul(Tensor::scalar(lambda_giou), giou_sum));
  return ad::mul(Tensor::scalar(1.0 / k), combined);
}

Tensor confidences_constant(const std::vector<SupervisionLabel>& labels,
                            const std::vector<std::pair<int, int>>& pairs, int repeat) {
  std::vector<double> data;
  data.reserve(pairs.size() * static_cast<std::size_t>(repeat));
  for (const auto& pr : pairs) {
    for (int r = 0; r < repeat; ++r) data.push_back(labels[static_cast<std::size_t>(pr.second)].confidence);
  }
  return Tensor::constant({static_cast<int>(pairs.size()), repeat}, std::move(data));
}

}  // namespace

double focal_hard(double p, int y, const FocalParams& fp) {
  const double pc = clamp_prob(p);
  if (y == 1) return -fp.alpha * std::pow(1.0 - pc, fp.gamma) * std::log(pc);
  return -(1.0 - fp.alpha) * std::pow(pc, fp.gamma) * std::log(1.0 - pc);
}

double focal_soft(double p, double t, double gamma) {
  const double pc = clamp_prob(p);
  const double bce = -t * std::log(pc) - (1.0 - t) * std::log(1.0 - pc);
  return std::pow(std::fabs(t - pc), gamma) * bce;
}

Tensor focal_hard_t(const Tensor& p, const Tensor& y, const FocalParams& fp) {
  Tensor pc = ad::clamp(p, kProbEps, 1.0 - kProbEps);
  Tensor one = Tensor::full(p.shape(), 1.0);
  Tensor pos = ad::mul(ad::mul(ad::pow(ad::sub(one, pc), fp.gamma), ad::log(pc)), y);
  Tensor neg = ad::mul(ad::mul(ad::pow(pc, fp.gamma), ad::log(ad::sub(one, pc))), ad::sub(one, y));
  return ad::sub(ad::mul(Tensor::scalar(-fp.alpha), pos), ad::mul(Tensor::scalar(1.0 - fp.alpha), neg));
}

Tensor focal_soft_t(const Tensor& p, const Tensor& t, double gamma) {
  Tensor pc = ad::clamp(p, kProbEps, 1.0 - kProbEps);
  Tensor one = Tensor::full(p.shape(), 1.0);
  Tensor modulator = ad::pow(ad::abs(ad::sub(t, pc)), gamma);
  Tensor bce = ad::neg(ad::add(ad::mul(t, ad::log(pc)), ad::mul(ad::sub(one, t), ad::log(ad::sub(one, pc)))));
  return ad::mul(modulator, bce);
}

Tensor kd_box_loss(const Tensor& boxes, const std::vector<SupervisionLabel>& labels,
                   const std::vector<std::pair<int, int>>& kd_pairs, const LossWeights& lw) {
  if (kd_pairs.empty()) return zero_scalar();
  const int k = static_cast<int>(kd_pairs.size());
  if (!lw.down_weight) return box_regression_loss(boxes, labels, kd_pairs, lw.lambda_l1, lw.lambda_giou);

  const double wl1 = lw.weighted_kd_box ? lw.lambda_l1 : 1.0;
  const double wgiou = lw.weighted_kd_box ? lw.lambda_giou : 1.0;
  Tensor rows = ad::gather_rows(boxes, prediction_indices(kd_pairs));
  Tensor targets = label_boxes_constant(labels, kd_pairs);
  Tensor s4 = confidences_constant(labels, kd_pairs, 4);
  Tensor s1 = confidences_constant(labels, kd_pairs, 1);
  Tensor l1_sum = ad::sum(ad::mul(s4, ad::abs(ad::sub(rows, targets))));
  Tensor giou_sum = ad::sum(ad::mul(s1, ad::sub(Tensor::full({k, 1}, 1.0), giou_rows(rows, targets))));
  Tensor combined = ad::add(ad::mul(Tensor::scalar(wl1), l1_sum), ad::mul(Tensor::scalar(wgiou), giou_sum));
  return ad::mul(Tensor::scalar(1.0 / k), combined);
}

DownWeightContext make_down_weight_context(const DetectionOutputs& out,
                                           const std::vector<std::pair<int, int>>& kd_pairs,
                                           const std::vector<int>& pseudo) {
  DownWeightContext ctx;
  const auto& bs = out.box_score.values();
  const auto& cv = out.cls.values();
  const int channels = out.cls.dim(1);
  for (const auto& [pi, si] : kd_pairs) {
    ctx.kd_bs_norm += std::fabs(bs[static_cast<std::size_t>(pi)]);
    for (int c = 0; c < channels; ++c) ctx.kd_cls_norm += std::fabs(cv[static_cast<std::size_t>(pi) * channels + c]);
  }
  for (int i : pseudo) {
    ctx.pseudo_targets.push_back(bs[static_cast<std::size_t>(i)]);
    for (int c = 0; c < channels; ++c)
      ctx.pseudo_cls_norm += std::fabs(cv[static_cast<std::size_t>(i) * channels + c]);
  }
  return ctx;
}

Tensor kd_boxscore_loss(const Tensor& box_score, const std::vector<SupervisionLabel>& labels,
                        const std::vector<std::pair<int, int>>& kd_pairs, double kd_bs_norm, const FocalParams& fp,
                        const LossWeights& lw, LossDiagnostics* diag) {
  if (kd_pairs.empty()) return zero_scalar();
  const int k = static_cast<int>(kd_pairs.size());
  Tensor rows = ad::gather_rows(box_score, prediction_indices(kd_pairs));
  if (!lw.down_weight) {
    Tensor y = Tensor::full({k, 1}, 1.0);
    return ad::mul(Tensor::scalar(1.0 / k), ad::sum(focal_hard_t(rows, y, fp)));
  }
  if (kd_bs_norm == 0.0) {
    if (diag) ++diag->zero_denominator_events;
    return zero_scalar();
  }
  Tensor targets = confidences_constant(labels, kd_pairs, 1);
  Tensor numerator = ad::sum(focal_soft_t(rows, targets, fp.gamma));
  return ad::mul(Tensor::scalar(1.0 / kd_bs_norm), numerator);
}

Tensor kd_cls_loss(const Tensor& cls, const std::vector<SupervisionLabel>& labels,
                   const std::vector<std::pair<int, int>>& kd_pairs, double kd_cls_norm, const FocalParams& fp,
                   const LossWeights& lw, LossDiagnostics* diag) {
  if (kd_pairs.empty()) return zero_scalar();
  const int k = static_cast<int>(kd_pairs.size());
  const int channels = cls.dim(1);
  const auto idx = prediction_indices(kd_pairs);
  if (!lw.down_weight) {
    Tensor rows = ad::gather_rows(cls, idx);
    std::vector<double> onehot(static_cast<std::size_t>(k) * channels, 0.0);
    for (int r = 0; r < k; ++r) onehot[static_cast<std::size_t>(r) * channels + channels - 1] = 1.0;
    return ad::mul(Tensor::scalar(1.0 / k),
                   ad::sum(focal_hard_t(rows, Tensor::constant({k, channels}, std::move(onehot)), fp)));
  }
  if (kd_cls_norm == 0.0) {
    if (diag) ++diag->zero_denominator_events;
    return zero_scalar();
  }
  Tensor unk_col = ad::slice(cls, 1, channels - 1, channels);
  Tensor rows = ad::gather_rows(unk_col, idx);
  Tensor targets = confidences_constant(labels, kd_pairs, 1);
  Tensor numerator = ad::sum(focal_soft_t(rows, targets, fp.gamma));
  return ad::mul(Tensor::scalar(1.0 / kd_cls_norm), numerator);
}

Tensor pseudo_cls_loss(const Tensor& cls, const std::vector<int>& pseudo, const std::vector<double>& pseudo_targets,
                       double pseudo_cls_norm, const FocalParams& fp, const LossWeights& lw, LossDiagnostics* diag) {
  if (pseudo.empty()) return zero_scalar();
  if (pseudo_targets.size() != pseudo.size())
    throw std::invalid_argument("pseudo_cls_loss: targets and indices must align");
  const int k = static_cast<int>(pseudo.size());
  const int channels = cls.dim(1);
  if (!lw.down_weight) {
    Tensor rows = ad::gather_rows(cls, pseudo);
    std::vector<double> onehot(static_cast<std::size_t>(k) * channels, 0.0);
    for (int r = 0; r < k; ++r) onehot[static_cast<std::size_t>(r) * channels + channels - 1] = 1.0;
    return ad::mul(Tensor::scalar(1.0 / k),
                   ad::sum(focal_hard_t(rows, Tensor::constant({k, channels}, std::move(onehot)), fp)));
  }
  if (pseudo_cls_norm == 0.0) {
    if (diag) ++diag->zero_denominator_events;
    return zero_scalar();
  }
  Tensor unk_col = ad::slice(cls, 1, channels - 1, channels);
  Tensor rows = ad::gather_rows(unk_col, pseudo);
  Tensor targets = Tensor::constant({k, 1}, pseudo_targets);
  Tensor numerator = ad::sum(focal_soft_t(rows, targets, fp.gamma));
  return ad::mul(Tensor::scalar(1.0 / pseudo_cls_norm), numerator);
}

KnownLosses known_loss(const DetectionOutputs& out, const std::vector<SupervisionLabel>& labels,
                       const Assignment& assignment, const FocalParams& fp, const LossWeights& lw) {
  const int m = out.boxes.dim(0);
  const int channels = out.cls.dim(1);

  std::vector<std::pair<int, int>> gt_pairs, kd_pairs;
  split_pairs(labels, assignment, gt_pairs, kd_pairs);
  const int n_gt = static_cast<int>(gt_pairs.size());
  const double norm = 1.0 / std::max(1, n_gt);

  KnownLosses kl;
  kl.l_r = gt_pairs.empty() ? zero_scalar()
                            : box_regression_loss(out.boxes, labels, gt_pairs, lw.lambda_l1, lw.lambda_giou);

  // Focal targets and masks: GT-matched queries are positives, unmatched
  // queries are background, distilled-matched queries are excluded.
  std::vector<double> bs_target(static_cast<std::size_t>(m), 0.0);
  std::vector<double> bs_mask(static_cast<std::size_t>(m), 1.0);
  std::vector<double> cls_target(static_cast<std::size_t>(m) * channels, 0.0);
  std::vector<double> cls_mask(static_cast<std::size_t>(m) * channels, 1.0);
  for (const auto& [pi, si] : gt_pairs) {
    bs_target[static_cast<std::size_t>(pi)] = 1.0;
    const int channel = labels[static_cast<std::size_t>(si)].category;
    if (channel < 0 || channel >= channels - 1)
      throw std::invalid_argument("known_loss: ground-truth category channel " + std::to_string(channel) +
                                  " outside the known range [0, " + std::to_string(channels - 1) + ")");
    cls_target[static_cast<std::size_t>(pi) * channels + channel] = 1.0;
  }
  for (const auto& [pi, si] : kd_pairs) {
    bs_mask[static_cast<std::size_t>(pi)] = 0.0;
    for (int c = 0; c < channels; ++c) cls_mask[static_cast<std::size_t>(pi) * channels + c] = 0.0;
  }

  Tensor bs_fl = focal_hard_t(out.box_score, Tensor::constant({m, 1}, std::move(bs_target)), fp);
  kl.l_bs = ad::mul(Tensor::scalar(norm), ad::sum(ad::mul(bs_fl, Tensor::constant({m, 1}, std::move(bs_mask)))));

  Tensor cls_fl = focal_hard_t(out.cls, Tensor::constant({m, channels}, std::move(cls_target)), fp);
  kl.l_cls =
      ad::mul(Tensor::scalar(norm), ad::sum(ad::mul(cls_fl, Tensor::constant({m, channels}, std::move(cls_mask)))));
  return kl;
}

LossValues LossBreakdown::values() const {
  LossValues v;
  v.l_r = l_r.value();
  v.l_bs = l_bs.value();
  v.l_cls = l_cls.value();
  v.l_r_kd = l_r_kd.value();
  v.l_bs_kd = l_bs_kd.value();
  v.l_cls_kd = l_cls_kd.value();
  v.l_cls_p = l_cls_p.value();
  v.total = total.value();
  return v;
}

LossBreakdown detection_loss(const DetectionOutputs& out, const std::vector<SupervisionLabel>& labels,
                             const Assignment& assignment, const std::vector<int>& pseudo, const FocalParams& fp,
                             const LossWeights& lw, LossDiagnostics* diag, const DownWeightContext* ctx) {
  std::vector<std::pair<int, int>> gt_pairs, kd_pairs;
  split_pairs(labels, assignment, gt_pairs, kd_pairs);
  DownWeightContext local;
  if (ctx == nullptr) {
    local = make_down_weight_context(out, kd_pairs, pseudo);
    ctx = &local;
  }

  LossBreakdown b;
  KnownLosses kl = known_loss(out, labels, assignment, fp, lw);
  b.l_r = kl.l_r;
  b.l_bs = kl.l_bs;
  b.l_cls = kl.l_cls;
  b.l_r_kd = kd_box_loss(out.boxes, labels, kd_pairs, lw);
  b.l_bs_kd = kd_boxscore_loss(out.box_score, labels, kd_pairs, ctx->kd_bs_norm, fp, lw, diag);
  b.l_cls_kd = kd_cls_loss(out.cls, labels, kd_pairs, ctx->kd_cls_norm, fp, lw, diag);
  b.l_cls_p = pseudo_cls_loss(out.cls, pseudo, ctx->pseudo_targets, ctx->pseudo_cls_norm, fp, lw, diag);
  b.total = ad::add(
      ad::add(ad::add(b.l_r, b.l_bs), ad::add(b.l_cls, b.l_r_kd)),
      ad::add(ad::add(b.l_bs_kd, b.l_cls_kd), b.l_cls_p));
  return b;
}

}  // namespace skdf
