#include "skdf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace skdf {

namespace {

// Deterministic detection order: score desc, then scene id, then the
// original index. Shared by AP, U-Recall, and the test oracles.
std::vector<int> score_order(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& da = dets[static_cast<std::size_t>(a)];
    const auto& db = dets[static_cast<std::size_t>(b)];
    if (da.score != db.score) return da.score > db.score;
    if (da.scene_id != db.scene_id) return da.scene_id < db.scene_id;
    return a < b;
  });
  return order;
}

// Greedy one-to-one matching in score order; returns per-detection hit
// flags and the number of matched GT boxes.
std::pair<std::vector<char>, int> greedy_match(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                                               double iou_thr) {
  std::vector<char> hit(dets.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  int matched = 0;
  for (int di : score_order(dets)) {
    const auto& d = dets[static_cast<std::size_t>(di)];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].scene_id != d.scene_id) continue;
      const double v = iou(d.box, gts[gi].box);
      if (v >= iou_thr && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      hit[static_cast<std::size_t>(di)] = 1;
      ++matched;
    }
  }
  return {hit, matched};
}

ApResult ap_single_category(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                            const EvalConfig& cfg) {
  ApResult res;
  res.num_gt = static_cast<int>(gts.size());
  auto [hit, matched] = greedy_match(dets, gts, cfg.match_iou);
  (void)matched;

  std::vector<double> recall, precision;
  int tp = 0, fp = 0;
  for (int di : score_order(dets)) {
    if (hit[static_cast<std::size_t>(di)])
      ++tp;
    else
      ++fp;
    recall.push_back(static_cast<double>(tp) / res.num_gt);
    precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  res.tp = tp;
  res.fp = fp;
  res.curve.recall = recall;
  res.curve.precision = precision;

  if (recall.empty()) return res;
  // Monotone precision envelope from the right.
  std::vector<double> envelope = precision;
  for (int i = static_cast<int>(envelope.size()) - 2; i >= 0; --i)
    envelope[static_cast<std::size_t>(i)] = std::max(envelope[static_cast<std::size_t>(i)],
                                                     envelope[static_cast<std::size_t>(i) + 1]);
  if (cfg.eleven_point) {
    double acc = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double best = 0.0;
      for (std::size_t i = 0; i < recall.size(); ++i)
        if (recall[i] >= r) {
          best = envelope[i];
          break;
        }
      acc += best;
    }
    res.ap = acc / 11.0;
  } else {
    double acc = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] > prev_recall) {
        acc += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
      }
    }
    res.ap = acc;
  }
  return res;
}

std::optional<double> group_map(const std::map<std::string, ApResult>& ap, const std::vector<std::string>& group) {
  double acc = 0.0;
  int n = 0;
  for (const auto& c : group) {
    auto it = ap.find(c);
    if (it != ap.end()) {
      acc += it->second.ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return acc / n;
}

}  // namespace

std::vector<Detection> compose_inference(const PredictionSet& preds, const std::string& scene_id,
                                         const std::vector<std::string>& known_names, const EvalConfig& cfg) {
  std::map<std::string, std::vector<std::pair<int, double>>> per_category;  // name -> (query, score)
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (p.cls.empty() || p.cls.size() != known_names.size() + 1)
      throw std::invalid_argument("compose_inference: prediction class vector does not match the known set");
    int best = 0;
    for (std::size_t c = 1; c < p.cls.size(); ++c)
      if (p.cls[c] > p.cls[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    const double score = p.cls[static_cast<std::size_t>(best)];
    if (score < cfg.score_threshold) continue;
    const std::string& name =
        best == static_cast<int>(known_names.size()) ? kUnknownName : known_names[static_cast<std::size_t>(best)];
    per_category[name].emplace_back(static_cast<int>(i), score);
  }

  std::vector<Detection> out;
  for (const auto& [name, items] : per_category) {
    std::vector<std::pair<BoxCCWH, double>> scored;
    scored.reserve(items.size());
    for (const auto& [qi, score] : items) scored.emplace_back(preds[static_cast<std::size_t>(qi)].box, score);
    for (int keep : nms(scored, cfg.nms_iou))
      out.push_back(Detection{scene_id, name, scored[static_cast<std::size_t>(keep)].second,
                              scored[static_cast<std::size_t>(keep)].first});
  }
  return out;
}

std::map<std::string, ApResult> average_precision(const std::vector<Detection>& detections,
                                                  const std::vector<GtBox>& gts, const EvalConfig& cfg) {
  std::set<std::string> categories;
  for (const auto& g : gts) categories.insert(g.category);

  std::map<std::string, ApResult> out;
  for (const auto& category : categories) {
    std::vector<Detection> cat_dets;
    for (const auto& d : detections)
      if (d.category == category) cat_dets.push_back(d);
    std::vector<GtBox> cat_gts;
    for (const auto& g : gts)
      if (g.category == category) cat_gts.push_back(g);
    out[category] = ap_single_category(cat_dets, cat_gts, cfg);
  }
  return out;
}

UnknownMetrics unknown_metrics(const std::vector<Detection>& detections, const std::vector<GtBox>& gts,
                               const EvalConfig& cfg) {
  UnknownMetrics m;
  std::vector<Detection> unk_dets;
  for (const auto& d : detections)
    if (d.category == kUnknownName) unk_dets.push_back(d);
  std::vector<GtBox> unk_gts;
  for (const auto& g : gts)
    if (g.category == kUnknownName) unk_gts.push_back(g);

  m.total_unknown_gt = static_cast<int>(unk_gts.size());
  m.unknown_detections = static_cast<int>(unk_dets.size());

  auto [hit, matched] = greedy_match(unk_dets, unk_gts, cfg.match_iou);
  m.matched_unknown_gt = matched;
  if (m.total_unknown_gt > 0)
    m.u_recall = static_cast<double>(matched) / m.total_unknown_gt;

  if (m.unknown_detections > 0) {
    int tp = 0;
    for (char h : hit) tp += h;
    m.precision = static_cast<double>(tp) / m.unknown_detections;
  }
  if (m.total_unknown_gt > 0) m.ap = ap_single_category(unk_dets, unk_gts, cfg).ap;
  return m;
}

MetricsReport evaluate_task(const std::vector<Detection>& detections, const std::vector<GtBox>& gts,
                            const std::vector<std::string>& previously_known,
                            const std::vector<std::string>& currently_known, int task_index, const EvalConfig& cfg) {
  MetricsReport report;
  report.task_index = task_index;
  report.score_threshold = cfg.score_threshold;
  report.previously_known = previously_known;
  report.currently_known = currently_known;

  auto ap = average_precision(detections, gts, cfg);
  for (const auto& [category, res] : ap) {
    if (category == kUnknownName) continue;
    report.per_category_ap[category] = res.ap;
    report.pr_curves[category] = res.curve;
  }
  std::vector<std::string> both = previously_known;
  both.insert(both.end(), currently_known.begin(), currently_known.end());
  report.map_previously = group_map(ap, previously_known);
  report.map_currently = group_map(ap, currently_known);
  report.map_both = group_map(ap, both);
  report.unknown = unknown_metrics(detections, gts, cfg);
  if (auto it = ap.find(kUnknownName); it != ap.end()) report.pr_curves[kUnknownName] = it->second.curve;
  for (const auto& g : gts) {
    if (g.category == kUnknownName)
      ++report.unknown_gt;
    else
      ++report.known_gt;
  }
  return report;
}

std::vector<GtBox> evaluation_ground_truth(const Dataset& dataset, const std::vector<std::string>& scene_ids,
                                           const std::vector<std::string>& known) {
  std::set<std::string> known_set(known.begin(), known.end());
  std::vector<GtBox> out;
  for (const auto& id : scene_ids) {
    const auto& scene = dataset.scene_by_id(id);
    for (const auto& inst : scene.instances)
      out.push_back(GtBox{id, known_set.count(inst.category) ? inst.category : kUnknownName, inst.box});
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json curves = nlohmann::json::object();
  for (const auto& [name, curve] : pr_curves)
    curves[name] = nlohmann::json{{"recall", curve.recall}, {"precision", curve.precision}};
  return nlohmann::json{{"task_index", task_index},
                        {"score_threshold", score_threshold},
                        {"previously_known", previously_known},
                        {"currently_known", currently_known},
                        {"per_category_ap", per_category_ap},
                        {"map_previously", opt(map_previously)},
                        {"map_currently", opt(map_currently)},
                        {"map_both", opt(map_both)},
                        {"u_recall", opt(unknown.u_recall)},
                        {"unknown_precision", opt(unknown.precision)},
                        {"unknown_ap", opt(unknown.ap)},
                        {"known_gt", known_gt},
                        {"unknown_gt", unknown_gt},
                        {"unknown_detections", unknown.unknown_detections},
                        {"pr_curves", curves}};
}

std::string MetricsReport::to_table() const {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("   -  ");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "Task " << (task_index + 1) << " (score threshold " << score_threshold << ")\n";
  os << "            U-Recall  Unk-Prec    Unk-AP  |  mAP Previously   Current      Both\n";
  os << "            " << fmt(unknown.u_recall) << "    " << fmt(unknown.precision) << "    " << fmt(unknown.ap)
     << "  |      " << fmt(map_previously) << "    " << fmt(map_currently) << "    " << fmt(map_both) << "\n";
  os << "GT: " << known_gt << " known / " << unknown_gt << " unknown; unknown detections: "
     << unknown.unknown_detections << "\n";
  os << "Per-category AP:\n";
  for (const auto& [category, value] : per_category_ap) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * value);
    os << "  " << category;
    for (std::size_t i = category.size(); i < 18; ++i) os << ' ';
    os << buf << "\n";
  }
  return os.str();
}

}  // namespace skdf
