#include "skdf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "skdf/rng.hpp"

namespace skdf {

Teacher Teacher::oracle(const TeacherNoise& noise, const SupervisionConfig& sup, std::uint64_t seed) {
  Teacher t;
  t.mode_ = Mode::kOracle;
  t.noise_ = noise;
  t.sup_ = sup;
  t.seed_ = seed;
  return t;
}

Teacher Teacher::from_file(const std::filesystem::path& path, const SupervisionConfig& sup) {
  Teacher t;
  t.mode_ = Mode::kFile;
  t.sup_ = sup;
  t.file_ = load_teacher_detections(path);
  return t;
}

Teacher Teacher::off(const SupervisionConfig& sup) {
  Teacher t;
  t.mode_ = Mode::kOff;
  t.sup_ = sup;
  return t;
}

std::vector<TeacherDetection> Teacher::detections(const SceneAnnotation& scene) const {
  switch (mode_) {
    case Mode::kOracle:
      return teacher_oracle(scene, noise_, seed_);
    case Mode::kFile: {
      auto it = file_.find(scene.scene_id);
      return it == file_.end() ? std::vector<TeacherDetection>{} : it->second;
    }
    case Mode::kOff:
      return {};
  }
  return {};
}

AlignmentMap identity_alignment(const std::vector<std::string>& known) {
  AlignmentMap map;
  for (const auto& name : known) map.set(name, name);
  return map;
}

TaskContext build_task_context(const Dataset& dataset, const std::vector<std::string>& known,
                               const std::vector<std::string>& annotated_categories,
                               const std::vector<std::string>& scene_ids) {
  std::map<std::string, int> channel_of;
  for (std::size_t i = 0; i < known.size(); ++i) channel_of[known[i]] = static_cast<int>(i);
  for (const auto& c : annotated_categories) {
    if (!channel_of.count(c))
      throw std::invalid_argument("build_task_context: annotated category '" + c + "' is not in the known set");
  }

  TaskContext ctx;
  ctx.known = known;
  ctx.alignment = identity_alignment(known);
  std::set<std::string> annotated(annotated_categories.begin(), annotated_categories.end());
  for (const auto& id : scene_ids) {
    const auto& scene = dataset.scene_by_id(id);
    TrainScene ts;
    ts.full = scene;
    for (const auto& inst : scene.instances) {
      if (annotated.count(inst.category))
        ts.gt.push_back(SupervisionLabel::ground_truth(inst.box, channel_of.at(inst.category)));
    }
    ts.image = load_scene_image(dataset, scene);
    ctx.scenes.push_back(std::move(ts));
  }
  return ctx;
}

namespace {

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  int step = 0;
};

double global_norm(const std::map<std::string, std::vector<double>>& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

TrainResult train_task(Detector& model, const TaskContext& ctx, const Teacher& teacher, const TrainConfig& cfg,
                       int epochs, double lr_factor, const std::string& phase_tag) {
  TrainResult result;
  if (ctx.scenes.empty() || epochs <= 0) return result;
  if (cfg.batch_size <= 0) throw std::invalid_argument("train_task: batch_size must be positive");

  AdamState adam;
  for (const auto& [name, p] : model.params().items()) {
    adam.m[name].assign(p.value.size(), 0.0);
    adam.v[name].assign(p.value.size(), 0.0);
  }

  Rng shuffle_rng(Rng::derive(cfg.seed, "shuffle/" + phase_tag));
  const double lr = cfg.lr * lr_factor;
  int iteration = 0;

  std::map<std::string, std::vector<double>> grads;
  for (const auto& [name, p] : model.params().items()) grads[name].assign(p.value.size(), 0.0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<int> order(ctx.scenes.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int batch = static_cast<int>(end - start);

      for (auto& [name, g] : grads) std::fill(g.begin(), g.end(), 0.0);

      IterationLog row;
      row.iteration = iteration;
      row.epoch = epoch;
      LossValues sums;

      for (std::size_t bi = start; bi < end; ++bi) {
        const TrainScene& scene = ctx.scenes[static_cast<std::size_t>(order[bi])];

        std::vector<SupervisionLabel> labels = scene.gt;
        if (teacher.active()) {
          labels = build_supervision(scene.gt, teacher.detections(scene.full), ctx.alignment, ctx.known,
                                     teacher.supervision());
        }
        int n_distilled = 0;
        for (const auto& l : labels)
          if (l.source == LabelSource::kDistilled) ++n_distilled;
        if (!teacher.active() && n_distilled > 0)
          throw std::logic_error("train_task: distilled labels appeared with the teacher disabled");

        auto fwd = model.forward(scene.image);
        PredictionSet preds = fwd.predictions();

        Assignment assignment;
        if (!labels.empty()) {
          if (static_cast<int>(labels.size()) > static_cast<int>(preds.size()))
            throw std::runtime_error("train_task: scene " + scene.full.scene_id + " carries " +
                                     std::to_string(labels.size()) + " labels but the model has only " +
                                     std::to_string(preds.size()) + " queries");
          assignment = hungarian(build_cost_matrix(labels, preds, cfg.match_weights));
        } else {
          assignment.unmatched_predictions.resize(preds.size());
          std::iota(assignment.unmatched_predictions.begin(), assignment.unmatched_predictions.end(), 0);
        }

        std::vector<double> box_scores(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) box_scores[i] = preds[i].box_score;
        std::vector<int> pseudo = select_pseudo(box_scores, assignment, cfg.k_pseudo);
        if (cfg.k_pseudo == 0 && !pseudo.empty())
          throw std::logic_error("train_task: pseudo labels appeared with k = 0");

        auto lb = detection_loss(fwd.outputs, labels, assignment, pseudo, cfg.focal, cfg.loss_weights,
                                 &result.diagnostics);
        const LossValues v = lb.values();
        if (!std::isfinite(v.total)) {
          result.aborted = true;
          std::ostringstream os;
          os << "non-finite loss at iteration " << iteration << " (epoch " << epoch << ", scene "
             << scene.full.scene_id << "): l_r=" << v.l_r << " l_bs=" << v.l_bs << " l_cls=" << v.l_cls
             << " l_r_kd=" << v.l_r_kd << " l_bs_kd=" << v.l_bs_kd << " l_cls_kd=" << v.l_cls_kd
             << " l_cls_p=" << v.l_cls_p;
          result.abort_reason = os.str();
          for (std::size_t bj = start; bj < end; ++bj)
            result.abort_scene_ids.push_back(ctx.scenes[static_cast<std::size_t>(order[bj])].full.scene_id);
          return result;  // parameters still hold the last good state
        }

        fwd.tape->backward(lb.total);
        for (auto& [name, g] : grads) {
          const auto pg = fwd.tape->grad(fwd.leaves.at(name));
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += pg[i] / batch;
        }

        sums.l_r += v.l_r / batch;
        sums.l_bs += v.l_bs / batch;
        sums.l_cls += v.l_cls / batch;
        sums.l_r_kd += v.l_r_kd / batch;
        sums.l_bs_kd += v.l_bs_kd / batch;
        sums.l_cls_kd += v.l_cls_kd / batch;
        sums.l_cls_p += v.l_cls_p / batch;
        sums.total += v.total / batch;
        row.n_distilled += n_distilled;
        row.n_pseudo += static_cast<int>(pseudo.size());
      }

      row.losses = sums;
      row.grad_norm = global_norm(grads);
      if (cfg.grad_clip > 0.0 && row.grad_norm > cfg.grad_clip) {
        row.clipped = true;
        const double scale = cfg.grad_clip / row.grad_norm;
        for (auto& [name, g] : grads)
          for (double& x : g) x *= scale;
      }

      ++adam.step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, adam.step);
      const double bc2 = 1.0 - std::pow(cfg.beta2, adam.step);
      for (auto& [name, p] : model.params().items()) {
        auto& m = adam.m[name];
        auto& v2 = adam.v[name];
        const auto& g = grads[name];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
          v2[i] = cfg.beta2 * v2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
          const double mhat = m[i] / bc1;
          const double vhat = v2[i] / bc2;
          p.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * p.value[i]);
        }
      }

      result.log.push_back(row);
      ++iteration;
    }
  }
  return result;
}

std::vector<std::string> ExemplarStore::all_scene_ids() const {
  std::set<std::string> ids;
  for (const auto& [category, scenes] : per_category) ids.insert(scenes.begin(), scenes.end());
  return {ids.begin(), ids.end()};
}

void ExemplarStore::merge(const ExemplarStore& other) {
  for (const auto& [category, scenes] : other.per_category) per_category[category] = scenes;
}

ExemplarStore select_exemplars(const Dataset& dataset, const std::vector<std::string>& scene_ids,
                               const std::vector<std::string>& categories, int budget,
                               std::vector<std::string>* warnings) {
  ExemplarStore store;
  if (budget <= 0) return store;
  for (const auto& category : categories) {
    std::vector<std::pair<int, int>> counted;  // (instance count, scene index)
    for (std::size_t si = 0; si < scene_ids.size(); ++si) {
      const auto& scene = dataset.scene_by_id(scene_ids[si]);
      int count = 0;
      for (const auto& inst : scene.instances)
        if (inst.category == category) ++count;
      if (count > 0) counted.emplace_back(count, static_cast<int>(si));
    }
    if (counted.empty()) {
      if (warnings) warnings->push_back("no scenes contain category '" + category + "'");
      store.per_category[category] = {};
      continue;
    }
    std::sort(counted.begin(), counted.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (static_cast<int>(counted.size()) > budget) counted.resize(static_cast<std::size_t>(budget));
    auto& chosen = store.per_category[category];
    for (const auto& [count, si] : counted) chosen.push_back(scene_ids[static_cast<std::size_t>(si)]);
  }
  return store;
}

IncrementResult increment_task(Detector& model, const Dataset& dataset, const TaskSplit& split, int task_index,
                               ExemplarStore& store, const Teacher& teacher, const TrainConfig& cfg) {
  if (task_index <= 0 || task_index >= static_cast<int>(split.tasks.size()))
    throw std::invalid_argument("increment_task: task index out of range");
  const TaskSpec& task = split.tasks[static_cast<std::size_t>(task_index)];

  model.expand_known_channels(static_cast<int>(task.known.size()),
                              Rng::derive(cfg.seed, "expand/task" + std::to_string(task_index)));

  IncrementResult result;
  TaskContext new_ctx = build_task_context(dataset, task.known, task.group, task.train_scenes);
  result.new_task =
      train_task(model, new_ctx, teacher, cfg, cfg.epochs, 1.0, "task" + std::to_string(task_index));
  if (result.new_task.aborted) return result;

  ExemplarStore new_exemplars =
      select_exemplars(dataset, task.train_scenes, task.group, cfg.exemplars_per_class, nullptr);
  store.merge(new_exemplars);

  if (cfg.replay && cfg.finetune_epochs > 0) {
    // Replay fine-tune on the balanced exemplar set, annotated with every
    // currently known category. Distillation is off here unless asked for.
    TaskContext ft_ctx = build_task_context(dataset, task.known, task.known, store.all_scene_ids());
    Teacher off_teacher = Teacher::off(teacher.supervision());
    const Teacher& ft_teacher = cfg.distill_during_finetune ? teacher : off_teacher;
    result.finetune = train_task(model, ft_ctx, ft_teacher, cfg, cfg.finetune_epochs, cfg.finetune_lr_factor,
                                 "finetune" + std::to_string(task_index));
    result.finetuned = true;
  }
  return result;
}

std::string log_to_csv(const std::vector<IterationLog>& log, const std::string& version, std::uint64_t seed) {
  std::ostringstream os;
  os << "# skdf " << version << " seed=" << seed << "\n";
  os << "iteration,epoch,l_r,l_bs,l_cls,l_r_kd,l_bs_kd,l_cls_kd,l_cls_p,total,grad_norm,clipped,n_distilled,n_pseudo\n";
  os.precision(17);
  for (const auto& row : log) {
    os << row.iteration << ',' << row.epoch << ',' << row.losses.l_r << ',' << row.losses.l_bs << ','
       << row.losses.l_cls << ',' << row.losses.l_r_kd << ',' << row.losses.l_bs_kd << ',' << row.losses.l_cls_kd
       << ',' << row.losses.l_cls_p << ',' << row.losses.total << ',' << row.grad_norm << ',' << (row.clipped ? 1 : 0)
       << ',' << row.n_distilled << ',' << row.n_pseudo << "\n";
  }
  return os.str();
}

}  // namespace skdf
