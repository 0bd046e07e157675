#include "skdf/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "skdf/version.hpp"

namespace skdf {

using json = nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) { throw std::invalid_argument("config: " + message); }

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) config_error("section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      config_error("unknown key '" + (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    config_error("failed to parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, "", {"seed", "out", "dataset", "split", "generator", "model", "train", "teacher", "eval", "version"});
  read(j, "seed", cfg.seed);
  read(j, "out", cfg.out);
  read(j, "dataset", cfg.dataset);
  read(j, "split", cfg.split);

  if (j.contains("generator")) {
    const json& g = j["generator"];
    check_keys(g, "generator",
               {"num_train", "num_test", "image_size", "min_instances", "max_instances", "min_extent", "max_extent",
                "overlap_cap", "background_noise", "max_placement_retries", "max_scene_retries", "shapes", "colors",
                "tasks"});
    read(g, "num_train", cfg.generator.base.num_train);
    read(g, "num_test", cfg.generator.base.num_test);
    read(g, "image_size", cfg.generator.base.image_size);
    read(g, "min_instances", cfg.generator.base.min_instances);
    read(g, "max_instances", cfg.generator.base.max_instances);
    read(g, "min_extent", cfg.generator.base.min_extent);
    read(g, "max_extent", cfg.generator.base.max_extent);
    read(g, "overlap_cap", cfg.generator.base.overlap_cap);
    read(g, "background_noise", cfg.generator.base.background_noise);
    read(g, "max_placement_retries", cfg.generator.base.max_placement_retries);
    read(g, "max_scene_retries", cfg.generator.base.max_scene_retries);
    read(g, "shapes", cfg.generator.base.universe.shapes);
    read(g, "colors", cfg.generator.base.universe.colors);
    read(g, "tasks", cfg.generator.tasks);
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model",
               {"image_size", "patch_size", "embed_dim", "num_queries", "encoder_layers", "decoder_layers", "heads",
                "num_known", "cascade", "reference_points"});
    read(m, "image_size", cfg.model.image_size);
    read(m, "patch_size", cfg.model.patch_size);
    read(m, "embed_dim", cfg.model.embed_dim);
    read(m, "num_queries", cfg.model.num_queries);
    read(m, "encoder_layers", cfg.model.encoder_layers);
    read(m, "decoder_layers", cfg.model.decoder_layers);
    read(m, "heads", cfg.model.heads);
    read(m, "num_known", cfg.model.num_known);
    read(m, "cascade", cfg.model.cascade);
    read(m, "reference_points", cfg.model.reference_points);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"epochs", "finetune_epochs", "lr", "beta1", "beta2", "adam_eps", "weight_decay", "finetune_lr_factor",
                "batch_size", "k_pseudo", "grad_clip", "alpha", "gamma", "lambda_l1", "lambda_giou",
                "weighted_kd_box", "down_weight", "distill_during_finetune", "replay", "exemplars_per_class"});
    read(t, "epochs", cfg.train.epochs);
    read(t, "finetune_epochs", cfg.train.finetune_epochs);
    read(t, "lr", cfg.train.lr);
    read(t, "beta1", cfg.train.beta1);
    read(t, "beta2", cfg.train.beta2);
    read(t, "adam_eps", cfg.train.adam_eps);
    read(t, "weight_decay", cfg.train.weight_decay);
    read(t, "finetune_lr_factor", cfg.train.finetune_lr_factor);
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "k_pseudo", cfg.train.k_pseudo);
    read(t, "grad_clip", cfg.train.grad_clip);
    read(t, "alpha", cfg.train.focal.alpha);
    read(t, "gamma", cfg.train.focal.gamma);
    read(t, "lambda_l1", cfg.train.loss_weights.lambda_l1);
    read(t, "lambda_giou", cfg.train.loss_weights.lambda_giou);
    read(t, "weighted_kd_box", cfg.train.loss_weights.weighted_kd_box);
    read(t, "down_weight", cfg.train.loss_weights.down_weight);
    read(t, "distill_during_finetune", cfg.train.distill_during_finetune);
    read(t, "replay", cfg.train.replay);
    read(t, "exemplars_per_class", cfg.train.exemplars_per_class);
  }

  if (j.contains("teacher")) {
    const json& t = j["teacher"];
    check_keys(t, "teacher",
               {"mode", "recall", "sigma", "beta_a", "beta_b", "file", "alignment", "nms_iou", "drop_gt_overlap",
                "gt_overlap_iou"});
    read(t, "mode", cfg.teacher.mode);
    read(t, "recall", cfg.teacher.recall);
    read(t, "sigma", cfg.teacher.sigma);
    read(t, "beta_a", cfg.teacher.beta_a);
    read(t, "beta_b", cfg.teacher.beta_b);
    read(t, "file", cfg.teacher.file);
    read(t, "alignment", cfg.teacher.alignment);
    read(t, "nms_iou", cfg.teacher.nms_iou);
    read(t, "drop_gt_overlap", cfg.teacher.drop_gt_overlap);
    read(t, "gt_overlap_iou", cfg.teacher.gt_overlap_iou);
    if (cfg.teacher.mode != "oracle" && cfg.teacher.mode != "file" && cfg.teacher.mode != "off")
      config_error("teacher.mode must be oracle, file, or off; got '" + cfg.teacher.mode + "'");
  }

  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, "eval", {"score_threshold", "nms_iou", "match_iou", "eleven_point"});
    read(e, "score_threshold", cfg.eval.score_threshold);
    read(e, "nms_iou", cfg.eval.nms_iou);
    read(e, "match_iou", cfg.eval.match_iou);
    read(e, "eleven_point", cfg.eval.eleven_point);
  }

  cfg.train.seed = cfg.seed;
  // The trainer matches with the same lambdas the losses use.
  cfg.train.match_weights.lambda_l1 = cfg.train.loss_weights.lambda_l1;
  cfg.train.match_weights.lambda_giou = cfg.train.loss_weights.lambda_giou;
  return cfg;
}

json RunConfig::to_json() const {
  return json{
      {"version", kVersion},
      {"seed", seed},
      {"out", out},
      {"dataset", dataset},
      {"split", split},
      {"generator",
       {{"num_train", generator.base.num_train},
        {"num_test", generator.base.num_test},
        {"image_size", generator.base.image_size},
        {"min_instances", generator.base.min_instances},
        {"max_instances", generator.base.max_instances},
        {"min_extent", generator.base.min_extent},
        {"max_extent", generator.base.max_extent},
        {"overlap_cap", generator.base.overlap_cap},
        {"background_noise", generator.base.background_noise},
        {"max_placement_retries", generator.base.max_placement_retries},
        {"max_scene_retries", generator.base.max_scene_retries},
        {"shapes", generator.base.universe.shapes},
        {"colors", generator.base.universe.colors},
        {"tasks", generator.tasks}}},
      {"model", model.to_json()},
      {"train",
       {{"epochs", train.epochs},
        {"finetune_epochs", train.finetune_epochs},
        {"lr", train.lr},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"adam_eps", train.adam_eps},
        {"weight_decay", train.weight_decay},
        {"finetune_lr_factor", train.finetune_lr_factor},
        {"batch_size", train.batch_size},
        {"k_pseudo", train.k_pseudo},
        {"grad_clip", train.grad_clip},
        {"alpha", train.focal.alpha},
        {"gamma", train.focal.gamma},
        {"lambda_l1", train.loss_weights.lambda_l1},
        {"lambda_giou", train.loss_weights.lambda_giou},
        {"weighted_kd_box", train.loss_weights.weighted_kd_box},
        {"down_weight", train.loss_weights.down_weight},
        {"distill_during_finetune", train.distill_during_finetune},
        {"replay", train.replay},
        {"exemplars_per_class", train.exemplars_per_class}}},
      {"teacher",
       {{"mode", teacher.mode},
        {"recall", teacher.recall},
        {"sigma", teacher.sigma},
        {"beta_a", teacher.beta_a},
        {"beta_b", teacher.beta_b},
        {"file", teacher.file},
        {"alignment", teacher.alignment},
        {"nms_iou", teacher.nms_iou},
        {"drop_gt_overlap", teacher.drop_gt_overlap},
        {"gt_overlap_iou", teacher.gt_overlap_iou}}},
      {"eval",
       {{"score_threshold", eval.score_threshold},
        {"nms_iou", eval.nms_iou},
        {"match_iou", eval.match_iou},
        {"eleven_point", eval.eleven_point}}}};
}

void RunConfig::apply_variant(const std::string& name) {
  if (name == "baseline") {
    teacher.mode = "off";
    train.loss_weights.down_weight = true;
    model.cascade = true;
  } else if (name == "distill") {
    train.loss_weights.down_weight = false;
    model.cascade = false;
  } else if (name == "distill_dw") {
    train.loss_weights.down_weight = true;
    model.cascade = false;
  } else if (name == "distill_cs") {
    train.loss_weights.down_weight = false;
    model.cascade = true;
  } else if (name == "full") {
    train.loss_weights.down_weight = true;
    model.cascade = true;
  } else {
    config_error("unknown variant '" + name +
                 "' (expected baseline, distill, distill_dw, distill_cs, or full)");
  }
}

void RunConfig::dump(const std::filesystem::path& path) const {
  std::ofstream out_file(path);
  if (!out_file) throw std::runtime_error("config dump: cannot open " + path.string());
  out_file << to_json().dump(2) << "\n";
}

}  // namespace skdf
