#include "skdf/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "skdf/config.hpp"
#include "skdf/eval.hpp"
#include "skdf/plot.hpp"
#include "skdf/rng.hpp"
#include "skdf/version.hpp"

namespace skdf {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int verbosity() {
  const char* env = std::getenv("SKDF_LOG");
  return env ? std::atoi(env) : 1;
}

void note(const std::string& message) {
  if (verbosity() > 0) std::cerr << "[skdf] " << message << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

void write_json_artifact(const fs::path& path, json j, std::uint64_t seed) {
  j["version"] = kVersion;
  j["seed"] = seed;
  write_text(path, j.dump(2) + "\n");
}

// Flags shared by the subcommands; precedence: flags > config file > defaults.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string teacher_mode;
  int task = -1;  // 1-based task limit / selector; -1 = all
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = RunConfig::from_file(flags.config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out = flags.out;
  if (!flags.teacher_mode.empty()) {
    if (flags.teacher_mode != "oracle" && flags.teacher_mode != "file" && flags.teacher_mode != "off")
      throw std::invalid_argument("config: --teacher must be oracle, file, or off");
    cfg.teacher.mode = flags.teacher_mode;
  }
  cfg.train.seed = cfg.seed;
  cfg.train.match_weights.lambda_l1 = cfg.train.loss_weights.lambda_l1;
  cfg.train.match_weights.lambda_giou = cfg.train.loss_weights.lambda_giou;
  return cfg;
}

Dataset load_dataset_checked(const std::string& path) {
  if (path.empty()) throw DataError("no dataset configured (set 'dataset' or run generate-data first)");
  try {
    return load_dataset(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

TaskSplit load_split_checked(const std::string& path, const std::vector<std::string>& universe) {
  if (path.empty()) throw DataError("no split configured (set 'split' or run generate-data first)");
  try {
    return load_split(path, universe);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

std::uint64_t teacher_stream_seed(const RunConfig& cfg) { return Rng::derive(cfg.seed, "teacher"); }

Teacher make_teacher(const RunConfig& cfg) {
  if (cfg.teacher.mode == "oracle")
    return Teacher::oracle(cfg.teacher.noise(), cfg.teacher.supervision(), teacher_stream_seed(cfg));
  if (cfg.teacher.mode == "file") {
    if (cfg.teacher.file.empty()) throw std::invalid_argument("config: teacher.mode=file requires teacher.file");
    try {
      return Teacher::from_file(cfg.teacher.file, cfg.teacher.supervision());
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }
  return Teacher::off(cfg.teacher.supervision());
}

std::vector<std::vector<std::string>> task_groups(const RunConfig& cfg, const std::vector<std::string>& universe) {
  if (cfg.generator.tasks.empty()) return {universe};
  return cfg.generator.tasks;
}

json stats_to_json(const DatasetStats& st) {
  return json{{"num_scenes", st.num_scenes},
              {"known_instances", st.known_instances},
              {"unknown_instances", st.unknown_instances},
              {"avg_known", st.avg_known},
              {"avg_unknown", st.avg_unknown},
              {"area_bin_edges", st.area_bin_edges},
              {"area_hist", st.area_hist},
              {"aspect_bin_edges", st.aspect_bin_edges},
              {"aspect_hist", st.aspect_hist},
              {"center_grid_size", st.center_grid_size},
              {"center_grid", st.center_grid}};
}

void validate_image_size(const Dataset& dataset, const ModelConfig& model) {
  if (dataset.scenes.empty()) throw DataError("dataset has no scenes");
  ImageU8 probe = load_scene_image(dataset, dataset.scenes.front());
  if (probe.width != model.image_size || probe.height != model.image_size)
    throw DataError("dataset images are " + std::to_string(probe.width) + "x" + std::to_string(probe.height) +
                    " but model.image_size is " + std::to_string(model.image_size));
}

AlignmentMap alignment_for(const RunConfig& cfg, const std::vector<std::string>& known) {
  if (cfg.teacher.alignment.empty()) return identity_alignment(known);
  try {
    AlignmentMap map = load_alignment_map(cfg.teacher.alignment);
    // Known names still align to themselves unless the file overrides them.
    for (const auto& name : known)
      if (!map.entries().count(name)) map.set(name, name);
    return map;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

// ---------------------------------------------------------------------------
// generate-data
// ---------------------------------------------------------------------------

int cmd_generate_data(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);

  GenerationReport report;
  Dataset dataset = generate_dataset(cfg.generator.base, cfg.seed, out_dir, &report);
  note("generated " + std::to_string(dataset.scenes.size()) + " scenes (" +
       std::to_string(report.regenerated_scenes) + " regenerated for overlap)");

  const auto universe = cfg.generator.base.universe.names();
  TaskSplit split = TaskSplit::make(universe, task_groups(cfg, universe), dataset,
                                    dataset.scene_ids_with_prefix("train_"), dataset.scene_ids_with_prefix("test_"));
  save_split(split, out_dir / "split.json", cfg.seed);
  for (std::size_t t = 0; t < split.tasks.size(); ++t)
    write_task_train_view(dataset, split, static_cast<int>(t), out_dir / ("train_task" + std::to_string(t + 1) + ".json"),
                          cfg.seed);

  json stats = json::array();
  for (const auto& task : split.tasks)
    stats.push_back(stats_to_json(dataset_stats(dataset, task.known, task.test_scenes)));
  write_json_artifact(out_dir / "stats.json",
                      json{{"per_task_test_stats", stats}, {"regenerated_scenes", report.regenerated_scenes}},
                      cfg.seed);

  cfg.dataset = (out_dir / "dataset.json").string();
  cfg.split = (out_dir / "split.json").string();
  cfg.dump(out_dir / "resolved_config.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// distill-labels
// ---------------------------------------------------------------------------

int cmd_distill_labels(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  if (cfg.teacher.mode != "oracle")
    throw std::invalid_argument("config: distill-labels precomputes oracle detections; teacher.mode must be oracle");
  Dataset dataset = load_dataset_checked(cfg.dataset);
  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);

  const std::uint64_t seed = teacher_stream_seed(cfg);
  TeacherFile file;
  for (const auto& scene : dataset.scenes) file[scene.scene_id] = teacher_oracle(scene, cfg.teacher.noise(), seed);
  save_teacher_detections(out_dir / "teacher.json", file, cfg.seed);
  note("wrote teacher detections for " + std::to_string(file.size()) + " scenes");
  cfg.dump(out_dir / "resolved_config.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void write_abort_dump(const fs::path& out_dir, const TrainResult& result, std::uint64_t seed) {
  write_json_artifact(out_dir / "abort_dump.json",
                      json{{"reason", result.abort_reason}, {"batch_scenes", result.abort_scene_ids}}, seed);
}

int cmd_train(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  Dataset dataset = load_dataset_checked(cfg.dataset);
  TaskSplit split = load_split_checked(cfg.split, dataset.categories);
  validate_image_size(dataset, cfg.model);
  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);
  cfg.dump(out_dir / "resolved_config.json");

  const int task_limit =
      flags.task > 0 ? std::min<int>(flags.task, static_cast<int>(split.tasks.size())) : static_cast<int>(split.tasks.size());

  ModelConfig model_cfg = cfg.model;
  model_cfg.num_known = static_cast<int>(split.tasks[0].known.size());
  Detector model(model_cfg, Rng::derive(cfg.seed, "init"));
  Teacher teacher = make_teacher(cfg);

  auto save_phase = [&](int task_index, const TrainResult& result, const std::string& tag) {
    write_text(out_dir / ("train_task" + std::to_string(task_index + 1) + tag + ".csv"),
               log_to_csv(result.log, kVersion, cfg.seed));
  };
  auto checkpoint_path = [&](int task_index) {
    return out_dir / ("ckpt_task" + std::to_string(task_index + 1) + ".bin");
  };

  // Task 1.
  {
    const TaskSpec& task = split.tasks[0];
    TaskContext ctx = build_task_context(dataset, task.known, task.group, task.train_scenes);
    ctx.alignment = alignment_for(cfg, task.known);
    note("task 1: " + std::to_string(ctx.scenes.size()) + " train scenes, " + std::to_string(task.known.size()) +
         " known categories");
    TrainResult result = train_task(model, ctx, teacher, cfg.train, cfg.train.epochs, 1.0, "task0");
    save_phase(0, result, "");
    model.save(checkpoint_path(0), {{"seed", cfg.seed}, {"task", 1}});
    if (result.aborted) {
      write_abort_dump(out_dir, result, cfg.seed);
      throw RuntimeAbort(result.abort_reason + " (last-good checkpoint at " + checkpoint_path(0).string() + ")");
    }
  }

  ExemplarStore store = select_exemplars(dataset, split.tasks[0].train_scenes, split.tasks[0].group,
                                         cfg.train.exemplars_per_class);

  for (int t = 1; t < task_limit; ++t) {
    note("task " + std::to_string(t + 1) + ": incremental update");
    IncrementResult inc = increment_task(model, dataset, split, t, store, teacher, cfg.train);
    save_phase(t, inc.new_task, "");
    if (inc.finetuned) save_phase(t, inc.finetune, "_finetune");
    model.save(checkpoint_path(t), {{"seed", cfg.seed}, {"task", t + 1}});
    const TrainResult* aborted = inc.new_task.aborted ? &inc.new_task
                                 : (inc.finetune.aborted ? &inc.finetune : nullptr);
    if (aborted) {
      write_abort_dump(out_dir, *aborted, cfg.seed);
      throw RuntimeAbort(aborted->abort_reason + " (last-good checkpoint at " + checkpoint_path(t).string() + ")");
    }
  }

  json store_json = json::object();
  for (const auto& [category, scenes] : store.per_category) store_json[category] = scenes;
  write_json_artifact(out_dir / "exemplars.json", json{{"per_category", store_json}}, cfg.seed);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::vector<Detection> run_inference(const Detector& model, const Dataset& dataset,
                                     const std::vector<std::string>& scene_ids,
                                     const std::vector<std::string>& known, const EvalConfig& eval_cfg) {
  std::vector<Detection> detections;
  for (const auto& id : scene_ids) {
    const auto& scene = dataset.scene_by_id(id);
    auto fwd = model.forward(load_scene_image(dataset, scene));
    auto dets = compose_inference(fwd.predictions(), id, known, eval_cfg);
    detections.insert(detections.end(), dets.begin(), dets.end());
  }
  return detections;
}

MetricsReport evaluate_checkpoint(const Detector& model, const Dataset& dataset, const TaskSplit& split,
                                  int task_index, const EvalConfig& eval_cfg) {
  const TaskSpec& task = split.tasks.at(static_cast<std::size_t>(task_index));
  if (static_cast<int>(task.known.size()) != model.config().num_known)
    throw DataError("checkpoint knows " + std::to_string(model.config().num_known) + " categories but task " +
                    std::to_string(task_index + 1) + " has " + std::to_string(task.known.size()));
  auto detections = run_inference(model, dataset, task.test_scenes, task.known, eval_cfg);
  auto gts = evaluation_ground_truth(dataset, task.test_scenes, task.known);
  std::vector<std::string> previously(task.known.begin(), task.known.end() - task.group.size());
  return evaluate_task(detections, gts, previously, task.group, task_index, eval_cfg);
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint) {
  RunConfig cfg = resolve_config(flags);
  if (checkpoint.empty()) throw std::invalid_argument("config: eval requires --checkpoint");
  Dataset dataset = load_dataset_checked(cfg.dataset);
  TaskSplit split = load_split_checked(cfg.split, dataset.categories);
  Detector model = [&] {
    try {
      return Detector::load(checkpoint);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }();
  validate_image_size(dataset, model.config());

  const int task_index = (flags.task > 0 ? flags.task : static_cast<int>(split.tasks.size())) - 1;
  if (task_index < 0 || task_index >= static_cast<int>(split.tasks.size()))
    throw std::invalid_argument("config: --task out of range");

  MetricsReport report = evaluate_checkpoint(model, dataset, split, task_index, cfg.eval);
  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);
  write_json_artifact(out_dir / "metrics.json", report.to_json(), cfg.seed);
  write_text(out_dir / "metrics.txt", report.to_table());
  std::cout << report.to_table();
  cfg.dump(out_dir / "resolved_config.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmd_ablate(const CommonFlags& flags, const std::string& variants_arg) {
  RunConfig base_cfg = resolve_config(flags);
  Dataset dataset = load_dataset_checked(base_cfg.dataset);
  TaskSplit split = load_split_checked(base_cfg.split, dataset.categories);
  validate_image_size(dataset, base_cfg.model);
  const fs::path out_dir = base_cfg.out;
  fs::create_directories(out_dir);
  base_cfg.dump(out_dir / "resolved_config.json");

  std::vector<std::string> variants;
  {
    std::stringstream ss(variants_arg.empty() ? "baseline,distill,distill_dw,distill_cs,full" : variants_arg);
    std::string item;
    while (std::getline(ss, item, ',')) variants.push_back(item);
  }

  json rows = json::array();
  std::ostringstream table;
  table << "variant        U-Recall  Unk-Prec    Unk-AP  Known mAP\n";
  for (const auto& variant : variants) {
    RunConfig cfg = base_cfg;
    cfg.apply_variant(variant);  // validates the name
    note("ablate: " + variant);

    ModelConfig model_cfg = cfg.model;
    model_cfg.num_known = static_cast<int>(split.tasks[0].known.size());
    Detector model(model_cfg, Rng::derive(cfg.seed, "init"));
    Teacher teacher = make_teacher(cfg);
    const TaskSpec& task = split.tasks[0];
    TaskContext ctx = build_task_context(dataset, task.known, task.group, task.train_scenes);
    ctx.alignment = alignment_for(cfg, task.known);
    TrainResult result = train_task(model, ctx, teacher, cfg.train, cfg.train.epochs, 1.0, "task0");
    if (result.aborted) {
      write_abort_dump(out_dir, result, cfg.seed);
      throw RuntimeAbort("variant " + variant + ": " + result.abort_reason);
    }
    model.save(out_dir / ("ckpt_" + variant + ".bin"), {{"seed", cfg.seed}, {"variant", variant}});

    MetricsReport report = evaluate_checkpoint(model, dataset, split, 0, cfg.eval);
    auto opt_or = [](const std::optional<double>& v) { return v ? *v : 0.0; };
    rows.push_back(json{{"variant", variant},
                        {"u_recall", opt_or(report.unknown.u_recall)},
                        {"unknown_precision", opt_or(report.unknown.precision)},
                        {"unknown_ap", opt_or(report.unknown.ap)},
                        {"known_map", opt_or(report.map_both)}});
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %8.2f %9.2f %9.2f %10.2f\n", variant.c_str(),
                  100.0 * opt_or(report.unknown.u_recall), 100.0 * opt_or(report.unknown.precision),
                  100.0 * opt_or(report.unknown.ap), 100.0 * opt_or(report.map_both));
    table << line;
  }
  write_json_artifact(out_dir / "ablation.json",
                      json{{"rows", rows},
                           {"dataset", base_cfg.dataset},
                           {"split", base_cfg.split},
                           {"shared_seed", base_cfg.seed}},
                      base_cfg.seed);
  write_text(out_dir / "ablation.txt", table.str());
  std::cout << table.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::vector<Series> csv_loss_series(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open " + csv_path.string());
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    if (header.empty()) {
      while (std::getline(ss, cell, ',')) header.push_back(cell);
      columns.resize(header.size());
      continue;
    }
    std::size_t col = 0;
    while (std::getline(ss, cell, ',') && col < columns.size()) columns[col++].push_back(std::atof(cell.c_str()));
  }
  std::vector<Series> series;
  if (header.empty()) return series;
  const std::vector<std::string> wanted{"l_r", "l_bs", "l_cls", "l_r_kd", "l_bs_kd", "l_cls_kd", "l_cls_p", "total"};
  std::vector<double> xs;
  for (std::size_t i = 0; i < columns[0].size(); ++i) xs.push_back(static_cast<double>(i));
  for (const auto& name : wanted) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) {
        series.push_back(Series{name, xs, columns[c]});
        break;
      }
    }
  }
  return series;
}

int cmd_report(const CommonFlags& flags, const std::string& run_dir_arg) {
  const fs::path run_dir = run_dir_arg.empty() ? fs::path(resolve_config(flags).out) : fs::path(run_dir_arg);
  if (!fs::exists(run_dir)) throw DataError("run directory does not exist: " + run_dir.string());
  const fs::path out_dir = flags.out.empty() ? run_dir / "report" : fs::path(flags.out);
  fs::create_directories(out_dir);

  std::uint64_t seed = 0;
  if (fs::exists(run_dir / "resolved_config.json")) {
    std::ifstream in(run_dir / "resolved_config.json");
    json j;
    in >> j;
    seed = j.value("seed", 0);
  }
  auto png_meta = [&](const char* kind) {
    return std::vector<std::pair<std::string, std::string>>{
        {"skdf-version", kVersion}, {"skdf-seed", std::to_string(seed)}, {"skdf-plot", kind}};
  };

  int artifacts = 0;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("train_", 0) == 0 && entry.path().extension() == ".csv") {
      auto series = csv_loss_series(entry.path());
      if (series.empty()) continue;
      const std::string stem = entry.path().stem().string();
      write_png(out_dir / ("loss_" + stem + ".png"),
                line_chart(series, "loss components: " + stem, "iteration", "loss"), png_meta("loss-curves"));
      ++artifacts;
    }
  }

  if (fs::exists(run_dir / "metrics.json")) {
    std::ifstream in(run_dir / "metrics.json");
    json j;
    in >> j;
    std::vector<std::string> labels;
    std::vector<double> values;
    auto push_metric = [&](const char* key, const std::string& label) {
      if (j.contains(key) && !j[key].is_null()) {
        labels.push_back(label);
        values.push_back(j[key].get<double>());
      }
    };
    push_metric("u_recall", "u-recall");
    push_metric("unknown_precision", "unk prec");
    push_metric("unknown_ap", "unk ap");
    push_metric("map_previously", "map prev");
    push_metric("map_currently", "map cur");
    push_metric("map_both", "map both");
    write_png(out_dir / "metric_bars.png", bar_chart(labels, values, "owod metrics", "value"), png_meta("metrics"));
    ++artifacts;
    if (j.contains("pr_curves")) {
      std::vector<Series> curves;
      for (const auto& [name, c] : j["pr_curves"].items()) {
        curves.push_back(
            Series{name, c["recall"].get<std::vector<double>>(), c["precision"].get<std::vector<double>>()});
      }
      if (!curves.empty()) {
        write_png(out_dir / "pr_curves.png", line_chart(curves, "precision vs recall", "recall", "precision"),
                  png_meta("pr-curves"));
        ++artifacts;
      }
    }
  }

  if (fs::exists(run_dir / "stats.json")) {
    std::ifstream in(run_dir / "stats.json");
    json j;
    in >> j;
    const auto& tasks = j["per_task_test_stats"];
    if (tasks.is_array() && !tasks.empty()) {
      const auto& st = tasks[0];
      auto hist = [&](const char* key, const char* edges_key, const std::string& title, const std::string& file) {
        std::vector<int> counts = st[key].get<std::vector<int>>();
        std::vector<double> edges = st[edges_key].get<std::vector<double>>();
        std::vector<std::string> labels;
        std::vector<double> values;
        for (std::size_t i = 0; i < counts.size(); ++i) {
          char buf[32];
          if (i == 0)
            std::snprintf(buf, sizeof buf, "<%.3g", edges.front());
          else if (i == counts.size() - 1)
            std::snprintf(buf, sizeof buf, ">%.3g", edges.back());
          else
            std::snprintf(buf, sizeof buf, "%.3g", edges[i - 1]);
          labels.push_back(buf);
          // Log-count axis in the spirit of the benchmark's area plot.
          values.push_back(counts[i] > 0 ? std::log(static_cast<double>(counts[i])) : 0.0);
        }
        write_png(out_dir / file, bar_chart(labels, values, title, "ln count"), png_meta("dataset-stats"));
      };
      hist("area_hist", "area_bin_edges", "instance area distribution", "stats_area.png");
      hist("aspect_hist", "aspect_bin_edges", "aspect ratio distribution", "stats_aspect.png");
      write_png(out_dir / "stats_centers.png",
                heat_grid(st["center_grid"].get<std::vector<int>>(), st["center_grid_size"].get<int>(),
                          "instance center positions"),
                png_meta("dataset-stats"));
      artifacts += 3;
    }
  }

  if (artifacts == 0) throw DataError("nothing to report in " + run_dir.string());
  note("wrote " + std::to_string(artifacts) + " report artifacts to " + out_dir.string());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"skdf: synthetic open-world detection distillation workbench"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint, variants, run_dir;

  auto add_common = [&](CLI::App* cmd, bool with_task = true) {
    cmd->add_option("--config", flags.config_path, "run configuration JSON");
    cmd->add_option("--seed", [&flags](const CLI::results_t& res) {
      flags.seed = std::stoull(res[0]);
      return true;
    }, "override the config seed");
    cmd->add_option("--out", flags.out, "output directory");
    if (with_task) cmd->add_option("--task", flags.task, "1-based task selector / limit");
  };

  auto* gen = app.add_subcommand("generate-data", "render a synthetic dataset and task split");
  add_common(gen, false);
  auto* distill = app.add_subcommand("distill-labels", "precompute oracle teacher detections");
  add_common(distill, false);
  auto* train = app.add_subcommand("train", "train the detector through the task sequence");
  add_common(train);
  train->add_option("--teacher", flags.teacher_mode, "teacher mode: oracle | file | off");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with the OWOD metrics");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  auto* ablate = app.add_subcommand("ablate", "run the component-ablation grid on shared data");
  add_common(ablate);
  ablate->add_option("--variants", variants, "comma list: baseline,distill,distill_dw,distill_cs,full");
  auto* report = app.add_subcommand("report", "render loss curves, PR curves, and dataset plots");
  add_common(report, false);
  report->add_option("--run", run_dir, "run directory to summarize");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/version or the parse error
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(flags);
    if (distill->parsed()) return cmd_distill_labels(flags);
    if (train->parsed()) return cmd_train(flags);
    if (eval_cmd->parsed()) return cmd_eval(flags, checkpoint);
    if (ablate->parsed()) return cmd_ablate(flags, variants);
    if (report->parsed()) return cmd_report(flags, run_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const RuntimeAbort& e) {
    std::cerr << "runtime abort: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace skdf
