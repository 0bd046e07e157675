#include "skdf/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "skdf/rng.hpp"
#include "skdf/version.hpp"

namespace skdf {

using json = nlohmann::json;

namespace {

struct Rgb {
  double r, g, b;
};

Rgb color_for(const std::string& name) {
  if (name == "red") return {0.85, 0.12, 0.12};
  if (name == "green") return {0.12, 0.78, 0.16};
  if (name == "blue") return {0.15, 0.25, 0.90};
  if (name == "yellow") return {0.92, 0.86, 0.12};
  // Any extra color in a custom universe gets a stable pseudo-color.
  const std::uint64_t h = Rng::derive(0x5eed, name);
  auto chan = [&](int shift) { return 0.25 + 0.65 * static_cast<double>((h >> shift) & 0xff) / 255.0; };
  return {chan(0), chan(8), chan(16)};
}

// Shape membership in box-local coordinates (u, v) in [0,1]^2.
bool inside_shape(const std::string& shape, double u, double v) {
  if (shape == "square" || shape == "bar") return true;
  if (shape == "circle") {
    const double du = (u - 0.5) * 2.0, dv = (v - 0.5) * 2.0;
    return du * du + dv * dv <= 1.0;
  }
  if (shape == "triangle") return std::fabs(u - 0.5) <= 0.5 * v;
  throw std::invalid_argument("unknown shape kind: " + shape);
}

void rasterize_instance(Canvas& canvas, const Instance& inst, const Rgb& color) {
  const int w = canvas.width, h = canvas.height;
  const BoxCCWH& b = inst.box;
  std::string color_name, shape;
  CategoryUniverse::split_name(inst.category, color_name, shape);
  (void)color_name;

  const int px0 = std::max(0, static_cast<int>(std::floor(b.x0() * w)));
  const int px1 = std::min(w - 1, static_cast<int>(std::ceil(b.x1() * w)));
  const int py0 = std::max(0, static_cast<int>(std::floor(b.y0() * h)));
  const int py1 = std::min(h - 1, static_cast<int>(std::ceil(b.y1() * h)));
  constexpr int kSub = 4;

  for (int py = py0; py <= py1; ++py) {
    for (int px = px0; px <= px1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = (px + (sx + 0.5) / kSub) / w;
          const double y = (py + (sy + 0.5) / kSub) / h;
          const double u = (x - b.x0()) / b.w;
          const double v = (y - b.y0()) / b.h;
          if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;
          if (inside_shape(shape, u, v)) ++hits;
        }
      }
      if (hits == 0) continue;
      const double cov = static_cast<double>(hits) / (kSub * kSub);
      canvas.at(py, px, 0) = canvas.at(py, px, 0) * (1.0 - cov) + color.r * cov;
      canvas.at(py, px, 1) = canvas.at(py, px, 1) * (1.0 - cov) + color.g * cov;
      canvas.at(py, px, 2) = canvas.at(py, px, 2) * (1.0 - cov) + color.b * cov;
    }
  }
}

BoxCCWH sample_box(const GeneratorConfig& cfg, const std::string& shape, Rng& rng) {
  const double lo = cfg.min_extent, hi = cfg.max_extent;
  double w, h;
  if (shape == "square") {
    w = h = rng.uniform(lo, hi);
  } else if (shape == "bar") {
    h = rng.uniform(0.5 * lo, 0.9 * lo);
    w = std::min(hi, h * rng.uniform(2.5, 4.0));
  } else {
    w = rng.uniform(lo, hi);
    h = rng.uniform(lo, hi);
  }
  const double margin = 0.01;
  const double cx = rng.uniform(0.5 * w + margin, 1.0 - 0.5 * w - margin);
  const double cy = rng.uniform(0.5 * h + margin, 1.0 - 0.5 * h - margin);
  return BoxCCWH(cx, cy, w, h);
}

// One placement attempt; empty when the overlap cap cannot be met.
std::optional<std::vector<Instance>> try_place(const GeneratorConfig& cfg, int count,
                                               const std::vector<std::string>& names, Rng& rng) {
  std::vector<Instance> placed;
  for (int i = 0; i < count; ++i) {
    const std::string& category = names[rng.uniform_index(names.size())];
    std::string color, shape;
    CategoryUniverse::split_name(category, color, shape);
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_placement_retries && !ok; ++attempt) {
      BoxCCWH box = sample_box(cfg, shape, rng);
      ok = true;
      for (const auto& other : placed) {
        if (iou(box, other.box) > cfg.overlap_cap) {
          ok = false;
          break;
        }
      }
      if (ok) placed.push_back(Instance{category, box});
    }
    if (!ok) return std::nullopt;
  }
  return placed;
}

json box_to_json(const BoxCCWH& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

BoxCCWH box_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error(context + ": box_ccwh must be a 4-element array");
  try {
    return BoxCCWH(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  } catch (const std::exception& e) {
    throw std::runtime_error(context + ": " + e.what());
  }
}

json load_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string(what) + ": cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(what) + ": failed to parse " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

std::vector<std::string> CategoryUniverse::names() const {
  std::vector<std::string> out;
  for (const auto& shape : shapes)
    for (const auto& color : colors) out.push_back(color + " " + shape);
  return out;
}

void CategoryUniverse::split_name(const std::string& name, std::string& color, std::string& shape) {
  const auto pos = name.find(' ');
  if (pos == std::string::npos) throw std::invalid_argument("category name must be '<color> <shape>', got " + name);
  color = name.substr(0, pos);
  shape = name.substr(pos + 1);
}

const SceneAnnotation& Dataset::scene_by_id(const std::string& id) const {
  for (const auto& s : scenes)
    if (s.scene_id == id) return s;
  throw std::runtime_error("dataset has no scene with id " + id);
}

std::vector<std::string> Dataset::scene_ids_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& s : scenes)
    if (s.scene_id.rfind(prefix, 0) == 0) out.push_back(s.scene_id);
  return out;
}

ImageU8 load_scene_image(const Dataset& dataset, const SceneAnnotation& scene) {
  return read_png(dataset.root / scene.image_path);
}

GeneratedScene generate_scene(const GeneratorConfig& cfg, const std::string& scene_id, std::uint64_t dataset_seed,
                              GenerationReport* report) {
  const auto names = cfg.universe.names();
  for (int scene_attempt = 0; scene_attempt < cfg.max_scene_retries; ++scene_attempt) {
    Rng rng(Rng::derive(dataset_seed, scene_id + "#" + std::to_string(scene_attempt)));
    const double base_gray = rng.uniform(0.08, 0.22);
    const int count =
        cfg.min_instances + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.max_instances - cfg.min_instances + 1)));

    auto placed = try_place(cfg, count, names, rng);
    if (!placed) {
      if (report) ++report->regenerated_scenes;
      continue;
    }

    Canvas canvas(cfg.image_size, cfg.image_size, base_gray);
    for (double& v : canvas.px) v += rng.uniform(-cfg.background_noise, cfg.background_noise);
    for (const auto& inst : *placed) {
      std::string color_name, shape;
      CategoryUniverse::split_name(inst.category, color_name, shape);
      Rgb c = color_for(color_name);
      const double jitter = rng.uniform(-0.05, 0.05);
      c.r = std::clamp(c.r + jitter, 0.0, 1.0);
      c.g = std::clamp(c.g + jitter, 0.0, 1.0);
      c.b = std::clamp(c.b + jitter, 0.0, 1.0);
      rasterize_instance(canvas, inst, c);
    }

    GeneratedScene out;
    out.annotation.scene_id = scene_id;
    out.annotation.image_path = "images/" + scene_id + ".png";
    out.annotation.instances = std::move(*placed);
    out.image = canvas.quantize();
    return out;
  }
  throw std::runtime_error("generate_scene: could not satisfy the overlap cap for scene " + scene_id +
                           " after " + std::to_string(cfg.max_scene_retries) + " attempts");
}

Dataset generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                         GenerationReport* report) {
  if (cfg.min_instances < 0 || cfg.max_instances < cfg.min_instances)
    throw std::invalid_argument("generate_dataset: bad instance count range");
  if (!(cfg.min_extent > 0.0) || cfg.max_extent < cfg.min_extent || cfg.max_extent > 0.9)
    throw std::invalid_argument("generate_dataset: bad extent range");

  std::filesystem::create_directories(out_dir / "images");
  Dataset ds;
  ds.categories = cfg.universe.names();
  ds.root = out_dir;

  auto emit = [&](const std::string& prefix, int count) {
    for (int i = 0; i < count; ++i) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "%05d", i);
      const std::string id = prefix + suffix;
      GeneratedScene scene = generate_scene(cfg, id, seed, report);
      write_png(out_dir / scene.annotation.image_path, scene.image,
                {{"skdf-version", kVersion}, {"skdf-seed", std::to_string(seed)}});
      ds.scenes.push_back(std::move(scene.annotation));
    }
  };
  emit("train_", cfg.num_train);
  emit("test_", cfg.num_test);

  save_dataset(ds, out_dir / "dataset.json", seed);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& json_path, std::uint64_t seed) {
  json scenes = json::array();
  for (const auto& s : dataset.scenes) {
    json instances = json::array();
    for (const auto& inst : s.instances)
      instances.push_back(json{{"category", inst.category}, {"box_ccwh", box_to_json(inst.box)}});
    scenes.push_back(json{{"scene_id", s.scene_id}, {"image_path", s.image_path}, {"instances", instances}});
  }
  write_json_file(json_path, json{{"format", "skdf-dataset-v1"},
                                  {"version", kVersion},
                                  {"seed", seed},
                                  {"categories", dataset.categories},
                                  {"scenes", scenes}});
}

Dataset load_dataset(const std::filesystem::path& json_path) {
  json j = load_json_file(json_path, "load_dataset");
  Dataset ds;
  ds.root = json_path.parent_path();
  if (!j.contains("categories") || !j.contains("scenes"))
    throw std::runtime_error("load_dataset: " + json_path.string() + " is missing categories/scenes");
  ds.categories = j["categories"].get<std::vector<std::string>>();
  std::set<std::string> known_names(ds.categories.begin(), ds.categories.end());
  for (const auto& js : j["scenes"]) {
    SceneAnnotation s;
    s.scene_id = js.value("scene_id", std::string{});
    if (s.scene_id.empty()) throw std::runtime_error("load_dataset: scene without scene_id");
    s.image_path = js.value("image_path", std::string{});
    for (const auto& ji : js.value("instances", json::array())) {
      Instance inst;
      inst.category = ji.value("category", std::string{});
      if (!known_names.count(inst.category))
        throw std::runtime_error("load_dataset: scene " + s.scene_id + " uses unlisted category '" + inst.category +
                                 "'");
      inst.box = box_from_json(ji.at("box_ccwh"), "load_dataset: scene " + s.scene_id);
      s.instances.push_back(std::move(inst));
    }
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

std::vector<std::string> TaskSpec::unknown(const std::vector<std::string>& universe) const {
  std::set<std::string> known_set(known.begin(), known.end());
  std::vector<std::string> out;
  for (const auto& c : universe)
    if (!known_set.count(c)) out.push_back(c);
  return out;
}

TaskSplit TaskSplit::make(const std::vector<std::string>& universe, const std::vector<std::vector<std::string>>& groups,
                          const Dataset& dataset, const std::vector<std::string>& train_ids,
                          const std::vector<std::string>& test_ids) {
  std::vector<std::string> flattened;
  for (const auto& g : groups) flattened.insert(flattened.end(), g.begin(), g.end());
  std::vector<std::string> sorted_flat = flattened, sorted_universe = universe;
  std::sort(sorted_flat.begin(), sorted_flat.end());
  std::sort(sorted_universe.begin(), sorted_universe.end());
  if (sorted_flat != sorted_universe)
    throw std::invalid_argument("TaskSplit: groups must partition the category universe");

  TaskSplit split;
  std::vector<std::string> cumulative;
  for (const auto& g : groups) {
    TaskSpec spec;
    spec.group = g;
    cumulative.insert(cumulative.end(), g.begin(), g.end());
    spec.known = cumulative;
    std::set<std::string> group_set(g.begin(), g.end());
    for (const auto& id : train_ids) {
      const auto& scene = dataset.scene_by_id(id);
      const bool has_current = std::any_of(scene.instances.begin(), scene.instances.end(),
                                           [&](const Instance& i) { return group_set.count(i.category) > 0; });
      if (has_current) spec.train_scenes.push_back(id);
    }
    spec.test_scenes = test_ids;
    split.tasks.push_back(std::move(spec));
  }
  split.validate(universe);
  return split;
}

void TaskSplit::validate(const std::vector<std::string>& universe) const {
  if (tasks.empty()) throw std::invalid_argument("TaskSplit: no tasks");
  std::set<std::string> universe_set(universe.begin(), universe.end());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& known = tasks[t].known;
    std::set<std::string> known_set(known.begin(), known.end());
    if (known_set.size() != known.size()) throw std::invalid_argument("TaskSplit: duplicate known category");
    for (const auto& c : known)
      if (!universe_set.count(c)) throw std::invalid_argument("TaskSplit: category outside the universe: " + c);
    if (t > 0) {
      const auto& prev = tasks[t - 1].known;
      if (prev.size() >= known.size() || !std::equal(prev.begin(), prev.end(), known.begin()))
        throw std::invalid_argument("TaskSplit: known sets must grow monotonically, task " + std::to_string(t) +
                                    " does not extend task " + std::to_string(t - 1));
    }
  }
}

void save_split(const TaskSplit& split, const std::filesystem::path& json_path, std::uint64_t seed) {
  json tasks = json::array();
  for (const auto& t : split.tasks)
    tasks.push_back(json{{"known", t.known}, {"train_scenes", t.train_scenes}, {"test_scenes", t.test_scenes}});
  write_json_file(json_path, json{{"format", "skdf-split-v1"}, {"version", kVersion}, {"seed", seed}, {"tasks", tasks}});
}

TaskSplit load_split(const std::filesystem::path& json_path, const std::vector<std::string>& universe) {
  json j = load_json_file(json_path, "load_split");
  TaskSplit split;
  if (!j.contains("tasks")) throw std::runtime_error("load_split: " + json_path.string() + " is missing tasks");
  std::vector<std::string> prev;
  for (const auto& jt : j["tasks"]) {
    TaskSpec spec;
    spec.known = jt.at("known").get<std::vector<std::string>>();
    spec.train_scenes = jt.value("train_scenes", std::vector<std::string>{});
    spec.test_scenes = jt.value("test_scenes", std::vector<std::string>{});
    spec.group.assign(spec.known.begin() + static_cast<std::ptrdiff_t>(prev.size()), spec.known.end());
    prev = spec.known;
    split.tasks.push_back(std::move(spec));
  }
  split.validate(universe);
  return split;
}

std::vector<Instance> training_instances(const SceneAnnotation& scene, const std::vector<std::string>& group) {
  std::set<std::string> group_set(group.begin(), group.end());
  std::vector<Instance> out;
  for (const auto& inst : scene.instances)
    if (group_set.count(inst.category)) out.push_back(inst);
  return out;
}

void write_task_train_view(const Dataset& dataset, const TaskSplit& split, int task_index,
                           const std::filesystem::path& json_path, std::uint64_t seed) {
  const auto& task = split.tasks.at(static_cast<std::size_t>(task_index));
  json scenes = json::array();
  for (const auto& id : task.train_scenes) {
    const auto& s = dataset.scene_by_id(id);
    json instances = json::array();
    for (const auto& inst : training_instances(s, task.group))
      instances.push_back(json{{"category", inst.category}, {"box_ccwh", box_to_json(inst.box)}});
    scenes.push_back(json{{"scene_id", s.scene_id}, {"image_path", s.image_path}, {"instances", instances}});
  }
  write_json_file(json_path, json{{"format", "skdf-dataset-v1"},
                                  {"version", kVersion},
                                  {"seed", seed},
                                  {"task_index", task_index},
                                  {"categories", dataset.categories},
                                  {"scenes", scenes}});
}

DatasetStats dataset_stats(const Dataset& dataset, const std::vector<std::string>& known,
                           const std::vector<std::string>& scene_ids) {
  DatasetStats st;
  // Geometric bins: areas by powers of two from 2^-11, aspects by sqrt(2)
  // steps from 1/8 to 8.
  for (int i = 0; i <= 11; ++i) st.area_bin_edges.push_back(std::pow(2.0, -11 + i));
  st.area_hist.assign(st.area_bin_edges.size() + 1, 0);
  for (int i = 0; i <= 12; ++i) st.aspect_bin_edges.push_back(std::pow(2.0, -3.0 + 0.5 * i));
  st.aspect_hist.assign(st.aspect_bin_edges.size() + 1, 0);
  st.center_grid.assign(static_cast<std::size_t>(st.center_grid_size) * st.center_grid_size, 0);

  std::set<std::string> known_set(known.begin(), known.end());
  auto bin_of = [](const std::vector<double>& edges, double v) {
    int b = 0;
    while (b < static_cast<int>(edges.size()) && v >= edges[static_cast<std::size_t>(b)]) ++b;
    return b;
  };

  for (const auto& id : scene_ids) {
    const auto& scene = dataset.scene_by_id(id);
    ++st.num_scenes;
    for (const auto& inst : scene.instances) {
      if (known_set.count(inst.category))
        ++st.known_instances;
      else
        ++st.unknown_instances;
      ++st.area_hist[static_cast<std::size_t>(bin_of(st.area_bin_edges, inst.box.area()))];
      ++st.aspect_hist[static_cast<std::size_t>(bin_of(st.aspect_bin_edges, inst.box.w / inst.box.h))];
      const int gx = std::min(st.center_grid_size - 1, static_cast<int>(inst.box.cx * st.center_grid_size));
      const int gy = std::min(st.center_grid_size - 1, static_cast<int>(inst.box.cy * st.center_grid_size));
      ++st.center_grid[static_cast<std::size_t>(gy) * st.center_grid_size + gx];
    }
  }
  if (st.num_scenes > 0) {
    st.avg_known = static_cast<double>(st.known_instances) / st.num_scenes;
    st.avg_unknown = static_cast<double>(st.unknown_instances) / st.num_scenes;
  }
  return st;
}

}  // namespace skdf
