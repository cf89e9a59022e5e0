#include "c3dm/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "c3dm/error.hpp"

namespace c3dm {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json rgb_to_json(const Rgb& c) {
  return ordered_json::array({c.r, c.g, c.b});
}

Rgb rgb_from_json(const ordered_json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("color must be [r,g,b]");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

ordered_json object_to_json(const ObjectSpec& o) {
  ordered_json j;
  j["shape"] = shape_name(o.shape);
  j["half_size"] = o.half_size;
  j["position"] = ordered_json::array({o.position.x, o.position.y});
  j["yaw"] = o.yaw;
  j["color"] = rgb_to_json(o.color);
  j["role"] = role_name(o.role);
  return j;
}

ObjectSpec object_from_json(const ordered_json& j) {
  ObjectSpec o;
  o.shape = shape_from_name(j.at("shape").get<std::string>());
  o.half_size = j.at("half_size").get<double>();
  o.position = {j.at("position")[0].get<double>(), j.at("position")[1].get<double>()};
  o.yaw = j.at("yaw").get<double>();
  o.color = rgb_from_json(j.at("color"));
  o.role = role_from_name(j.at("role").get<std::string>());
  return o;
}

ordered_json scene_to_json(const SceneSpec& s) {
  ordered_json j;
  j["table_size"] = s.table_size;
  j["table_color"] = rgb_to_json(s.table_color);
  j["seed"] = s.seed;
  j["objects"] = ordered_json::array();
  for (const auto& o : s.objects) j["objects"].push_back(object_to_json(o));
  return j;
}

SceneSpec scene_from_json(const ordered_json& j) {
  SceneSpec s;
  s.table_size = j.at("table_size").get<double>();
  s.table_color = rgb_from_json(j.at("table_color"));
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& oj : j.at("objects")) s.objects.push_back(object_from_json(oj));
  return s;
}

ordered_json task_to_json(const TaskConfig& c) {
  ordered_json j;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["table_size"] = c.table_size;
  j["table_color"] = rgb_to_json(c.table_color);
  j["target_half"] = c.target_half;
  j["target_color"] = rgb_to_json(c.target_color);
  j["goal_radius"] = c.goal_radius;
  j["goal_color"] = rgb_to_json(c.goal_color);
  j["n_distractors"] = c.n_distractors;
  j["distractor_half_min"] = c.distractor_half_min;
  j["distractor_half_max"] = c.distractor_half_max;
  j["palette"] = ordered_json::array();
  for (const auto& col : c.palette) j["palette"].push_back(rgb_to_json(col));
  j["unseen_palette"] = ordered_json::array();
  for (const auto& col : c.unseen_palette) j["unseen_palette"].push_back(rgb_to_json(col));
  j["unseen_shapes"] = ordered_json::array();
  for (auto sh : c.unseen_shapes) j["unseen_shapes"].push_back(shape_name(sh));
  j["separation_factor"] = c.separation_factor;
  j["spawn_margin"] = c.spawn_margin;
  j["max_place_attempts"] = c.max_place_attempts;
  j["tol_pos"] = c.tol_pos;
  j["tol_yaw"] = c.tol_yaw;
  j["check_yaw"] = c.check_yaw;
  j["pixel_noise_sigma"] = c.pixel_noise_sigma;
  return j;
}

TaskConfig task_from_json(const ordered_json& j) {
  TaskConfig c = default_task_config();
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("image_h", c.image_h);
  get("image_w", c.image_w);
  get("table_size", c.table_size);
  if (j.contains("table_color")) c.table_color = rgb_from_json(j.at("table_color"));
  get("target_half", c.target_half);
  if (j.contains("target_color")) c.target_color = rgb_from_json(j.at("target_color"));
  get("goal_radius", c.goal_radius);
  if (j.contains("goal_color")) c.goal_color = rgb_from_json(j.at("goal_color"));
  get("n_distractors", c.n_distractors);
  get("distractor_half_min", c.distractor_half_min);
  get("distractor_half_max", c.distractor_half_max);
  if (j.contains("palette")) {
    c.palette.clear();
    for (const auto& cj : j.at("palette")) c.palette.push_back(rgb_from_json(cj));
  }
  if (j.contains("unseen_palette")) {
    c.unseen_palette.clear();
    for (const auto& cj : j.at("unseen_palette"))
      c.unseen_palette.push_back(rgb_from_json(cj));
  }
  if (j.contains("unseen_shapes")) {
    c.unseen_shapes.clear();
    for (const auto& sj : j.at("unseen_shapes"))
      c.unseen_shapes.push_back(shape_from_name(sj.get<std::string>()));
  }
  get("separation_factor", c.separation_factor);
  get("spawn_margin", c.spawn_margin);
  get("max_place_attempts", c.max_place_attempts);
  get("tol_pos", c.tol_pos);
  get("tol_yaw", c.tol_yaw);
  get("check_yaw", c.check_yaw);
  get("pixel_noise_sigma", c.pixel_noise_sigma);
  return c;
}

ordered_json parse(const std::string& text, const char* what) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON (") + what + "): " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::string scene_to_json_text(const SceneSpec& scene) {
  return scene_to_json(scene).dump(2) + "\n";
}

SceneSpec scene_from_json_text(const std::string& text) {
  return scene_from_json(parse(text, "scene"));
}

std::string task_to_json_text(const TaskConfig& cfg) {
  return task_to_json(cfg).dump(2) + "\n";
}

TaskConfig task_from_json_text(const std::string& text) {
  return task_from_json(parse(text, "task config"));
}

std::uint64_t episode_seed(std::uint64_t dataset_seed, int index) {
  // splitmix64 over (dataset_seed, index)
  std::uint64_t z = dataset_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Demo> make_demos(const TaskConfig& cfg, int n, std::uint64_t dataset_seed) {
  std::vector<Demo> demos;
  demos.reserve(n);
  for (int i = 0; i < n; ++i) {
    SceneSpec scene = sample_scene(cfg, episode_seed(dataset_seed, i));
    ActionVec action = oracle_action(scene);
    demos.push_back({std::move(scene), std::move(action)});
  }
  return demos;
}

void write_dataset(const std::string& dir, const TaskConfig& cfg, int n_demos,
                   std::uint64_t dataset_seed) {
  if (n_demos < 1) throw ConfigError("write_dataset: n_demos must be >= 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("write_dataset: cannot create " + dir + ": " + ec.message());

  ordered_json manifest;
  manifest["task_cfg"] = task_to_json(cfg);
  manifest["dataset_seed"] = dataset_seed;
  manifest["seeds"] = ordered_json::array();
  manifest["episodes"] = ordered_json::array();

  for (int i = 0; i < n_demos; ++i) {
    const std::uint64_t seed = episode_seed(dataset_seed, i);
    const SceneSpec scene = sample_scene(cfg, seed);
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%06d.json", i);
    write_file(fs::path(dir) / name, scene_to_json_text(scene));
    manifest["seeds"].push_back(seed);
    manifest["episodes"].push_back(name);
  }
  write_file(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const auto manifest = parse(read_file(fs::path(dir) / "manifest.json"), "manifest");
  Dataset ds;
  ds.task = task_from_json(manifest.at("task_cfg"));
  ds.dataset_seed = manifest.at("dataset_seed").get<std::uint64_t>();
  for (const auto& name : manifest.at("episodes")) {
    const SceneSpec scene =
        scene_from_json(parse(read_file(fs::path(dir) / name.get<std::string>()),
                              "episode"));
    ActionVec action = oracle_action(scene);
    ds.demos.push_back({scene, std::move(action)});
  }
  return ds;
}

}  // namespace c3dm
