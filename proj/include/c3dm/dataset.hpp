#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c3dm/scene.hpp"

namespace c3dm {

// Episode files are SceneSpec JSON; the oracle action is reconstructed on
// load so the demo invariants hold by construction.
std::string scene_to_json_text(const SceneSpec& scene);
SceneSpec scene_from_json_text(const std::string& text);

std::string task_to_json_text(const TaskConfig& cfg);
TaskConfig task_from_json_text(const std::string& text);

// Per-episode scene seed derived from the dataset seed.
std::uint64_t episode_seed(std::uint64_t dataset_seed, int index);

// In-memory dataset (shared by the CLI and the evaluation harness).
std::vector<Demo> make_demos(const TaskConfig& cfg, int n, std::uint64_t dataset_seed);

// Directory layout: manifest.json (task_cfg, seeds, episode list) plus one
// episode_NNNNNN.json per scene. Deterministic bytes for a fixed seed.
void write_dataset(const std::string& dir, const TaskConfig& cfg, int n_demos,
                   std::uint64_t dataset_seed);

struct Dataset {
  TaskConfig task;
  std::vector<Demo> demos;
  std::uint64_t dataset_seed = 0;
};

Dataset load_dataset(const std::string& dir);

}  // namespace c3dm
