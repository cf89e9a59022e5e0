#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c3dm/geometry.hpp"
#include "c3dm/image.hpp"
#include "c3dm/rng.hpp"

namespace c3dm {

enum class ObjectShape { square_block, disk_bowl, bar, ell };
enum class ObjectRole { pick_target, place_goal, distractor };

struct ObjectSpec {
  ObjectShape shape = ObjectShape::square_block;
  double half_size = 0.03;  // meters
  Vec2 position;            // meters, table frame
  double yaw = 0.0;         // radians, (-pi, pi]
  Rgb color;
  ObjectRole role = ObjectRole::distractor;
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  double table_size = 1.0;  // square table centered on the origin
  Rgb table_color{0.5f, 0.5f, 0.5f};
  std::uint64_t seed = 0;

  const ObjectSpec& by_role(ObjectRole role) const;
};

// Task family parameters: one pick target, one place goal, n distractors.
struct TaskConfig {
  int image_h = 64;
  int image_w = 64;
  double table_size = 1.0;
  Rgb table_color{0.5f, 0.5f, 0.5f};

  double target_half = 0.03;
  Rgb target_color{0.90f, 0.10f, 0.10f};
  double goal_radius = 0.055;
  Rgb goal_color{0.10f, 0.80f, 0.20f};

  int n_distractors = 3;
  double distractor_half_min = 0.025;
  double distractor_half_max = 0.040;
  std::vector<Rgb> palette;         // training distractor colors
  std::vector<Rgb> unseen_palette;  // held-out colors for OOD evaluation
  std::vector<ObjectShape> unseen_shapes{ObjectShape::bar, ObjectShape::ell};

  double separation_factor = 1.5;  // min center distance = factor * (h_i + h_j)
  double spawn_margin = 0.03;      // extra border clearance beyond half_size
  int max_place_attempts = 1000;

  double tol_pos = 0.04;  // meters
  double tol_yaw = 0.25;  // radians
  bool check_yaw = false;

  double pixel_noise_sigma = 0.0;

  CameraTransform base_camera() const;
};

TaskConfig default_task_config();

struct Demo {
  SceneSpec scene;
  ActionVec action;  // oracle action, global meters frame
};

// Deterministic scene draw; rejection-samples object positions until the
// pairwise separation margin holds. Throws DomainError when placement fails
// within the attempt budget.
SceneSpec sample_scene(const TaskConfig& cfg, std::uint64_t seed);

// Orthographic top-down flat-shaded raster with center-of-pixel sampling.
Image render(const SceneSpec& scene, const CameraTransform& cam);
Image render_full(const SceneSpec& scene, const TaskConfig& cfg);

// Re-rendered zoomed view of the window region (the exact high-res cache).
Image zoom_context(const SceneSpec& scene, const Window& w, int out_h, int out_w);

// Perfect pick/place action read from ground-truth state.
ActionVec oracle_action(const SceneSpec& scene);

// Closed-ball success test on pick and place positions (and optionally yaw).
bool success(const SceneSpec& scene, const ActionVec& a, double tol_pos,
             double tol_yaw, bool check_yaw = false);
bool success(const SceneSpec& scene, const ActionVec& a, const TaskConfig& cfg);

// Distances from a global-frame action to the ground-truth centroids.
struct ActionErrors {
  double pick_m = 0.0;
  double place_m = 0.0;
};
ActionErrors action_errors(const SceneSpec& scene, const ActionVec& a);

// Replace each distractor in place with an unseen shape/color; target and
// goal are untouched.
SceneSpec swap_distractors(const SceneSpec& scene, const TaskConfig& unseen_cfg,
                           std::uint64_t seed);

// Additive Gaussian pixel noise, clamped to [0, 1].
void add_pixel_noise(Image& img, double sigma, Rng& rng);

// Point-in-object test in the table frame (used by the rasterizer and the
// collision oracle in tests).
bool object_contains(const ObjectSpec& obj, Vec2 p);

const char* shape_name(ObjectShape s);
const char* role_name(ObjectRole r);
ObjectShape shape_from_name(const std::string& s);
ObjectRole role_from_name(const std::string& s);

}  // namespace c3dm
