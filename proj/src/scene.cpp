#include "c3dm/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c3dm/error.hpp"

namespace c3dm {

namespace {

// Circumradius of a shape's footprint, for bounding-box and collision use.
double bounding_radius(const ObjectSpec& obj) {
  switch (obj.shape) {
    case ObjectShape::square_block:
    case ObjectShape::ell:
      return obj.half_size * 1.4142135623730951;
    case ObjectShape::disk_bowl:
      return obj.half_size;
    case ObjectShape::bar:
      return obj.half_size * std::sqrt(1.0 + 1.0 / 9.0);
  }
  return obj.half_size * 2.0;
}

}  // namespace

const ObjectSpec& SceneSpec::by_role(ObjectRole role) const {
  for (const auto& o : objects)
    if (o.role == role) return o;
  throw DomainError(std::string("SceneSpec: no object with role ") + role_name(role));
}

CameraTransform TaskConfig::base_camera() const {
  CameraTransform t;
  t.scale_x = image_w / table_size;
  t.scale_y = image_h / table_size;
  t.offset_x = image_w * 0.5;
  t.offset_y = image_h * 0.5;
  t.image_h = image_h;
  t.image_w = image_w;
  return t;
}

TaskConfig default_task_config() {
  TaskConfig cfg;
  cfg.palette = {
      {0.15f, 0.25f, 0.90f},  // blue
      {0.90f, 0.85f, 0.10f},  // yellow
      {0.10f, 0.80f, 0.85f},  // cyan
      {0.85f, 0.15f, 0.80f},  // magenta
  };
  cfg.unseen_palette = {
      {0.50f, 0.10f, 0.95f},  // purple
      {0.95f, 0.50f, 0.05f},  // orange
      {0.98f, 0.45f, 0.60f},  // pink
      {0.55f, 0.95f, 0.10f},  // lime
  };
  return cfg;
}

bool object_contains(const ObjectSpec& obj, Vec2 p) {
  const double dx = p.x - obj.position.x;
  const double dy = p.y - obj.position.y;
  const double c = std::cos(obj.yaw);
  const double s = std::sin(obj.yaw);
  // Rotate into the object frame.
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  const double h = obj.half_size;
  switch (obj.shape) {
    case ObjectShape::square_block:
      return std::abs(lx) <= h && std::abs(ly) <= h;
    case ObjectShape::disk_bowl:
      return lx * lx + ly * ly <= h * h;
    case ObjectShape::bar:
      return std::abs(lx) <= h && std::abs(ly) <= h / 3.0;
    case ObjectShape::ell:
      return (std::abs(lx) <= h && ly >= -h && ly <= -h / 3.0) ||
             (lx >= -h && lx <= -h / 3.0 && std::abs(ly) <= h);
  }
  return false;
}

SceneSpec sample_scene(const TaskConfig& cfg, std::uint64_t seed) {
  if (cfg.n_distractors < 0)
    throw ConfigError("sample_scene: n_distractors must be >= 0");
  if (cfg.n_distractors > 0 && cfg.palette.empty())
    throw ConfigError("sample_scene: empty distractor palette");

  Rng rng(seed);
  SceneSpec scene;
  scene.table_size = cfg.table_size;
  scene.table_color = cfg.table_color;
  scene.seed = seed;

  auto place = [&](ObjectSpec obj) {
    const double lim = cfg.table_size * 0.5 - obj.half_size - cfg.spawn_margin;
    if (lim <= 0.0) throw DomainError("sample_scene: object larger than table");
    for (int attempt = 0; attempt < cfg.max_place_attempts; ++attempt) {
      obj.position = {rng.uniform(-lim, lim), rng.uniform(-lim, lim)};
      bool ok = true;
      for (const auto& other : scene.objects) {
        const double dx = obj.position.x - other.position.x;
        const double dy = obj.position.y - other.position.y;
        const double min_dist =
            cfg.separation_factor * (obj.half_size + other.half_size);
        if (dx * dx + dy * dy < min_dist * min_dist) {
          ok = false;
          break;
        }
      }
      if (ok) {
        scene.objects.push_back(obj);
        return;
      }
    }
    throw DomainError("sample_scene: placement failed after " +
                      std::to_string(cfg.max_place_attempts) + " attempts");
  };

  ObjectSpec target;
  target.shape = ObjectShape::square_block;
  target.half_size = cfg.target_half;
  target.yaw = wrap_angle(rng.uniform(-3.141592653589793, 3.141592653589793));
  target.color = cfg.target_color;
  target.role = ObjectRole::pick_target;
  place(target);

  ObjectSpec goal;
  goal.shape = ObjectShape::disk_bowl;
  goal.half_size = cfg.goal_radius;
  goal.yaw = 0.0;
  goal.color = cfg.goal_color;
  goal.role = ObjectRole::place_goal;
  place(goal);

  for (int i = 0; i < cfg.n_distractors; ++i) {
    ObjectSpec d;
    d.shape = ObjectShape::square_block;
    d.half_size = rng.uniform(cfg.distractor_half_min, cfg.distractor_half_max);
    d.yaw = wrap_angle(rng.uniform(-3.141592653589793, 3.141592653589793));
    d.color = cfg.palette[rng.uniform_index(cfg.palette.size())];
    d.role = ObjectRole::distractor;
    place(d);
  }
  return scene;
}

Image render(const SceneSpec& scene, const CameraTransform& cam) {
  Image img(cam.image_h, cam.image_w, scene.table_color);
  for (const auto& obj : scene.objects) {
    // Pixel-space bounding box of the object footprint.
    const double rad = bounding_radius(obj);
    const Vec2 p0 = real_to_img(cam, {obj.position.x - rad, obj.position.y - rad});
    const Vec2 p1 = real_to_img(cam, {obj.position.x + rad, obj.position.y + rad});
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(p0.x, p1.x))));
    const int c1 = std::min(cam.image_w, static_cast<int>(std::ceil(std::max(p0.x, p1.x))));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(p0.y, p1.y))));
    const int r1 = std::min(cam.image_h, static_cast<int>(std::ceil(std::max(p0.y, p1.y))));
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) {
        const Vec2 real = img_to_real(cam, {c + 0.5, r + 0.5});
        if (object_contains(obj, real)) img.set(r, c, obj.color);
      }
    }
  }
  return img;
}

Image render_full(const SceneSpec& scene, const TaskConfig& cfg) {
  return render(scene, cfg.base_camera());
}

Image zoom_context(const SceneSpec& scene, const Window& w, int out_h, int out_w) {
  return render(scene, window_camera(w, out_h, out_w));
}

ActionVec oracle_action(const SceneSpec& scene) {
  const ObjectSpec& target = scene.by_role(ObjectRole::pick_target);
  const ObjectSpec& goal = scene.by_role(ObjectRole::place_goal);
  ActionVec a;
  a.layout = pick_place_layout();
  a.frame = ActionFrame::global_meters;
  a.values = {target.position.x, target.position.y, target.yaw,
              goal.position.x,  goal.position.y,  0.0};
  return a;
}

ActionErrors action_errors(const SceneSpec& scene, const ActionVec& a) {
  const ObjectSpec& target = scene.by_role(ObjectRole::pick_target);
  const ObjectSpec& goal = scene.by_role(ObjectRole::place_goal);
  const Vec2 pick = a.position(0);
  const Vec2 place = a.position(1);
  return {std::hypot(pick.x - target.position.x, pick.y - target.position.y),
          std::hypot(place.x - goal.position.x, place.y - goal.position.y)};
}

bool success(const SceneSpec& scene, const ActionVec& a, double tol_pos,
             double tol_yaw, bool check_yaw) {
  const ActionErrors err = action_errors(scene, a);
  if (err.pick_m > tol_pos || err.place_m > tol_pos) return false;
  if (check_yaw) {
    const ObjectSpec& target = scene.by_role(ObjectRole::pick_target);
    if (std::abs(wrap_angle(a.yaw(0) - target.yaw)) > tol_yaw) return false;
  }
  return true;
}

bool success(const SceneSpec& scene, const ActionVec& a, const TaskConfig& cfg) {
  return success(scene, a, cfg.tol_pos, cfg.tol_yaw, cfg.check_yaw);
}

SceneSpec swap_distractors(const SceneSpec& scene, const TaskConfig& unseen_cfg,
                           std::uint64_t seed) {
  if (unseen_cfg.unseen_palette.empty() || unseen_cfg.unseen_shapes.empty())
    throw ConfigError("swap_distractors: empty unseen palette or shape set");
  Rng rng(seed);
  SceneSpec out = scene;
  for (auto& obj : out.objects) {
    if (obj.role != ObjectRole::distractor) continue;
    obj.shape = unseen_cfg.unseen_shapes[rng.uniform_index(unseen_cfg.unseen_shapes.size())];
    obj.color = unseen_cfg.unseen_palette[rng.uniform_index(unseen_cfg.unseen_palette.size())];
  }
  return out;
}

void add_pixel_noise(Image& img, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  for (auto& v : img.data)
    v = std::clamp(v + static_cast<float>(sigma * rng.normal()), 0.0f, 1.0f);
}

const char* shape_name(ObjectShape s) {
  switch (s) {
    case ObjectShape::square_block: return "square_block";
    case ObjectShape::disk_bowl: return "disk_bowl";
    case ObjectShape::bar: return "bar";
    case ObjectShape::ell: return "ell";
  }
  return "?";
}

const char* role_name(ObjectRole r) {
  switch (r) {
    case ObjectRole::pick_target: return "pick_target";
    case ObjectRole::place_goal: return "place_goal";
    case ObjectRole::distractor: return "distractor";
  }
  return "?";
}

ObjectShape shape_from_name(const std::string& s) {
  if (s == "square_block") return ObjectShape::square_block;
  if (s == "disk_bowl") return ObjectShape::disk_bowl;
  if (s == "bar") return ObjectShape::bar;
  if (s == "ell") return ObjectShape::ell;
  throw ConfigError("unknown shape: " + s);
}

ObjectRole role_from_name(const std::string& s) {
  if (s == "pick_target") return ObjectRole::pick_target;
  if (s == "place_goal") return ObjectRole::place_goal;
  if (s == "distractor") return ObjectRole::distractor;
  throw ConfigError("unknown role: " + s);
}

}  // namespace c3dm
