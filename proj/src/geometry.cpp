#include "c3dm/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "c3dm/error.hpp"

namespace c3dm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Window full_window(const CameraTransform& t) {
  Window w;
  w.center = {t.image_w * 0.5, t.image_h * 0.5};
  w.half_extent = {t.image_w * 0.5, t.image_h * 0.5};
  w.parent = t;
  return w;
}

ActionLayout pick_place_layout() {
  ActionLayout l;
  l.subs.push_back({"pick", true, 0});
  l.subs.push_back({"place", true, 3});
  return l;
}

Vec2 real_to_img(const CameraTransform& t, Vec2 xy) {
  return {t.scale_x * xy.x + t.offset_x, t.scale_y * xy.y + t.offset_y};
}

Vec2 img_to_real(const CameraTransform& t, Vec2 pixel) {
  return {(pixel.x - t.offset_x) / t.scale_x, (pixel.y - t.offset_y) / t.scale_y};
}

Vec2 fixation_point(const ActionVec& a, int sub_action, const CameraTransform& t) {
  if (sub_action < 0 || sub_action >= static_cast<int>(a.layout.subs.size()))
    throw DomainError("fixation_point: sub-action index " +
                      std::to_string(sub_action) + " out of range");
  return real_to_img(t, a.position(sub_action));
}

Window constrain_window(Vec2 p, double t, const ScheduleSpec& spec,
                        double f_min, const CameraTransform& t_cam, Rng* rng) {
  if (p.x < 0.0 || p.x > t_cam.image_w || p.y < 0.0 || p.y > t_cam.image_h)
    throw DomainError("constrain_window: fixation point outside image");
  const double f = std::clamp(std::max(t / spec.horizon_t, f_min), 0.0, 1.0);
  const Vec2 half{0.5 * f * t_cam.image_w, 0.5 * f * t_cam.image_h};

  auto place_axis = [&](double pc, double h, double img) {
    // Centers that keep p inside the window and the window inside the image.
    const double lo = std::max(h, pc - h);
    const double hi = std::min(img - h, pc + h);
    if (lo >= hi) return std::clamp(pc, h, img - h);
    if (rng == nullptr) return std::clamp(pc, lo, hi);
    return rng->uniform(lo, hi);
  };

  Window w;
  w.center = {place_axis(p.x, half.x, t_cam.image_w),
              place_axis(p.y, half.y, t_cam.image_h)};
  w.half_extent = half;
  w.parent = t_cam;
  return w;
}

Image mask_context(const Image& o, const Window& w, Rgb background) {
  Image out = o;
  for (int r = 0; r < out.h; ++r) {
    for (int c = 0; c < out.w; ++c) {
      const Vec2 center{c + 0.5, r + 0.5};
      if (!w.contains(center)) out.set(r, c, background);
    }
  }
  return out;
}

ActionVec renormalize_action(const ActionVec& a, const Window& w) {
  ActionVec out = a;
  for (std::size_t s = 0; s < a.layout.subs.size(); ++s) {
    const Vec2 px = real_to_img(w.parent, a.position(static_cast<int>(s)));
    out.set_position(static_cast<int>(s),
                     {(px.x - w.center.x) / w.half_extent.x,
                      (px.y - w.center.y) / w.half_extent.y});
  }
  out.frame = ActionFrame::window_normalized;
  return out;
}

ActionVec unnormalize_action(const ActionVec& a, const Window& w) {
  ActionVec out = a;
  for (std::size_t s = 0; s < a.layout.subs.size(); ++s) {
    const Vec2 n = a.position(static_cast<int>(s));
    const Vec2 px{w.center.x + n.x * w.half_extent.x,
                  w.center.y + n.y * w.half_extent.y};
    out.set_position(static_cast<int>(s), img_to_real(w.parent, px));
  }
  out.frame = ActionFrame::global_meters;
  return out;
}

RealRect window_real_rect(const Window& w) {
  const Vec2 a = img_to_real(w.parent, {w.center.x - w.half_extent.x,
                                        w.center.y - w.half_extent.y});
  const Vec2 b = img_to_real(w.parent, {w.center.x + w.half_extent.x,
                                        w.center.y + w.half_extent.y});
  return {std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y),
          std::max(a.y, b.y)};
}

CameraTransform window_camera(const Window& w, int out_h, int out_w) {
  if (w.half_extent.x <= 0.0 || w.half_extent.y <= 0.0)
    throw DomainError("window_camera: degenerate window");
  const RealRect r = window_real_rect(w);
  CameraTransform t;
  t.image_h = out_h;
  t.image_w = out_w;
  // Preserve axis direction of the parent camera.
  const double sx = out_w / (r.x1 - r.x0);
  const double sy = out_h / (r.y1 - r.y0);
  if (w.parent.scale_x >= 0) {
    t.scale_x = sx;
    t.offset_x = -r.x0 * sx;
  } else {
    t.scale_x = -sx;
    t.offset_x = r.x1 * sx;
  }
  if (w.parent.scale_y >= 0) {
    t.scale_y = sy;
    t.offset_y = -r.y0 * sy;
  } else {
    t.scale_y = -sy;
    t.offset_y = r.y1 * sy;
  }
  return t;
}

Image zoom_from_bitmap(const Image& high_res, int factor, const Window& w,
                       int out_h, int out_w) {
  if (w.half_extent.x <= 0.0 || w.half_extent.y <= 0.0)
    throw DomainError("zoom_from_bitmap: degenerate window");
  Image out(out_h, out_w);
  const double x0 = (w.center.x - w.half_extent.x) * factor;
  const double y0 = (w.center.y - w.half_extent.y) * factor;
  const double sx = 2.0 * w.half_extent.x * factor / out_w;
  const double sy = 2.0 * w.half_extent.y * factor / out_h;
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const double px = x0 + (c + 0.5) * sx;
      const double py = y0 + (r + 0.5) * sy;
      out.set(r, c, bilinear_sample(high_res, px, py));
    }
  }
  return out;
}

}  // namespace c3dm
