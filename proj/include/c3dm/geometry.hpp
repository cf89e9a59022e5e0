#pragma once

#include <optional>
#include <string>
#include <vector>

#include "c3dm/image.hpp"
#include "c3dm/rng.hpp"
#include "c3dm/schedules.hpp"

namespace c3dm {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Affine map between real-plane coordinates (meters) and continuous pixel
// coordinates: px = scale_x * x + offset_x, py = scale_y * y + offset_y.
// px runs along columns, py along rows; pixel (r, c) covers
// [c, c+1) x [r, r+1) with its center at (c + 0.5, r + 0.5).
struct CameraTransform {
  double scale_x = 64.0, scale_y = 64.0;
  double offset_x = 32.0, offset_y = 32.0;
  int image_h = 64, image_w = 64;
};

// Axis-aligned fixation window in the parent transform's pixel space.
struct Window {
  Vec2 center;       // pixels
  Vec2 half_extent;  // pixels per axis (x: width/2, y: height/2)
  CameraTransform parent;

  double area() const { return 4.0 * half_extent.x * half_extent.y; }
  bool contains(Vec2 p, double tol = 0.0) const {
    return std::abs(p.x - center.x) <= half_extent.x + tol &&
           std::abs(p.y - center.y) <= half_extent.y + tol;
  }
};

// Full-image window for a transform (the unconstrained context).
Window full_window(const CameraTransform& t);

// One sub-action: an (x, y) position pair and optionally a yaw slot.
struct SubAction {
  std::string name;
  bool has_yaw = true;
  int offset = 0;  // index of the x slot within the flat vector
  int dim() const { return has_yaw ? 3 : 2; }
};

struct ActionLayout {
  std::vector<SubAction> subs;
  int dim() const {
    int d = 0;
    for (const auto& s : subs) d += s.dim();
    return d;
  }
};

// Pick(x, y, yaw) + place(x, y, yaw); D = 6.
ActionLayout pick_place_layout();

enum class ActionFrame { global_meters, window_normalized };

// Flat action vector plus its layout and the frame its positions live in.
struct ActionVec {
  std::vector<double> values;
  ActionLayout layout;
  ActionFrame frame = ActionFrame::global_meters;

  Vec2 position(int sub) const {
    const auto& s = layout.subs.at(sub);
    return {values.at(s.offset), values.at(s.offset + 1)};
  }
  void set_position(int sub, Vec2 p) {
    const auto& s = layout.subs.at(sub);
    values.at(s.offset) = p.x;
    values.at(s.offset + 1) = p.y;
  }
  double yaw(int sub) const {
    const auto& s = layout.subs.at(sub);
    return s.has_yaw ? values.at(s.offset + 2) : 0.0;
  }
};

// Wrap an angle into (-pi, pi].
double wrap_angle(double a);

Vec2 real_to_img(const CameraTransform& t, Vec2 xy);
Vec2 img_to_real(const CameraTransform& t, Vec2 pixel);

// Pixel location of a sub-action's actuation position.
// Throws DomainError for an invalid sub-action index.
Vec2 fixation_point(const ActionVec& a, int sub_action, const CameraTransform& t);

// Build the fixation window consumed at time t: side fraction
// f = max(t / horizon, f_min) of the image per axis, centered at p plus a
// random jitter that keeps p inside the window, then translated as needed to
// stay within the image. rng == nullptr disables jitter.
// Throws DomainError when p lies outside the image.
Window constrain_window(Vec2 p, double t, const ScheduleSpec& spec,
                        double f_min, const CameraTransform& t_cam, Rng* rng);

// Replace every pixel outside the window with `background`.
Image mask_context(const Image& o, const Window& w, Rgb background);

// Affine remap of position slots so the window spans [-1, 1]^2; yaw slots
// are untouched. Out-of-window positions map outside [-1, 1] (legal for
// noisy latents).
ActionVec renormalize_action(const ActionVec& a, const Window& w);
ActionVec unnormalize_action(const ActionVec& a, const Window& w);

// Real-plane rectangle covered by a window (axis-aligned, sorted bounds).
struct RealRect {
  double x0, x1, y0, y1;
};
RealRect window_real_rect(const Window& w);

// Camera transform that maps the window's real-plane rectangle onto an
// out_w x out_h raster (the "moved closer" camera).
CameraTransform window_camera(const Window& w, int out_h, int out_w);

// Zoomed view of a cached high-resolution bitmap: crops the window region
// (scaled by `factor`, the high-res oversampling ratio relative to the
// window's parent) and bilinearly resamples it to out_h x out_w.
Image zoom_from_bitmap(const Image& high_res, int factor, const Window& w,
                       int out_h, int out_w);

}  // namespace c3dm
