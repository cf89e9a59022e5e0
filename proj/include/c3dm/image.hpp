#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace c3dm {

struct Rgb {
  float r = 0.0f, g = 0.0f, b = 0.0f;
};

// Dense RGB raster, row-major, channels interleaved, values in [0, 1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> data;  // h * w * 3

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_ * 3, 0.0f) {}
  Image(int h_, int w_, Rgb fill) : Image(h_, w_) { clear(fill); }

  std::size_t idx(int row, int col) const {
    return (static_cast<std::size_t>(row) * w + col) * 3;
  }
  float* px(int row, int col) { return data.data() + idx(row, col); }
  const float* px(int row, int col) const { return data.data() + idx(row, col); }

  void set(int row, int col, Rgb c) {
    float* p = px(row, col);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  Rgb get(int row, int col) const {
    const float* p = px(row, col);
    return {p[0], p[1], p[2]};
  }

  void clear(Rgb c) {
    for (std::size_t i = 0; i + 2 < data.size(); i += 3) {
      data[i] = c.r;
      data[i + 1] = c.g;
      data[i + 2] = c.b;
    }
  }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

// Binary PPM (P6, maxval 255).
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

// Box-average downsample by an integer factor (both dims must divide).
Image downsample_average(const Image& img, int factor);

// Bilinear sample at continuous pixel coordinates (px ~ column axis,
// py ~ row axis, pixel centers at half-integers). Clamps at borders.
Rgb bilinear_sample(const Image& img, double px, double py);

}  // namespace c3dm
