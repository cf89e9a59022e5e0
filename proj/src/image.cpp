#include "c3dm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "c3dm/error.hpp"

namespace c3dm {

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_ppm: cannot open " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write_ppm: short write to " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw IoError("read_ppm: unsupported header in " + path);
  in.get();  // single whitespace after maxval
  Image img(h, w);
  std::vector<unsigned char> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("read_ppm: truncated pixel data in " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

Image downsample_average(const Image& img, int factor) {
  if (factor <= 0 || img.h % factor != 0 || img.w % factor != 0)
    throw ShapeError("downsample_average: factor must divide both dims");
  Image out(img.h / factor, img.w / factor);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int r = 0; r < out.h; ++r) {
    for (int c = 0; c < out.w; ++c) {
      float acc[3] = {0, 0, 0};
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) {
          const float* p = img.px(r * factor + dr, c * factor + dc);
          acc[0] += p[0];
          acc[1] += p[1];
          acc[2] += p[2];
        }
      }
      out.set(r, c, {acc[0] * inv, acc[1] * inv, acc[2] * inv});
    }
  }
  return out;
}

Rgb bilinear_sample(const Image& img, double px, double py) {
  // Convert to sample-space where pixel i has center at i.
  const double x = px - 0.5;
  const double y = py - 0.5;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto cl = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  const int c0 = cl(x0, img.w), c1 = cl(x0 + 1, img.w);
  const int r0 = cl(y0, img.h), r1 = cl(y0 + 1, img.h);
  const float* p00 = img.px(r0, c0);
  const float* p01 = img.px(r0, c1);
  const float* p10 = img.px(r1, c0);
  const float* p11 = img.px(r1, c1);
  Rgb out;
  float* o = &out.r;
  for (int ch = 0; ch < 3; ++ch) {
    const double top = p00[ch] * (1.0 - fx) + p01[ch] * fx;
    const double bot = p10[ch] * (1.0 - fx) + p11[ch] * fx;
    o[ch] = static_cast<float>(top * (1.0 - fy) + bot * fy);
  }
  return out;
}

}  // namespace c3dm
