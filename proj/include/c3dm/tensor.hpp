#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "c3dm/error.hpp"

namespace c3dm {

// Dense row-major double tensor. Deliberately minimal: named shapes plus
// flat storage; all math lives in the layer kernels.
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
    data.assign(numel_of(dims), 0.0);
  }
  Tensor(std::vector<int> d, std::vector<double> values)
      : dims(std::move(d)), data(std::move(values)) {
    if (data.size() != numel_of(dims))
      throw ShapeError("Tensor: data length does not match dims");
  }

  static std::size_t numel_of(const std::vector<int>& d) {
    std::size_t n = 1;
    for (int v : d) {
      if (v <= 0) throw ShapeError("Tensor: non-positive dim");
      n *= static_cast<std::size_t>(v);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i)
      s += (i ? "," : "") + std::to_string(dims[i]);
    return s + "]";
  }
};

}  // namespace c3dm
