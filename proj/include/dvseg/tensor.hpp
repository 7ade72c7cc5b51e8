#pragma once

#include <cstddef>
#include <vector>

#include "dvseg/errors.hpp"

namespace dvseg {

// Dense 3-D array, row-major (channel, row, column). Carrier of features,
// score maps, label masks and weight masks. Double precision throughout:
// the optimizer is sensitive to rounding.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {
    if (c < 0 || h < 0 || w < 0) throw ArgumentError("Tensor: negative dimension");
  }

  static Tensor zeros(int c, int h, int w) { return Tensor(c, h, w); }

  std::size_t numel() const { return data.size(); }
  int plane() const { return height * width; }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  double* row(int c, int y) {
    return data.data() + (static_cast<std::size_t>(c) * height + y) * width;
  }
  const double* row(int c, int y) const {
    return data.data() + (static_cast<std::size_t>(c) * height + y) * width;
  }

  double* chan(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const double* chan(int c) const {
    return data.data() + static_cast<std::size_t>(c) * plane();
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Square convolution kernel bank, weights in [out][in][ky][kx] order.
struct ConvKernel {
  int out_channels = 0;
  int in_channels = 0;
  int ksize = 1;  // square, 1 or 3
  std::vector<double> weights;

  ConvKernel() = default;
  ConvKernel(int oc, int ic, int k)
      : out_channels(oc), in_channels(ic), ksize(k),
        weights(static_cast<std::size_t>(oc) * ic * k * k, 0.0) {
    if (oc <= 0 || ic <= 0) throw ArgumentError("ConvKernel: non-positive channel count");
    if (k != 1 && k != 3) throw ArgumentError("ConvKernel: kernel size must be 1 or 3");
  }

  std::size_t numel() const { return weights.size(); }

  double& at(int oc, int ic, int ky, int kx) {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * ksize + ky) * ksize + kx];
  }
  double at(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * ksize + ky) * ksize + kx];
  }

  bool same_shape(const ConvKernel& o) const {
    return out_channels == o.out_channels && in_channels == o.in_channels && ksize == o.ksize;
  }

  void set_zero() { std::fill(weights.begin(), weights.end(), 0.0); }
};

inline double tensor_dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("tensor_dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double kernel_dot(const ConvKernel& a, const ConvKernel& b) {
  if (!a.same_shape(b)) throw DimensionError("kernel_dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) s += a.weights[i] * b.weights[i];
  return s;
}

}  // namespace dvseg
