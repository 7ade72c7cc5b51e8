#include "dvseg/target_model.hpp"

#include <cmath>
#include <random>

#include "dvseg/tensor_ops.hpp"

namespace dvseg {

TargetModelParams TargetModelParams::zeros_like(const TargetModelParams& p) {
  TargetModelParams z;
  z.w1 = ConvKernel(p.w1.out_channels, p.w1.in_channels, p.w1.ksize);
  z.w2 = ConvKernel(p.w2.out_channels, p.w2.in_channels, p.w2.ksize);
  return z;
}

void TargetModelParams::set_zero() {
  w1.set_zero();
  w2.set_zero();
}

void TargetModelParams::add_scaled(const TargetModelParams& o, double a) {
  for (std::size_t i = 0; i < w1.weights.size(); ++i) w1.weights[i] += a * o.w1.weights[i];
  for (std::size_t i = 0; i < w2.weights.size(); ++i) w2.weights[i] += a * o.w2.weights[i];
}

void TargetModelParams::scale(double a) {
  for (double& v : w1.weights) v *= a;
  for (double& v : w2.weights) v *= a;
}

double dot(const TargetModelParams& a, const TargetModelParams& b) {
  return kernel_dot(a.w1, b.w1) + kernel_dot(a.w2, b.w2);
}

namespace {

void fill_kaiming(ConvKernel& k, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(k.in_channels) * k.ksize * k.ksize;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& w : k.weights) w = dist(rng);
}

}  // namespace

TargetModelParams init_params(const ModelConfig& cfg) {
  if (cfg.c <= 0) throw ArgumentError("init_params: c must be positive");
  if (cfg.c > cfg.feature_channels)
    throw ArgumentError("init_params: c (" + std::to_string(cfg.c) +
                        ") exceeds feature channels (" + std::to_string(cfg.feature_channels) + ")");
  TargetModelParams p;
  p.w1 = ConvKernel(cfg.c, cfg.feature_channels, 1);
  p.w2 = ConvKernel(1, cfg.c, 3);
  std::mt19937_64 rng(cfg.init_seed);
  fill_kaiming(p.w1, rng);
  fill_kaiming(p.w2, rng);
  return p;
}

Tensor model_forward(const TargetModelParams& params, const Tensor& x) {
  return convolve(convolve(x, params.w1), params.w2);
}

Tensor jacobian_apply(const TargetModelParams& params, const Tensor& x,
                      const TargetModelParams& delta, LayerMode mode) {
  Tensor out = convolve(convolve(x, params.w1), delta.w2);
  if (mode == LayerMode::Both) {
    const Tensor via_w1 = convolve(convolve(x, delta.w1), params.w2);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += via_w1.data[i];
  }
  return out;
}

TargetModelParams jacobian_transpose_apply(const TargetModelParams& params, const Tensor& x,
                                           const Tensor& e, LayerMode mode) {
  if (e.channels != 1) throw DimensionError("jacobian_transpose_apply: e must be single-channel");
  TargetModelParams g = TargetModelParams::zeros_like(params);
  const Tensor z = convolve(x, params.w1);
  g.w2 = convolve_weight_gradient(z, e, 3);
  if (mode == LayerMode::Both) {
    g.w1 = convolve_weight_gradient(x, convolve_adjoint_input(e, params.w2), 1);
  }
  return g;
}

}  // namespace dvseg
