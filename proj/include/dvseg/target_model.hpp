#pragma once

#include <cstdint>

#include "dvseg/tensor.hpp"

namespace dvseg {

// Which parameter group an optimization pass touches. The first layer stays
// fixed during per-frame model updates; first-frame optimization trains both.
enum class LayerMode { Both, W2Only };

struct ModelConfig {
  int feature_channels = 64;
  int c = 16;  // channel count after the 1x1 projection
  std::uint64_t init_seed = 0;
};

// The two-layer factorized discriminator: a 1x1 projection to c channels
// followed by a 3x3 scorer with one output channel. No bias terms, no
// nonlinearities. Also serves as the parameter-space vector type for the
// Gauss-Newton/CG machinery.
struct TargetModelParams {
  ConvKernel w1;  // 1x1, feature_channels -> c
  ConvKernel w2;  // 3x3, c -> 1

  static TargetModelParams zeros_like(const TargetModelParams& p);

  void set_zero();
  void add_scaled(const TargetModelParams& o, double a);  // this += a * o
  void scale(double a);
  std::size_t numel() const { return w1.numel() + w2.numel(); }
  bool same_shape(const TargetModelParams& o) const {
    return w1.same_shape(o.w1) && w2.same_shape(o.w2);
  }
};

double dot(const TargetModelParams& a, const TargetModelParams& b);

// Kaiming-normal initialization: each kernel entry ~ N(0, 2/fan_in),
// fan_in = in_channels * ksize^2. Deterministic in cfg.init_seed.
TargetModelParams init_params(const ModelConfig& cfg);

// s = w2 * (w1 * x); single-channel score map at feature resolution.
Tensor model_forward(const TargetModelParams& params, const Tensor& x);

// Directional derivative of the model at `params` along `delta`:
//   (delta.w1 path) w2 * (delta.w1 * x)  +  (delta.w2 path) delta.w2 * (w1 * x)
// W2Only drops the first term. Exact in delta.w2 (the model is linear there).
Tensor jacobian_apply(const TargetModelParams& params, const Tensor& x,
                      const TargetModelParams& delta, LayerMode mode);

// Adjoint of jacobian_apply: <jacobian_apply(p,x,d,m), e> == <d, result> for
// every parameter perturbation d. e is a single-channel score-shaped tensor.
TargetModelParams jacobian_transpose_apply(const TargetModelParams& params, const Tensor& x,
                                           const Tensor& e, LayerMode mode);

}  // namespace dvseg
