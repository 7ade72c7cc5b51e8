#pragma once

#include "dvseg/tensor.hpp"

namespace dvseg {

// Same-size convolution in the deep-learning (cross-correlation, no kernel
// flip) convention: stride 1, zero padding (ksize-1)/2. For each output
// element the summation runs over (in_channel, ky, kx) in ascending order,
// matching the serial reference in dvseg::ref bit for bit.
Tensor convolve(const Tensor& x, const ConvKernel& k);

// Adjoint of convolve(., k) with respect to the input:
// <convolve(u,k), e> == <u, convolve_adjoint_input(e,k)> for all u.
Tensor convolve_adjoint_input(const Tensor& e, const ConvKernel& k);

// Adjoint of convolve(x, .) with respect to the kernel weights:
// <convolve(x,dk), e> == <dk, convolve_weight_gradient(x,e,ksize)> for all dk.
ConvKernel convolve_weight_gradient(const Tensor& x, const Tensor& e, int ksize);

// Bilinear upsampling by an integer factor, half-pixel-center convention:
// source coordinate = (dest + 0.5)/factor - 0.5, clamped to borders.
Tensor upsample_bilinear(const Tensor& s, int factor);

// Exact adjoint of upsample_bilinear: <U(u), e> == <u, upsample_adjoint(e)>.
// e's spatial size must be divisible by factor.
Tensor upsample_adjoint(const Tensor& e, int factor);

// 1-D interpolation taps of the half-pixel-center bilinear map for a given
// source length and factor. tap0/tap1 are clamped source indices, t the
// fractional weight of tap1. Shared by the forward kernel, its adjoint and
// the fused weighting stencil in the optimizer.
struct BilinearTaps {
  std::vector<int> i0, i1;
  std::vector<double> t;
};
BilinearTaps bilinear_taps(int src_len, int factor);

void check_finite(const Tensor& t, const char* what);

}  // namespace dvseg
