#pragma once

#include "dvseg/tensor.hpp"

// Serial reference implementations, deliberately naive. They define the
// expected arithmetic for the OpenMP kernels in tensor_ops.hpp: convolve is
// required to match bit for bit (identical per-element summation order), the
// rest to tight floating-point tolerances. Used by the test suites and the
// kernel benchmark; never called from the engine.
namespace dvseg::ref {

Tensor convolve(const Tensor& x, const ConvKernel& k);
Tensor convolve_adjoint_input(const Tensor& e, const ConvKernel& k);
ConvKernel convolve_weight_gradient(const Tensor& x, const Tensor& e, int ksize);
Tensor upsample_bilinear(const Tensor& s, int factor);
Tensor upsample_adjoint(const Tensor& e, int factor);

}  // namespace dvseg::ref
