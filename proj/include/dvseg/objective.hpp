#pragma once

#include <vector>

#include "dvseg/sample_memory.hpp"
#include "dvseg/target_model.hpp"

namespace dvseg {

// How the desired target influence kappa is derived from kappa_min and the
// actual influence kappa_hat. BalancedMax (kappa = max(kappa_min, kappa_hat))
// boosts small targets toward a floor influence of kappa_min and leaves large
// ones alone; LiteralMin applies min() instead and is kept selectable for
// fidelity experiments. Both are tested.
enum class PixelWeightRule { BalancedMax, LiteralMin };

struct LossTerms {
  double lambda1 = 1e-2;  // regularization on the 1x1 layer
  double lambda2 = 1e-2;  // regularization on the 3x3 layer
  double kappa_min = 0.1;
  PixelWeightRule rule = PixelWeightRule::BalancedMax;
};

struct PixelWeightMask {
  Tensor v;                  // single channel, label resolution, two-valued
  double target_influence;   // kappa_hat: mean label value
  double applied_influence;  // kappa after the rule
  double target_value;       // kappa / kappa_hat
  double background_value;   // (1 - kappa) / (1 - kappa_hat)
};

// Balancing weights for one label mask. Soft labels are allowed: kappa_hat is
// the mean label value and pixels with y >= 0.5 count as target for the
// two-valued partition (identical to the binary definition on binary masks).
// Throws DegenerateMaskError when kappa_hat is 0 or 1.
PixelWeightMask compute_pixel_weights(const Tensor& y, double kappa_min, PixelWeightRule rule);

// Residual vector of the online loss: per sample sqrt(gamma_k) * v_k .*
// (y_k - U(D(x_k))) at label resolution, plus sqrt(lambda_j) * w_j per
// parameter group. The upsampling factor is inferred per sample from the
// label/feature size ratio.
struct ResidualSet {
  std::vector<Tensor> data_residuals;
  std::vector<std::vector<double>> reg_residuals;  // [group: w1, w2]
};

ResidualSet compute_residuals(const TargetModelParams& params, const MemorySnapshot& memory,
                              const LossTerms& loss);

// Sum of squared residual entries; data terms in sample order, then the two
// regularization blocks. Deterministic reduction order.
double loss_value(const ResidualSet& r);

// Analytic gradient of loss_value(compute_residuals(w)): 2 * sum_k J_k^T r_k
// plus the regularization part, composed from the adjoint primitives. With
// W2Only the w1 slot is zero (the loss is restricted to w2).
TargetModelParams objective_gradient(const TargetModelParams& params, const MemorySnapshot& memory,
                                     const LossTerms& loss, LayerMode mode);

}  // namespace dvseg
