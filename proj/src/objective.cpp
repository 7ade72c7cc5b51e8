#include "dvseg/objective.hpp"

#include <cmath>

#include "dvseg/tensor_ops.hpp"

namespace dvseg {

PixelWeightMask compute_pixel_weights(const Tensor& y, double kappa_min, PixelWeightRule rule) {
  if (y.channels != 1) throw DimensionError("compute_pixel_weights: label must be single-channel");
  if (!(kappa_min > 0.0 && kappa_min < 1.0))
    throw ArgumentError("compute_pixel_weights: kappa_min must lie in (0, 1)");

  double sum = 0.0;
  for (double v : y.data) sum += v;
  const double kappa_hat = sum / static_cast<double>(y.numel());
  if (!(kappa_hat > 0.0 && kappa_hat < 1.0))
    throw DegenerateMaskError("compute_pixel_weights: mask is all-target or all-background");

  const double kappa = (rule == PixelWeightRule::BalancedMax) ? std::max(kappa_min, kappa_hat)
                                                              : std::min(kappa_min, kappa_hat);
  PixelWeightMask m;
  m.target_influence = kappa_hat;
  m.applied_influence = kappa;
  m.target_value = kappa / kappa_hat;
  m.background_value = (1.0 - kappa) / (1.0 - kappa_hat);
  m.v = Tensor(1, y.height, y.width);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    m.v.data[i] = (y.data[i] >= 0.5) ? m.target_value : m.background_value;
  }
  return m;
}

namespace {

int infer_upsample_factor(const Tensor& features, const Tensor& label) {
  if (features.height <= 0 || label.height % features.height != 0 ||
      label.width % features.width != 0)
    throw DimensionError("compute_residuals: label size is not a multiple of feature size");
  const int fy = label.height / features.height;
  const int fx = label.width / features.width;
  if (fy != fx)
    throw DimensionError("compute_residuals: anisotropic label/feature size ratio");
  return fy;
}

}  // namespace

ResidualSet compute_residuals(const TargetModelParams& params, const MemorySnapshot& memory,
                              const LossTerms& loss) {
  if (memory.empty()) throw ArgumentError("compute_residuals: empty memory");
  ResidualSet out;
  out.data_residuals.resize(memory.size());

  for (std::size_t k = 0; k < memory.size(); ++k) {
    const MemorySample& sample = memory[k];
    if (sample.weight < 0.0) throw ArgumentError("compute_residuals: negative sample weight");
    const Tensor& x = *sample.features;
    const Tensor& y = *sample.label;
    const int factor = infer_upsample_factor(x, y);
    const PixelWeightMask vm = compute_pixel_weights(y, loss.kappa_min, loss.rule);

    const Tensor up = upsample_bilinear(model_forward(params, x), factor);
    Tensor r(1, y.height, y.width);
    const double sg = std::sqrt(sample.weight);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
      r.data[i] = sg * vm.v.data[i] * (y.data[i] - up.data[i]);
    }
    out.data_residuals[k] = std::move(r);
  }

  const double sl1 = std::sqrt(loss.lambda1), sl2 = std::sqrt(loss.lambda2);
  out.reg_residuals.resize(2);
  out.reg_residuals[0].reserve(params.w1.numel());
  for (double w : params.w1.weights) out.reg_residuals[0].push_back(sl1 * w);
  out.reg_residuals[1].reserve(params.w2.numel());
  for (double w : params.w2.weights) out.reg_residuals[1].push_back(sl2 * w);
  return out;
}

double loss_value(const ResidualSet& r) {
  double total = 0.0;
  for (const Tensor& t : r.data_residuals) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    total += s;
  }
  for (const auto& group : r.reg_residuals) {
    double s = 0.0;
    for (double v : group) s += v * v;
    total += s;
  }
  return total;
}

TargetModelParams objective_gradient(const TargetModelParams& params, const MemorySnapshot& memory,
                                     const LossTerms& loss, LayerMode mode) {
  if (memory.empty()) throw ArgumentError("objective_gradient: empty memory");
  TargetModelParams grad = TargetModelParams::zeros_like(params);

  for (const MemorySample& sample : memory) {
    const Tensor& x = *sample.features;
    const Tensor& y = *sample.label;
    const int factor = infer_upsample_factor(x, y);
    const PixelWeightMask vm = compute_pixel_weights(y, loss.kappa_min, loss.rule);

    const Tensor up = upsample_bilinear(model_forward(params, x), factor);
    // e = v .* r where r = sqrt(gamma) v .* (y - U D); the sqrt(gamma) factors
    // combine with the leading one to a plain gamma.
    Tensor e(1, y.height, y.width);
    for (std::size_t i = 0; i < e.data.size(); ++i) {
      const double vv = vm.v.data[i];
      e.data[i] = vv * vv * (y.data[i] - up.data[i]);
    }
    const Tensor es = upsample_adjoint(e, factor);
    const TargetModelParams gk = jacobian_transpose_apply(params, x, es, mode);
    grad.add_scaled(gk, -2.0 * sample.weight);
  }

  const double l1 = (mode == LayerMode::Both) ? 2.0 * loss.lambda1 : 0.0;
  for (std::size_t i = 0; i < grad.w1.weights.size(); ++i)
    grad.w1.weights[i] += l1 * params.w1.weights[i];
  for (std::size_t i = 0; i < grad.w2.weights.size(); ++i)
    grad.w2.weights[i] += 2.0 * loss.lambda2 * params.w2.weights[i];
  return grad;
}

}  // namespace dvseg
