#include "dvseg/optimizer.hpp"

#include <algorithm>

#include "dvseg/tensor_ops.hpp"

namespace dvseg {

namespace {

int infer_factor(const Tensor& features, const Tensor& label) {
  if (features.height <= 0 || label.height % features.height != 0 ||
      label.width % features.width != 0)
    throw DimensionError("sample weighting: label size is not a multiple of feature size");
  const int fy = label.height / features.height;
  const int fx = label.width / features.width;
  if (fy != fx) throw DimensionError("sample weighting: anisotropic label/feature size ratio");
  return fy;
}

void add_kernel(ConvKernel& dst, const ConvKernel& src, double a) {
  for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += a * src.weights[i];
}

double kernel_sq(const ConvKernel& k) {
  double s = 0.0;
  for (double w : k.weights) s += w * w;
  return s;
}

}  // namespace

SampleWeighting build_sample_weighting(const Tensor& features, const Tensor& label,
                                       const LossTerms& loss) {
  const int factor = infer_factor(features, label);
  const int H = features.height, W = features.width;
  const PixelWeightMask vm = compute_pixel_weights(label, loss.kappa_min, loss.rule);
  const BilinearTaps ty = bilinear_taps(H, factor);
  const BilinearTaps tx = bilinear_taps(W, factor);

  SampleWeighting sw;
  sw.factor = factor;
  sw.stencil = Tensor(9, H, W);
  sw.label_proj = Tensor(1, H, W);
  sw.label_energy = 0.0;

  for (int dy = 0; dy < label.height; ++dy) {
    int niy;
    int iy[2];
    double wy[2];
    if (ty.i0[dy] == ty.i1[dy]) {
      niy = 1; iy[0] = ty.i0[dy]; wy[0] = 1.0;
    } else {
      niy = 2;
      iy[0] = ty.i0[dy]; wy[0] = 1.0 - ty.t[dy];
      iy[1] = ty.i1[dy]; wy[1] = ty.t[dy];
    }
    for (int dx = 0; dx < label.width; ++dx) {
      int nix;
      int ix[2];
      double wx[2];
      if (tx.i0[dx] == tx.i1[dx]) {
        nix = 1; ix[0] = tx.i0[dx]; wx[0] = 1.0;
      } else {
        nix = 2;
        ix[0] = tx.i0[dx]; wx[0] = 1.0 - tx.t[dx];
        ix[1] = tx.i1[dx]; wx[1] = tx.t[dx];
      }
      const double v = vm.v.at(0, dy, dx);
      const double v2 = v * v;
      const double yv = label.at(0, dy, dx);
      sw.label_energy += v2 * yv * yv;

      int n = 0;
      int sy[4], sx[4];
      double wgt[4];
      for (int a = 0; a < niy; ++a) {
        for (int b = 0; b < nix; ++b) {
          sy[n] = iy[a]; sx[n] = ix[b]; wgt[n] = wy[a] * wx[b]; ++n;
        }
      }
      for (int a = 0; a < n; ++a) {
        sw.label_proj.at(0, sy[a], sx[a]) += wgt[a] * v2 * yv;
        for (int b = 0; b < n; ++b) {
          const int ch = (sy[b] - sy[a] + 1) * 3 + (sx[b] - sx[a] + 1);
          sw.stencil.at(ch, sy[a], sx[a]) += wgt[a] * wgt[b] * v2;
        }
      }
    }
  }
  return sw;
}

Tensor stencil_apply(const Tensor& stencil, const Tensor& t) {
  if (t.channels != 1 || t.height != stencil.height || t.width != stencil.width)
    throw DimensionError("stencil_apply: shape mismatch");
  const int H = t.height, W = t.width;
  Tensor out(1, H, W);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    double* orow = out.row(0, y);
    for (int ch = 0; ch < 9; ++ch) {
      const int dy = ch / 3 - 1, dx = ch % 3 - 1;
      const int sy = y + dy;
      if (sy < 0 || sy >= H) continue;
      const double* mrow = stencil.row(ch, y);
      const double* trow = t.row(0, sy);
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      for (int x = x0; x < x1; ++x) orow[x] += mrow[x] * trow[x + dx];
    }
  }
  return out;
}

const SampleWeighting& GnWorkspace::weighting(const MemorySample& sample, const LossTerms& loss) {
  auto it = weightings_.find(sample.id);
  if (it == weightings_.end()) {
    it = weightings_.emplace(sample.id, build_sample_weighting(*sample.features, *sample.label, loss))
             .first;
  }
  return it->second;
}

const Tensor* GnWorkspace::projected(std::uint64_t id) const {
  auto it = projections_.find(id);
  return it == projections_.end() ? nullptr : &it->second;
}

void GnWorkspace::store_projected(std::uint64_t id, const ConvKernel& w1, Tensor z) {
  if (w1_snapshot_ != w1.weights) {
    projections_.clear();
    w1_snapshot_ = w1.weights;
  }
  projections_.emplace(id, std::move(z));
}

void GnWorkspace::note_w1(const ConvKernel& w1) {
  if (w1_snapshot_ != w1.weights) {
    projections_.clear();
    w1_snapshot_ = w1.weights;
  }
}

void GnWorkspace::prune(const MemorySnapshot& memory) {
  auto live = [&memory](std::uint64_t id) {
    for (const MemorySample& s : memory)
      if (s.id == id) return true;
    return false;
  };
  for (auto it = weightings_.begin(); it != weightings_.end();) {
    it = live(it->first) ? std::next(it) : weightings_.erase(it);
  }
  for (auto it = projections_.begin(); it != projections_.end();) {
    it = live(it->first) ? std::next(it) : projections_.erase(it);
  }
}

NormalOperator::NormalOperator(const TargetModelParams& params, const MemorySnapshot& memory,
                               const LossTerms& loss, LayerMode mode, GnWorkspace* workspace,
                               Path path)
    : params_(params), memory_(memory), loss_(loss), mode_(mode), path_(path) {
  if (memory_.empty()) throw ArgumentError("NormalOperator: empty memory");
  const std::size_t n = memory_.size();

  if (workspace) {
    workspace->prune(memory_);
    if (mode_ == LayerMode::W2Only) workspace->note_w1(params_.w1);
  }

  weightings_.resize(n, nullptr);
  projected_.resize(n);
  projected_ptr_.resize(n, nullptr);
  for (std::size_t k = 0; k < n; ++k) {
    const MemorySample& s = memory_[k];
    if (workspace) {
      weightings_[k] = &workspace->weighting(s, loss_);
    } else {
      if (local_weightings_.empty()) local_weightings_.resize(n);
      local_weightings_[k] = build_sample_weighting(*s.features, *s.label, loss_);
      weightings_[k] = &local_weightings_[k];
    }
    if (mode_ == LayerMode::W2Only && workspace) {
      if (const Tensor* z = workspace->projected(s.id)) {
        projected_ptr_[k] = z;
      } else {
        workspace->store_projected(s.id, params_.w1, convolve(*s.features, params_.w1));
        projected_ptr_[k] = workspace->projected(s.id);
      }
    } else {
      projected_[k] = convolve(*s.features, params_.w1);
      projected_ptr_[k] = &projected_[k];
    }
  }

  // Right-hand side -J^T r and the loss at the linearization point.
  rhs_ = TargetModelParams::zeros_like(params_);
  double data_loss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const MemorySample& s = memory_[k];
    const SampleWeighting& sw = *weightings_[k];
    const Tensor& z = *projected_ptr_[k];
    const Tensor score = convolve(z, params_.w2);
    Tensor q;
    if (path_ == Path::Fused) {
      const Tensor ms = stencil_apply(sw.stencil, score);
      data_loss += s.weight * (sw.label_energy - 2.0 * tensor_dot(score, sw.label_proj) +
                               tensor_dot(score, ms));
      q = Tensor(1, score.height, score.width);
      for (std::size_t i = 0; i < q.data.size(); ++i)
        q.data[i] = s.weight * (sw.label_proj.data[i] - ms.data[i]);
    } else {
      const PixelWeightMask vm = compute_pixel_weights(*s.label, loss_.kappa_min, loss_.rule);
      const Tensor up = upsample_bilinear(score, sw.factor);
      Tensor e(1, up.height, up.width);
      double sq = 0.0;
      for (std::size_t i = 0; i < e.data.size(); ++i) {
        const double v = vm.v.data[i];
        const double diff = s.label->data[i] - up.data[i];
        sq += v * v * diff * diff;
        e.data[i] = s.weight * v * v * diff;
      }
      data_loss += s.weight * sq;
      q = upsample_adjoint(e, sw.factor);
    }
    add_kernel(rhs_.w2, convolve_weight_gradient(z, q, 3), 1.0);
    if (mode_ == LayerMode::Both) {
      add_kernel(rhs_.w1,
                 convolve_weight_gradient(*s.features, convolve_adjoint_input(q, params_.w2), 1),
                 1.0);
    }
  }
  if (mode_ == LayerMode::Both) add_kernel(rhs_.w1, params_.w1, -loss_.lambda1);
  add_kernel(rhs_.w2, params_.w2, -loss_.lambda2);
  loss_value_ = data_loss + loss_.lambda1 * kernel_sq(params_.w1) +
                loss_.lambda2 * kernel_sq(params_.w2);
}

TargetModelParams NormalOperator::apply(const TargetModelParams& dw) const {
  TargetModelParams out = TargetModelParams::zeros_like(params_);
  for (std::size_t k = 0; k < memory_.size(); ++k) {
    const MemorySample& s = memory_[k];
    const SampleWeighting& sw = *weightings_[k];
    const Tensor& z = *projected_ptr_[k];

    Tensor t = convolve(z, dw.w2);
    if (mode_ == LayerMode::Both) {
      const Tensor via_w1 = convolve(convolve(*s.features, dw.w1), params_.w2);
      for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += via_w1.data[i];
    }

    Tensor u;
    if (path_ == Path::Fused) {
      u = stencil_apply(sw.stencil, t);
    } else {
      const PixelWeightMask vm = compute_pixel_weights(*s.label, loss_.kappa_min, loss_.rule);
      Tensor up = upsample_bilinear(t, sw.factor);
      for (std::size_t i = 0; i < up.data.size(); ++i)
        up.data[i] *= vm.v.data[i] * vm.v.data[i];
      u = upsample_adjoint(up, sw.factor);
    }
    for (double& v : u.data) v *= s.weight;

    add_kernel(out.w2, convolve_weight_gradient(z, u, 3), 1.0);
    if (mode_ == LayerMode::Both) {
      add_kernel(out.w1,
                 convolve_weight_gradient(*s.features, convolve_adjoint_input(u, params_.w2), 1),
                 1.0);
    }
  }
  if (mode_ == LayerMode::Both) add_kernel(out.w1, dw.w1, loss_.lambda1);
  add_kernel(out.w2, dw.w2, loss_.lambda2);
  return out;
}

double NormalOperator::quadratic_model(const TargetModelParams& dw) const {
  return loss_value_ - 2.0 * dot(dw, rhs_) + dot(dw, apply(dw));
}

double memory_loss(const TargetModelParams& params, const MemorySnapshot& memory,
                   const LossTerms& loss, GnWorkspace* workspace) {
  if (memory.empty()) throw ArgumentError("memory_loss: empty memory");
  double data_loss = 0.0;
  for (const MemorySample& s : memory) {
    const SampleWeighting* sw;
    SampleWeighting local;
    if (workspace) {
      sw = &workspace->weighting(s, loss);
    } else {
      local = build_sample_weighting(*s.features, *s.label, loss);
      sw = &local;
    }
    const Tensor score = convolve(convolve(*s.features, params.w1), params.w2);
    const Tensor ms = stencil_apply(sw->stencil, score);
    data_loss += s.weight * (sw->label_energy - 2.0 * tensor_dot(score, sw->label_proj) +
                             tensor_dot(score, ms));
  }
  return data_loss + loss.lambda1 * kernel_sq(params.w1) + loss.lambda2 * kernel_sq(params.w2);
}

GnStepResult gauss_newton_step(const TargetModelParams& params, const MemorySnapshot& memory,
                               const OptimizerConfig& cfg, int cg_iters, LayerMode mode,
                               GnWorkspace* workspace) {
  if (cg_iters < 1) throw ArgumentError("gauss_newton_step: cg_iters must be >= 1");
  NormalOperator op(params, memory, cfg.loss, mode, workspace);
  CgInfo info;
  const TargetModelParams dw = conjugate_gradient(
      [&op](const TargetModelParams& p) { return op.apply(p); }, op.rhs(), cg_iters,
      cfg.cg_tolerance, &info);

  GnStepResult res;
  res.params = params;
  res.params.add_scaled(dw, 1.0);
  res.loss_before = op.loss_at_linearization();
  res.loss_after = memory_loss(res.params, memory, cfg.loss, workspace);
  res.cg_iterations = info.iterations;
  return res;
}

TargetModelParams optimize(TargetModelParams params, const MemorySnapshot& memory,
                           const OptimizerConfig& cfg, LayerMode mode, GnWorkspace* workspace,
                           const GnSink& sink) {
  if (cfg.n_gn < 1 || cfg.n_cgi < 1 || cfg.n_cg < 1 || cfg.n_cgu < 1)
    throw ArgumentError("optimize: iteration counts must be >= 1");
  for (int step = 0; step < cfg.n_gn; ++step) {
    const int budget = (step == 0) ? cfg.n_cgi : cfg.n_cg;
    GnStepResult r = gauss_newton_step(params, memory, cfg, budget, mode, workspace);
    params = std::move(r.params);
    if (sink) sink(GnStepRecord{step, r.cg_iterations, r.loss_before, r.loss_after});
  }
  return params;
}

TargetModelParams optimize_update(TargetModelParams params, const MemorySnapshot& memory,
                                  const OptimizerConfig& cfg, GnWorkspace* workspace,
                                  const GnSink& sink) {
  GnStepResult r =
      gauss_newton_step(params, memory, cfg, cfg.n_cgu, LayerMode::W2Only, workspace);
  if (sink) sink(GnStepRecord{0, r.cg_iterations, r.loss_before, r.loss_after});
  return std::move(r.params);
}

}  // namespace dvseg
