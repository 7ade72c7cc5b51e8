#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "dvseg/objective.hpp"
#include "dvseg/sample_memory.hpp"
#include "dvseg/target_model.hpp"

namespace dvseg {

struct OptimizerConfig {
  int n_gn = 5;    // Gauss-Newton steps, first-frame optimization
  int n_cgi = 5;   // CG iterations in the first GN step
  int n_cg = 10;   // CG iterations in the remaining GN steps
  int n_cgu = 10;  // CG iterations for a model update (single GN step)
  double cg_tolerance = 0.0;  // residual-ratio early exit; 0 = fixed budget
  LossTerms loss;
};

struct CgInfo {
  int iterations = 0;
  double residual_ratio = 1.0;
};

// Standard conjugate gradient from a zero initial iterate on a symmetric
// positive semidefinite operator. Early exit when ||r||/||b|| <= tol. Vec
// must provide copy construction, set_zero(), scale(a), add_scaled(v, a) and
// an ADL-findable dot(a, b). Non-finite scalars raise NumericalError.
template <class Vec, class Op>
Vec conjugate_gradient(Op&& apply_a, const Vec& b, int max_iter, double tol,
                       CgInfo* info = nullptr) {
  Vec x = b;
  x.set_zero();
  Vec r = b;
  double rs = dot(r, r);
  if (!std::isfinite(rs)) throw NumericalError("conjugate_gradient: non-finite right-hand side");
  const double bnorm = std::sqrt(rs);
  if (info) *info = CgInfo{0, bnorm == 0.0 ? 0.0 : 1.0};
  if (bnorm == 0.0) return x;

  Vec p = r;
  for (int it = 0; it < max_iter; ++it) {
    Vec ap = apply_a(p);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericalError("conjugate_gradient: non-finite curvature");
    if (pap <= 0.0) break;  // null direction of a semidefinite operator
    const double alpha = rs / pap;
    x.add_scaled(p, alpha);
    r.add_scaled(ap, -alpha);
    const double rs_new = dot(r, r);
    if (!std::isfinite(rs_new)) throw NumericalError("conjugate_gradient: non-finite residual");
    if (info) *info = CgInfo{it + 1, std::sqrt(rs_new) / bnorm};
    if (std::sqrt(rs_new) <= tol * bnorm || rs_new == 0.0) break;
    p.scale(rs_new / rs);
    p.add_scaled(r, 1.0);
    rs = rs_new;
  }
  return x;
}

// Per-sample weighting data at score resolution, derived once from a sample's
// label: stencil = U^T V^2 U folded into a 9-point neighborhood operator,
// label_proj = U^T V^2 y and label_energy = y^T V^2 y. Together they let the
// optimizer evaluate residual norms, gradients and curvature without touching
// label resolution again.
struct SampleWeighting {
  Tensor stencil;     // 9 channels, offset (dy+1)*3 + (dx+1)
  Tensor label_proj;  // 1 channel
  double label_energy = 0.0;
  int factor = 1;
};

SampleWeighting build_sample_weighting(const Tensor& features, const Tensor& label,
                                       const LossTerms& loss);

// Applies the 9-point stencil to a single-channel score map.
Tensor stencil_apply(const Tensor& stencil, const Tensor& t);

// Cache of SampleWeighting (and, for update-time optimization, of the frozen
// first-layer projections) keyed by memory sample id. One workspace per
// target model; entries for evicted samples are pruned on use.
class GnWorkspace {
 public:
  const SampleWeighting& weighting(const MemorySample& sample, const LossTerms& loss);
  const Tensor* projected(std::uint64_t id) const;
  void store_projected(std::uint64_t id, const ConvKernel& w1, Tensor z);
  void note_w1(const ConvKernel& w1);  // drops projections if w1 changed
  void prune(const MemorySnapshot& memory);

 private:
  std::unordered_map<std::uint64_t, SampleWeighting> weightings_;
  std::unordered_map<std::uint64_t, Tensor> projections_;
  std::vector<double> w1_snapshot_;
};

// The Gauss-Newton normal operator dw -> (J^T J + Lambda) dw at a fixed
// linearization point, applied matrix-free through the model Jacobian and the
// per-sample weighting stencils. Also provides the right-hand side -J^T r and
// the loss at the linearization point. Literal mode routes the weighting
// through upsample/adjoint at label resolution instead of the fused stencil;
// the two agree to floating-point accuracy and the tests pin that.
class NormalOperator {
 public:
  enum class Path { Fused, Literal };

  NormalOperator(const TargetModelParams& params, const MemorySnapshot& memory,
                 const LossTerms& loss, LayerMode mode, GnWorkspace* workspace = nullptr,
                 Path path = Path::Fused);

  TargetModelParams apply(const TargetModelParams& dw) const;
  const TargetModelParams& rhs() const { return rhs_; }
  double loss_at_linearization() const { return loss_value_; }

  // Eq.-style quadratic model value at dw (for model-quality tests).
  double quadratic_model(const TargetModelParams& dw) const;

 private:
  TargetModelParams params_;
  const MemorySnapshot& memory_;
  LossTerms loss_;
  LayerMode mode_;
  Path path_;
  std::vector<SampleWeighting> local_weightings_;  // used when no workspace
  std::vector<const SampleWeighting*> weightings_;
  std::vector<Tensor> projected_;  // z_k = w1 * x_k (borrowed or owned)
  std::vector<const Tensor*> projected_ptr_;
  TargetModelParams rhs_;
  double loss_value_ = 0.0;
};

// Loss of the memory objective at the given parameters, evaluated through the
// fused per-sample weightings (equals objective::loss_value up to rounding).
double memory_loss(const TargetModelParams& params, const MemorySnapshot& memory,
                   const LossTerms& loss, GnWorkspace* workspace = nullptr);

struct GnStepRecord {
  int gn_index = 0;
  int cg_iterations = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
};
using GnSink = std::function<void(const GnStepRecord&)>;

struct GnStepResult {
  TargetModelParams params;
  double loss_before = 0.0;
  double loss_after = 0.0;
  int cg_iterations = 0;
};

// One GN step: solve (J^T J + Lambda) dw = -J^T r with CG and take w += dw.
// No step-length control; loss before/after are reported for diagnostics.
GnStepResult gauss_newton_step(const TargetModelParams& params, const MemorySnapshot& memory,
                               const OptimizerConfig& cfg, int cg_iters, LayerMode mode,
                               GnWorkspace* workspace = nullptr);

// First-frame schedule: n_gn steps with CG budgets [n_cgi, n_cg, n_cg, ...],
// warm-starting each step from the previous iterate.
TargetModelParams optimize(TargetModelParams params, const MemorySnapshot& memory,
                           const OptimizerConfig& cfg, LayerMode mode,
                           GnWorkspace* workspace = nullptr, const GnSink& sink = {});

// Update-time schedule: a single GN step with n_cgu CG iterations, first
// layer kept fixed.
TargetModelParams optimize_update(TargetModelParams params, const MemorySnapshot& memory,
                                  const OptimizerConfig& cfg, GnWorkspace* workspace = nullptr,
                                  const GnSink& sink = {});

}  // namespace dvseg
