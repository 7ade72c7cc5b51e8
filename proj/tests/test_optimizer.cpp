#include <cmath>
#include <random>

#include "doctest.h"
#include "dvseg/optimizer.hpp"
#include "dvseg/reference_ops.hpp"
#include "dvseg/tensor_ops.hpp"
#include "support/test_util.hpp"

using namespace dvseg;
using testutil::DenseVec;
using testutil::make_sample;
using testutil::random_binary_mask;
using testutil::random_params;
using testutil::random_tensor;

namespace {

struct DenseOp {
  std::vector<double> a;  // n x n row-major
  int n;
  DenseVec operator()(const DenseVec& x) const {
    DenseVec y;
    y.v.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a[i * n + j] * x.v[j];
      y.v[i] = s;
    }
    return y;
  }
};

MemorySnapshot random_memory(int n_samples, int fc, int h, int w, int factor,
                             std::mt19937_64& rng) {
  MemorySnapshot mem;
  for (int k = 0; k < n_samples; ++k) {
    mem.push_back(make_sample(random_tensor(fc, h, w, rng),
                              random_binary_mask(h * factor, w * factor, 0.3, rng),
                              1.0 / n_samples, k + 1));
  }
  return mem;
}

}  // namespace

TEST_CASE("conjugate_gradient: identity operator converges in one iteration") {
  DenseOp id{{1, 0, 0, 1}, 2};
  DenseVec b{{3.0, -4.0}};
  CgInfo info;
  DenseVec x = conjugate_gradient(id, b, 10, 0.0, &info);
  CHECK(info.iterations == 1);
  CHECK(x.v[0] == doctest::Approx(3.0));
  CHECK(x.v[1] == doctest::Approx(-4.0));
}

TEST_CASE("conjugate_gradient: 2x2 system solves exactly within two iterations") {
  DenseOp a{{4, 1, 1, 3}, 2};
  DenseVec b{{1.0, 2.0}};
  CgInfo info;
  DenseVec x = conjugate_gradient(a, b, 2, 0.0, &info);
  CHECK(std::abs(x.v[0] - 1.0 / 11.0) < 1e-10);
  CHECK(std::abs(x.v[1] - 7.0 / 11.0) < 1e-10);
  CHECK(info.iterations <= 2);
}

TEST_CASE("conjugate_gradient: zero right-hand side returns zero immediately") {
  DenseOp a{{4, 1, 1, 3}, 2};
  DenseVec b{{0.0, 0.0}};
  CgInfo info;
  DenseVec x = conjugate_gradient(a, b, 5, 0.0, &info);
  CHECK(info.iterations == 0);
  CHECK(x.v[0] == 0.0);
  CHECK(x.v[1] == 0.0);
}

TEST_CASE("conjugate_gradient: matches dense Cholesky on seeded SPD systems") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> m(n * n);
    for (double& v : m) v = dist(rng);
    // a = m^T m / n + I keeps the spectrum within a small band, so n CG
    // steps reach well past the required accuracy in double precision
    DenseOp op;
    op.n = n;
    op.a.assign(n * n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = (i == j) ? 1.0 : 0.0;
        for (int k = 0; k < n; ++k) s += m[k * n + i] * m[k * n + j] / n;
        op.a[i * n + j] = s;
      }
    }
    DenseVec b;
    b.v.resize(n);
    for (double& v : b.v) v = dist(rng);

    DenseVec x = conjugate_gradient(op, b, n, 0.0);
    std::vector<double> want = testutil::cholesky_solve(op.a, b.v);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      num += (x.v[i] - want[i]) * (x.v[i] - want[i]);
      den += want[i] * want[i];
    }
    CHECK(std::sqrt(num / den) < 1e-8);
  }
}

TEST_CASE("conjugate_gradient: non-finite input raises NumericalError") {
  DenseOp a{{4, 1, 1, 3}, 2};
  DenseVec b{{std::numeric_limits<double>::quiet_NaN(), 0.0}};
  CHECK_THROWS_AS(conjugate_gradient(a, b, 2, 0.0), NumericalError);
}

TEST_CASE("NormalOperator: symmetry and positive semidefiniteness") {
  std::mt19937_64 rng(500);
  MemorySnapshot mem = random_memory(2, 4, 4, 5, 2, rng);
  TargetModelParams p = random_params(4, 3, rng);
  LossTerms loss;
  for (LayerMode mode : {LayerMode::Both, LayerMode::W2Only}) {
    NormalOperator op(p, mem, loss, mode);
    for (int trial = 0; trial < 100; ++trial) {
      TargetModelParams u = random_params(4, 3, rng);
      TargetModelParams v = random_params(4, 3, rng);
      if (mode == LayerMode::W2Only) {
        u.w1.set_zero();
        v.w1.set_zero();
      }
      const double lhs = dot(op.apply(u), v);
      const double rhs = dot(u, op.apply(v));
      CHECK(testutil::rel_err(lhs, rhs) < 1e-10);
      CHECK(dot(op.apply(u), u) >= 0.0);
    }
  }
}

TEST_CASE("NormalOperator: fused and literal weighting paths agree") {
  std::mt19937_64 rng(501);
  MemorySnapshot mem = random_memory(3, 4, 3, 4, 3, rng);
  TargetModelParams p = random_params(4, 2, rng);
  LossTerms loss;
  for (LayerMode mode : {LayerMode::Both, LayerMode::W2Only}) {
    NormalOperator fused(p, mem, loss, mode, nullptr, NormalOperator::Path::Fused);
    NormalOperator literal(p, mem, loss, mode, nullptr, NormalOperator::Path::Literal);
    CHECK(testutil::rel_err(fused.loss_at_linearization(), literal.loss_at_linearization()) <
          1e-11);
    const double n_rhs = std::sqrt(dot(fused.rhs(), fused.rhs()));
    TargetModelParams diff = fused.rhs();
    diff.add_scaled(literal.rhs(), -1.0);
    CHECK(std::sqrt(dot(diff, diff)) < 1e-11 * std::max(1.0, n_rhs));

    TargetModelParams d = random_params(4, 2, rng);
    TargetModelParams af = fused.apply(d);
    TargetModelParams al = literal.apply(d);
    TargetModelParams adiff = af;
    adiff.add_scaled(al, -1.0);
    CHECK(std::sqrt(dot(adiff, adiff)) < 1e-11 * std::max(1.0, std::sqrt(dot(af, af))));
  }
}

TEST_CASE("memory_loss agrees with the literal objective") {
  std::mt19937_64 rng(502);
  MemorySnapshot mem = random_memory(3, 3, 3, 3, 2, rng);
  TargetModelParams p = random_params(3, 2, rng);
  LossTerms loss;
  const double fused = memory_loss(p, mem, loss);
  const double literal = loss_value(compute_residuals(p, mem, loss));
  CHECK(testutil::rel_err(fused, literal) < 1e-10);
}

TEST_CASE("gauss_newton_step: w2-only with exact CG attains the dense ridge solution") {
  std::mt19937_64 rng(503);
  const int fc = 6, c = 4, h = 5, w = 6, factor = 2;
  MemorySnapshot mem = random_memory(2, fc, h, w, factor, rng);
  TargetModelParams p = random_params(fc, c, rng);
  LossTerms loss;
  loss.lambda2 = 1e-1;

  OptimizerConfig cfg;
  cfg.loss = loss;
  cfg.cg_tolerance = 1e-13;  // exact CG: iterate to convergence
  const int n = static_cast<int>(p.w2.numel());  // 36 unknowns
  GnStepResult step = gauss_newton_step(p, mem, cfg, 20 * n, LayerMode::W2Only);

  // Dense normal equations assembled column by column through the serial
  // reference kernels, solved with Cholesky.
  const int rows_per_sample = (h * factor) * (w * factor);
  const int rows = rows_per_sample * static_cast<int>(mem.size());
  std::vector<double> cols(static_cast<std::size_t>(rows) * n);
  std::vector<double> resid(rows);
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const Tensor& x = *mem[k].features;
    const Tensor& y = *mem[k].label;
    const Tensor z = ref::convolve(x, p.w1);
    const PixelWeightMask vm = compute_pixel_weights(y, loss.kappa_min, loss.rule);
    const double sg = std::sqrt(mem[k].weight);
    const Tensor up = ref::upsample_bilinear(ref::convolve(z, p.w2), factor);
    for (int i = 0; i < rows_per_sample; ++i) {
      resid[k * rows_per_sample + i] = sg * vm.v.data[i] * (y.data[i] - up.data[i]);
    }
    for (int j = 0; j < n; ++j) {
      ConvKernel basis(1, c, 3);
      basis.weights[j] = 1.0;
      const Tensor col = ref::upsample_bilinear(ref::convolve(z, basis), factor);
      for (int i = 0; i < rows_per_sample; ++i) {
        cols[(k * rows_per_sample + i) * static_cast<std::size_t>(n) + j] =
            sg * vm.v.data[i] * col.data[i];
      }
    }
  }
  std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> b(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = (i == j) ? loss.lambda2 : 0.0;
      for (int r = 0; r < rows; ++r)
        s += cols[r * static_cast<std::size_t>(n) + i] * cols[r * static_cast<std::size_t>(n) + j];
      a[i * static_cast<std::size_t>(n) + j] = s;
    }
    double s = -loss.lambda2 * p.w2.weights[i];
    for (int r = 0; r < rows; ++r) s += cols[r * static_cast<std::size_t>(n) + i] * resid[r];
    b[i] = s;
  }
  const std::vector<double> dw = testutil::cholesky_solve(a, b);

  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double got = step.params.w2.weights[i] - p.w2.weights[i];
    num += (got - dw[i]) * (got - dw[i]);
    den += dw[i] * dw[i];
  }
  CHECK(std::sqrt(num / den) < 1e-6);
  CHECK(step.loss_after <= step.loss_before);
}

TEST_CASE("gauss_newton_step: loss never increases in w2-only mode") {
  std::mt19937_64 rng(504);
  for (int trial = 0; trial < 25; ++trial) {
    const int fc = 2 + static_cast<int>(rng() % 4);
    const int c = 1 + static_cast<int>(rng() % 3);
    MemorySnapshot mem = random_memory(1 + static_cast<int>(rng() % 3), fc, 3, 4, 2, rng);
    TargetModelParams p = random_params(fc, c, rng);
    OptimizerConfig cfg;
    for (int step = 0; step < 3; ++step) {
      GnStepResult r = gauss_newton_step(p, mem, cfg, 1 + static_cast<int>(rng() % 8),
                                         LayerMode::W2Only);
      CHECK(r.loss_after <= r.loss_before * (1.0 + 1e-12) + 1e-12);
      p = r.params;
    }
  }
}

TEST_CASE("gauss_newton_step: an exactly stationary point leaves params unchanged") {
  // Zero features make the Jacobian vanish identically, so J^T r = 0 bit for
  // bit; with zero regularization the step must be a no-op.
  std::mt19937_64 rng(505);
  Tensor x(3, 4, 4);
  TargetModelParams p = random_params(3, 2, rng);
  Tensor y = random_binary_mask(8, 8, 0.3, rng);
  MemorySnapshot mem{make_sample(x, y, 1.0, 1)};
  OptimizerConfig cfg;
  cfg.loss.lambda1 = cfg.loss.lambda2 = 0.0;
  GnStepResult r = gauss_newton_step(p, mem, cfg, 10, LayerMode::Both);
  CHECK(r.params.w1.weights == p.w1.weights);
  CHECK(r.params.w2.weights == p.w2.weights);
  CHECK(r.cg_iterations == 0);
}

TEST_CASE("quadratic model error decays with third-order slope at zero residual") {
  std::mt19937_64 rng(506);
  std::uniform_real_distribution<double> pos(0.02, 0.3);
  double worst_slope = 10.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int fc = 3, c = 2, h = 4, w = 4, factor = 2;
    Tensor x = random_tensor(fc, h, w, rng, 0.0, 1.0);
    TargetModelParams p;
    p.w1 = ConvKernel(c, fc, 1);
    p.w2 = ConvKernel(1, c, 3);
    for (double& v : p.w1.weights) v = pos(rng);
    for (double& v : p.w2.weights) v = pos(rng) * 0.15;
    Tensor y = upsample_bilinear(model_forward(p, x), factor);
    for (double& v : y.data) REQUIRE((v >= 0.0 && v <= 1.0));
    MemorySnapshot mem{make_sample(x, y, 1.0, 1)};

    LossTerms loss;
    NormalOperator op(p, mem, loss, LayerMode::Both);
    TargetModelParams d = random_params(fc, c, rng);

    std::vector<double> hs = {1e-1, 1e-2, 1e-3};
    std::vector<double> errs;
    for (double hstep : hs) {
      TargetModelParams q = p;
      q.add_scaled(d, hstep);
      TargetModelParams hd = TargetModelParams::zeros_like(d);
      hd.add_scaled(d, hstep);
      errs.push_back(std::abs(memory_loss(q, mem, loss) - op.quadratic_model(hd)));
    }
    const double slope =
        (std::log(errs.front()) - std::log(errs.back())) / (std::log(hs.front()) - std::log(hs.back()));
    worst_slope = std::min(worst_slope, slope);
  }
  CHECK(worst_slope >= 2.7);
}

TEST_CASE("optimize: schedule runs n_gn steps with the configured CG budgets") {
  std::mt19937_64 rng(507);
  MemorySnapshot mem = random_memory(3, 4, 4, 4, 2, rng);
  TargetModelParams p = random_params(4, 3, rng);
  OptimizerConfig cfg;  // defaults: 5 GN steps, budgets [5,10,10,10,10]
  std::vector<GnStepRecord> records;
  optimize(p, mem, cfg, LayerMode::Both, nullptr,
           [&records](const GnStepRecord& r) { records.push_back(r); });
  REQUIRE(records.size() == 5);
  CHECK(records[0].cg_iterations == 5);
  for (int i = 1; i < 5; ++i) CHECK(records[i].cg_iterations == 10);

  cfg.n_gn = 4;  // fast-mode schedule [5,10,10,10]
  records.clear();
  optimize(p, mem, cfg, LayerMode::Both, nullptr,
           [&records](const GnStepRecord& r) { records.push_back(r); });
  REQUIRE(records.size() == 4);
  CHECK(records[0].cg_iterations == 5);
  for (int i = 1; i < 4; ++i) CHECK(records[i].cg_iterations == 10);
}

TEST_CASE("optimize: separable problem reaches zero data residual in one step") {
  // One-hot feature channels make the w2 subproblem an exactly consistent
  // linear system; with zero regularization a single exact-CG step lands on
  // a zero-residual solution.
  const int hw = 2;
  Tensor x(4, hw, hw);
  for (int i = 0; i < 4; ++i) x.chan(i)[i] = 1.0;
  TargetModelParams p;
  p.w1 = ConvKernel(4, 4, 1);
  for (int i = 0; i < 4; ++i) p.w1.at(i, i, 0, 0) = 1.0;
  p.w2 = ConvKernel(1, 4, 3);

  Tensor y(1, hw, hw);
  y.data = {1.0, 0.0, 0.0, 1.0};
  MemorySnapshot mem{make_sample(x, y, 1.0, 1)};
  OptimizerConfig cfg;
  cfg.loss.lambda1 = cfg.loss.lambda2 = 0.0;
  cfg.n_gn = 1;
  cfg.n_cgi = static_cast<int>(p.w2.numel());
  TargetModelParams sol = optimize(p, mem, cfg, LayerMode::W2Only);
  const double final_loss = memory_loss(sol, mem, cfg.loss);
  CHECK(final_loss < 1e-12);
}

TEST_CASE("optimize: bit-identical trajectories for identical inputs") {
  std::mt19937_64 rng(508);
  MemorySnapshot mem = random_memory(3, 4, 4, 5, 2, rng);
  TargetModelParams p = random_params(4, 3, rng);
  OptimizerConfig cfg;
  cfg.n_gn = 3;
  TargetModelParams a = optimize(p, mem, cfg, LayerMode::Both);
  TargetModelParams b = optimize(p, mem, cfg, LayerMode::Both);
  CHECK(a.w1.weights == b.w1.weights);
  CHECK(a.w2.weights == b.w2.weights);
}

TEST_CASE("optimize_update: single step, w1 untouched, workspace caching consistent") {
  std::mt19937_64 rng(509);
  MemorySnapshot mem = random_memory(4, 4, 4, 5, 2, rng);
  TargetModelParams p = random_params(4, 3, rng);
  OptimizerConfig cfg;
  cfg.n_cgu = 7;

  std::vector<GnStepRecord> records;
  GnWorkspace ws;
  TargetModelParams with_ws = optimize_update(p, mem, cfg, &ws,
                                              [&records](const GnStepRecord& r) { records.push_back(r); });
  REQUIRE(records.size() == 1);
  CHECK(records[0].cg_iterations == 7);
  CHECK(with_ws.w1.weights == p.w1.weights);

  TargetModelParams without_ws = optimize_update(p, mem, cfg);
  CHECK(with_ws.w2.weights == without_ws.w2.weights);

  // second call through the same workspace hits the caches and agrees
  TargetModelParams again = optimize_update(p, mem, cfg, &ws);
  CHECK(again.w2.weights == with_ws.w2.weights);
}
