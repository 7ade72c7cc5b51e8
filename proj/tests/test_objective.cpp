#include <cmath>
#include <random>

#include "doctest.h"
#include "dvseg/objective.hpp"
#include "dvseg/reference_ops.hpp"
#include "dvseg/tensor_ops.hpp"
#include "support/test_util.hpp"

using namespace dvseg;
using testutil::make_sample;
using testutil::random_binary_mask;
using testutil::random_params;
using testutil::random_tensor;

TEST_CASE("compute_pixel_weights: kappa_hat == kappa_min gives unit weights") {
  Tensor y(1, 1, 10);
  y.data[0] = 1.0;  // kappa_hat = 0.1
  for (PixelWeightRule rule : {PixelWeightRule::BalancedMax, PixelWeightRule::LiteralMin}) {
    PixelWeightMask m = compute_pixel_weights(y, 0.1, rule);
    CHECK(m.target_value == doctest::Approx(1.0));
    CHECK(m.background_value == doctest::Approx(1.0));
  }
}

TEST_CASE("compute_pixel_weights: balanced_max boosts a tiny target") {
  Tensor y(1, 10, 10);
  y.data[3] = 1.0;  // kappa_hat = 0.01
  PixelWeightMask m = compute_pixel_weights(y, 0.1, PixelWeightRule::BalancedMax);
  CHECK(m.target_value == doctest::Approx(10.0));
  CHECK(m.background_value == doctest::Approx(0.9 / 0.99));
  CHECK(m.v.data[3] == doctest::Approx(10.0));
  CHECK(m.v.data[0] == doctest::Approx(0.9 / 0.99));
}

TEST_CASE("compute_pixel_weights: literal min applies the printed formula") {
  Tensor y(1, 1, 10);
  for (int i = 0; i < 3; ++i) y.data[i] = 1.0;  // kappa_hat = 0.3
  PixelWeightMask m = compute_pixel_weights(y, 0.1, PixelWeightRule::LiteralMin);
  CHECK(m.applied_influence == doctest::Approx(0.1));
  CHECK(m.target_value == doctest::Approx(1.0 / 3.0));
  CHECK(m.background_value == doctest::Approx(0.9 / 0.7));
}

TEST_CASE("compute_pixel_weights: degenerate masks raise") {
  Tensor all0(1, 4, 4);
  Tensor all1(1, 4, 4);
  all1.fill(1.0);
  CHECK_THROWS_AS(compute_pixel_weights(all0, 0.1, PixelWeightRule::BalancedMax),
                  DegenerateMaskError);
  CHECK_THROWS_AS(compute_pixel_weights(all1, 0.1, PixelWeightRule::BalancedMax),
                  DegenerateMaskError);
}

TEST_CASE("pixel weights: total influence is normalized and small targets hit the floor") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 4 + static_cast<int>(rng() % 12);
    const int w = 4 + static_cast<int>(rng() % 12);
    std::uniform_real_distribution<double> fr(0.005, 0.95);
    Tensor y = random_binary_mask(h, w, fr(rng), rng);
    for (PixelWeightRule rule : {PixelWeightRule::BalancedMax, PixelWeightRule::LiteralMin}) {
      PixelWeightMask m = compute_pixel_weights(y, 0.1, rule);
      const double total = m.target_value * m.target_influence +
                           m.background_value * (1.0 - m.target_influence);
      CHECK(std::abs(total - 1.0) <= 1e-12);
      for (double v : m.v.data) CHECK(v > 0.0);
      if (rule == PixelWeightRule::BalancedMax && m.target_influence < 0.1) {
        CHECK(std::abs(m.target_value * m.target_influence - 0.1) <= 1e-14);
      }
    }
  }
}

TEST_CASE("compute_residuals: perfect model with zero lambda gives zero residuals") {
  std::mt19937_64 rng(55);
  // positive kernels and features keep the model output inside (0, 1)
  Tensor x = random_tensor(3, 4, 5, rng, 0.0, 1.0);
  TargetModelParams p;
  p.w1 = ConvKernel(2, 3, 1);
  p.w2 = ConvKernel(1, 2, 3);
  std::uniform_real_distribution<double> pos(0.01, 0.2);
  for (double& v : p.w1.weights) v = pos(rng);
  for (double& v : p.w2.weights) v = pos(rng) * 0.1;

  const int factor = 2;
  Tensor y = upsample_bilinear(model_forward(p, x), factor);
  for (double v : y.data) REQUIRE((v >= 0.0 && v <= 1.0));

  MemorySnapshot mem{make_sample(x, y, 1.0, 1)};
  LossTerms loss;
  loss.lambda1 = loss.lambda2 = 0.0;
  ResidualSet r = compute_residuals(p, mem, loss);
  CHECK(loss_value(r) == doctest::Approx(0.0).epsilon(1e-20));
  for (double v : r.data_residuals[0].data) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("compute_residuals: regularization blocks are sqrt(lambda) * w") {
  std::mt19937_64 rng(56);
  Tensor x = random_tensor(3, 4, 4, rng);
  Tensor y = random_binary_mask(8, 8, 0.3, rng);
  TargetModelParams p = random_params(3, 2, rng);
  MemorySnapshot mem{make_sample(x, y, 1.0, 1)};
  LossTerms loss;
  loss.lambda1 = 0.04;
  loss.lambda2 = 0.25;
  ResidualSet r = compute_residuals(p, mem, loss);
  REQUIRE(r.reg_residuals.size() == 2);
  REQUIRE(r.reg_residuals[0].size() == p.w1.numel());
  for (std::size_t i = 0; i < p.w1.numel(); ++i)
    CHECK(r.reg_residuals[0][i] == doctest::Approx(0.2 * p.w1.weights[i]));
  for (std::size_t i = 0; i < p.w2.numel(); ++i)
    CHECK(r.reg_residuals[1][i] == doctest::Approx(0.5 * p.w2.weights[i]));
}

TEST_CASE("loss_value: zero set, [3,4] arithmetic, independent formula check") {
  ResidualSet empty;
  CHECK(loss_value(empty) == 0.0);

  ResidualSet small;
  Tensor t(1, 1, 2);
  t.data = {3.0, 4.0};
  small.data_residuals.push_back(t);
  CHECK(loss_value(small) == doctest::Approx(25.0));

  // Independent evaluation of the weighted objective on a seeded instance.
  std::mt19937_64 rng(57);
  Tensor x = random_tensor(2, 3, 4, rng);
  Tensor y = random_binary_mask(6, 8, 0.25, rng);
  TargetModelParams p = random_params(2, 2, rng);
  LossTerms loss;
  loss.lambda1 = 1e-2;
  loss.lambda2 = 3e-2;
  const double gamma = 0.7;
  MemorySnapshot mem{make_sample(x, y, gamma, 1)};
  const double got = loss_value(compute_residuals(p, mem, loss));

  const Tensor up = ref::upsample_bilinear(ref::convolve(ref::convolve(x, p.w1), p.w2), 2);
  const PixelWeightMask vm = compute_pixel_weights(y, loss.kappa_min, loss.rule);
  double want = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double d = vm.v.data[i] * (y.data[i] - up.data[i]);
    want += gamma * d * d;
  }
  for (double w : p.w1.weights) want += loss.lambda1 * w * w;
  for (double w : p.w2.weights) want += loss.lambda2 * w * w;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("objective_gradient matches central finite differences in both modes") {
  std::mt19937_64 rng(58);
  for (int trial = 0; trial < 6; ++trial) {
    const int fc = 2 + static_cast<int>(rng() % 3);
    const int c = 1 + static_cast<int>(rng() % 3);
    const int h = 3 + static_cast<int>(rng() % 4);
    const int w = 3 + static_cast<int>(rng() % 4);
    const int factor = 1 + static_cast<int>(rng() % 2);
    LossTerms loss;

    MemorySnapshot mem;
    const int n_samples = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < n_samples; ++k) {
      mem.push_back(make_sample(random_tensor(fc, h, w, rng),
                                random_binary_mask(h * factor, w * factor, 0.3, rng),
                                1.0 / n_samples, k + 1));
    }
    TargetModelParams p = random_params(fc, c, rng);

    for (LayerMode mode : {LayerMode::Both, LayerMode::W2Only}) {
      const TargetModelParams g = objective_gradient(p, mem, loss, mode);
      auto loss_at = [&](const TargetModelParams& q) {
        return loss_value(compute_residuals(q, mem, loss));
      };
      double num = 0.0, den = 0.0;
      auto check_group = [&](const ConvKernel& gk, bool is_w1) {
        for (std::size_t i = 0; i < gk.weights.size(); ++i) {
          TargetModelParams plus = p, minus = p;
          auto& wp = is_w1 ? plus.w1.weights[i] : plus.w2.weights[i];
          auto& wm = is_w1 ? minus.w1.weights[i] : minus.w2.weights[i];
          const double h0 = 1e-5 * std::max(1.0, std::abs(wp));
          wp += h0;
          wm -= h0;
          const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h0);
          num += (fd - gk.weights[i]) * (fd - gk.weights[i]);
          den += gk.weights[i] * gk.weights[i];
        }
      };
      if (mode == LayerMode::Both) check_group(g.w1, true);
      check_group(g.w2, false);
      CHECK(std::sqrt(num / den) < 1e-4);
      if (mode == LayerMode::W2Only) {
        for (double v : g.w1.weights) CHECK(v == 0.0);
      }
    }
  }
}
