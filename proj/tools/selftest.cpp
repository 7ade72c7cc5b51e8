#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dvseg/feature_provider.hpp"
#include "dvseg/objective.hpp"
#include "dvseg/optimizer.hpp"
#include "dvseg/pipeline.hpp"
#include "dvseg/reference_ops.hpp"
#include "dvseg/sample_memory.hpp"
#include "dvseg/tensor_ops.hpp"

namespace {

using namespace dvseg;

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

ConvKernel random_kernel(int oc, int ic, int k, std::mt19937_64& rng) {
  ConvKernel kk(oc, ic, k);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : kk.weights) v = dist(rng);
  return kk;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

struct Vec2 {
  double x = 0, y = 0;
  void set_zero() { x = y = 0; }
  void scale(double s) { x *= s; y *= s; }
  void add_scaled(const Vec2& o, double s) { x += s * o.x; y += s * o.y; }
};
double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

bool check_conv_adjoints() {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int ic = 1 + static_cast<int>(rng() % 5);
    const int oc = 1 + static_cast<int>(rng() % 3);
    const int h = 2 + static_cast<int>(rng() % 8);
    const int w = 2 + static_cast<int>(rng() % 8);
    const int ks = (rng() % 2 == 0) ? 1 : 3;
    ConvKernel k = random_kernel(oc, ic, ks, rng);
    Tensor u = random_tensor(ic, h, w, rng);
    Tensor e = random_tensor(oc, h, w, rng);
    if (rel_err(tensor_dot(convolve(u, k), e), tensor_dot(u, convolve_adjoint_input(e, k))) >=
        1e-10)
      return false;
    ConvKernel dk = random_kernel(oc, ic, ks, rng);
    if (rel_err(tensor_dot(convolve(u, dk), e),
                kernel_dot(dk, convolve_weight_gradient(u, e, ks))) >= 1e-10)
      return false;
  }
  return true;
}

bool check_upsample_adjoint() {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 6);
    const int w = 1 + static_cast<int>(rng() % 6);
    const int f = 1 + static_cast<int>(rng() % 6);
    Tensor u = random_tensor(1, h, w, rng);
    Tensor e = random_tensor(1, h * f, w * f, rng);
    if (rel_err(tensor_dot(upsample_bilinear(u, f), e), tensor_dot(u, upsample_adjoint(e, f))) >=
        1e-10)
      return false;
  }
  return true;
}

bool check_conv_reference() {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    const int ic = 1 + static_cast<int>(rng() % 8);
    const int h = 3 + static_cast<int>(rng() % 12);
    const int w = 3 + static_cast<int>(rng() % 12);
    Tensor x = random_tensor(ic, h, w, rng);
    ConvKernel k = random_kernel(1 + static_cast<int>(rng() % 3), ic, 3, rng);
    const Tensor a = convolve(x, k);
    const Tensor b = ref::convolve(x, k);
    for (std::size_t i = 0; i < a.data.size(); ++i)
      if (a.data[i] != b.data[i]) return false;
  }
  return true;
}

bool check_cg() {
  const Vec2 sol = conjugate_gradient(
      [](const Vec2& p) { return Vec2{4 * p.x + p.y, p.x + 3 * p.y}; }, Vec2{1.0, 2.0}, 2, 0.0);
  return std::abs(sol.x - 1.0 / 11.0) < 1e-10 && std::abs(sol.y - 7.0 / 11.0) < 1e-10;
}

bool check_pixel_weights() {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 4 + static_cast<int>(rng() % 10);
    const int w = 4 + static_cast<int>(rng() % 10);
    Tensor y(1, h, w);
    std::uniform_real_distribution<double> frac(0.01, 0.9);
    const double f = frac(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : y.data) v = unit(rng) < f ? 1.0 : 0.0;
    y.data[0] = 1.0;
    y.data[y.data.size() - 1] = 0.0;
    for (PixelWeightRule rule : {PixelWeightRule::BalancedMax, PixelWeightRule::LiteralMin}) {
      const PixelWeightMask m = compute_pixel_weights(y, 0.1, rule);
      const double total =
          m.target_value * m.target_influence + m.background_value * (1.0 - m.target_influence);
      if (std::abs(total - 1.0) > 1e-12) return false;
      if (rule == PixelWeightRule::BalancedMax && m.target_influence < 0.1 &&
          std::abs(m.target_value * m.target_influence - 0.1) > 1e-14)
        return false;
    }
  }
  return true;
}

bool check_memory() {
  std::mt19937_64 rng(105);
  auto feat = [&rng]() {
    auto t = std::make_shared<Tensor>(1, 2, 2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : t->data) v = d(rng);
    return t;
  };
  auto label = [&rng]() {
    auto t = std::make_shared<Tensor>(1, 2, 2);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (double& v : t->data) v = d(rng);
    return t;
  };
  std::vector<std::pair<std::shared_ptr<const Tensor>, std::shared_ptr<const Tensor>>> init;
  for (int i = 0; i < 20; ++i) init.emplace_back(feat(), label());
  SampleMemory mem = SampleMemory::from_initial_set(init, 0, 80, 0.1);
  if (std::abs(mem.sample(0).weight - 2.0 / 21.0) > 1e-14) return false;
  for (int op = 0; op < 500; ++op) {
    mem.append(feat(), label());
    if (mem.size() > 80) return false;
    double s = 0.0;
    for (int i = 0; i < mem.size(); ++i) s += mem.sample(i).weight;
    if (std::abs(s - 1.0) > 1e-12) return false;
  }
  return true;
}

bool check_upsample_range() {
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x =
        random_tensor(1, 2 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 5), rng);
    double mn = 1e300, mx = -1e300;
    for (double v : x.data) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    Tensor up = upsample_bilinear(x, 1 + static_cast<int>(rng() % 5));
    for (double v : up.data) {
      if (v < mn - 1e-12 || v > mx + 1e-12) return false;
    }
  }
  return true;
}

bool check_toy_features() {
  std::mt19937_64 rng(107);
  Tensor img = random_tensor(3, 48, 64, rng);
  for (double& v : img.data) v = 0.5 + 0.4 * v;
  FeatureSpec spec;
  spec.channels = 32;
  spec.toy_seed = 5;
  const Tensor a = extract_toy_features(img, spec);
  const Tensor b = extract_toy_features(img, spec);
  if (a.data != b.data) return false;
  for (int c = 0; c < a.channels; ++c) {
    double m = 0.0;
    for (int i = 0; i < a.plane(); ++i) m += a.chan(c)[i];
    m /= a.plane();
    bool constant = true;
    for (int i = 0; i < a.plane(); ++i) constant = constant && a.chan(c)[i] == 0.0;
    if (!constant && std::abs(m) > 1e-6) return false;
  }
  return true;
}

bool check_aggregation() {
  Tensor p(1, 1, 1);
  p.data[0] = 0.8;
  const OutputMask out = aggregate_multi_object({p}, {1});
  if (std::abs(out.probabilities[0].data[0] - 4.0 / 4.25) > 1e-9) return false;
  return out.labels.at(0, 0) == 1;
}

bool check_gn_monotone() {
  std::mt19937_64 rng(108);
  for (int trial = 0; trial < 10; ++trial) {
    MemorySnapshot mem;
    for (int k = 0; k < 2; ++k) {
      MemorySample s;
      s.features = std::make_shared<Tensor>(random_tensor(3, 3, 4, rng));
      Tensor y(1, 6, 8);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (double& v : y.data) v = unit(rng) < 0.3 ? 1.0 : 0.0;
      y.data[0] = 1.0;
      y.data[y.data.size() - 1] = 0.0;
      s.label = std::make_shared<Tensor>(std::move(y));
      s.weight = 0.5;
      s.id = k + 1;
      mem.push_back(std::move(s));
    }
    ModelConfig mc;
    mc.feature_channels = 3;
    mc.c = 2;
    mc.init_seed = rng();
    TargetModelParams p = init_params(mc);
    OptimizerConfig cfg;
    for (int step = 0; step < 3; ++step) {
      const GnStepResult r = gauss_newton_step(p, mem, cfg, 5, LayerMode::W2Only);
      if (r.loss_after > r.loss_before * (1.0 + 1e-12) + 1e-12) return false;
      p = r.params;
    }
  }
  return true;
}

}  // namespace

int run_selftest() {
  struct Check {
    const char* name;
    std::function<bool()> fn;
  };
  const std::vector<Check> checks = {
      {"conv adjoint dot products (100 seeds)", check_conv_adjoints},
      {"upsample adjoint dot products (100 seeds)", check_upsample_adjoint},
      {"convolve matches naive reference bit for bit", check_conv_reference},
      {"conjugate gradient 2x2 exact solve", check_cg},
      {"pixel weight algebra", check_pixel_weights},
      {"sample memory normalization/capacity", check_memory},
      {"bilinear upsample range bound", check_upsample_range},
      {"toy feature determinism/standardization", check_toy_features},
      {"softmax aggregation formula", check_aggregation},
      {"gauss-newton monotone on linear subproblem", check_gn_monotone},
  };
  int failures = 0;
  for (const Check& c : checks) {
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "selftest '%s' raised: %s\n", c.name, e.what());
      ok = false;
    }
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", c.name);
    if (!ok) ++failures;
  }
  return failures;
}
