// Kernel benchmark: serial reference implementations vs the OpenMP kernels,
// plus the fused weighting stencil vs the literal upsample/weight/adjoint
// path. Sizes mirror the engine's toy configuration (64-channel features on a
// 40x24 stride-16 grid). `--quick` shrinks everything for a smoke run.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>

#include <omp.h>

#include "dvseg/objective.hpp"
#include "dvseg/optimizer.hpp"
#include "dvseg/reference_ops.hpp"
#include "dvseg/tensor_ops.hpp"

using namespace dvseg;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

ConvKernel random_kernel(int oc, int ic, int k, std::mt19937_64& rng) {
  ConvKernel kk(oc, ic, k);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : kk.weights) v = dist(rng);
  return kk;
}

double checksum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return s;
}

struct Timing {
  double micros = 0.0;
  double check = 0.0;
};

template <class F>
Timing time_op(int repeats, F&& fn) {
  fn();  // warm up and materialize the result once
  const auto t0 = std::chrono::steady_clock::now();
  double check = 0.0;
  for (int i = 0; i < repeats; ++i) check = fn();
  const double us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  return {us / repeats, check};
}

void report(const char* name, const Timing& serial, const Timing& parallel, bool bitwise) {
  std::printf("%-34s serial %9.1f us   omp %9.1f us   speedup %5.2fx   %s\n", name,
              serial.micros, parallel.micros, serial.micros / parallel.micros,
              bitwise ? "results identical" : "results match (fp tolerance)");
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int repeats = quick ? 3 : 50;
  const int fc = 64, c = 16;
  const int gh = quick ? 6 : 24, gw = quick ? 10 : 40;
  const int factor = quick ? 4 : 16;

  std::printf("threads: %d, grid %dx%d, %d feature channels, repeats %d\n",
              omp_get_max_threads(), gh, gw, fc, repeats);

  std::mt19937_64 rng(42);
  const Tensor x = random_tensor(fc, gh, gw, rng);
  const ConvKernel w1 = random_kernel(c, fc, 1, rng);
  const ConvKernel w2 = random_kernel(1, c, 3, rng);
  const Tensor z = convolve(x, w1);
  const Tensor e1 = random_tensor(1, gh, gw, rng);
  const Tensor big = random_tensor(1, gh * factor, gw * factor, rng);

  {
    const Timing s = time_op(repeats, [&] { return checksum(ref::convolve(x, w1)); });
    const Timing p = time_op(repeats, [&] { return checksum(convolve(x, w1)); });
    report("convolve 1x1 (64->16)", s, p, s.check == p.check);
  }
  {
    const Timing s = time_op(repeats, [&] { return checksum(ref::convolve(z, w2)); });
    const Timing p = time_op(repeats, [&] { return checksum(convolve(z, w2)); });
    report("convolve 3x3 (16->1)", s, p, s.check == p.check);
  }
  {
    const Timing s = time_op(repeats, [&] { return checksum(ref::convolve_adjoint_input(e1, w2)); });
    const Timing p = time_op(repeats, [&] { return checksum(convolve_adjoint_input(e1, w2)); });
    report("conv adjoint (1->16)", s, p, std::abs(s.check - p.check) < 1e-9);
  }
  {
    const Timing s = time_op(repeats, [&] {
      ConvKernel g = ref::convolve_weight_gradient(z, e1, 3);
      double sum = 0.0;
      for (double v : g.weights) sum += v;
      return sum;
    });
    const Timing p = time_op(repeats, [&] {
      ConvKernel g = convolve_weight_gradient(z, e1, 3);
      double sum = 0.0;
      for (double v : g.weights) sum += v;
      return sum;
    });
    report("weight gradient 3x3", s, p, std::abs(s.check - p.check) < 1e-9);
  }
  {
    const Timing s = time_op(repeats, [&] { return checksum(ref::upsample_bilinear(e1, factor)); });
    const Timing p = time_op(repeats, [&] { return checksum(upsample_bilinear(e1, factor)); });
    report("bilinear upsample x16", s, p, s.check == p.check);
  }
  {
    const Timing s = time_op(repeats, [&] { return checksum(ref::upsample_adjoint(big, factor)); });
    const Timing p = time_op(repeats, [&] { return checksum(upsample_adjoint(big, factor)); });
    report("upsample adjoint x16", s, p, std::abs(s.check - p.check) < 1e-9);
  }

  // fused weighting stencil vs the literal label-resolution path
  {
    Tensor label(1, gh * factor, gw * factor);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : label.data) v = unit(rng) < 0.15 ? 1.0 : 0.0;
    label.data[0] = 1.0;
    label.data[label.data.size() - 1] = 0.0;
    LossTerms loss;
    const SampleWeighting sw = build_sample_weighting(e1, label, loss);
    const PixelWeightMask vm = compute_pixel_weights(label, loss.kappa_min, loss.rule);

    const Timing lit = time_op(repeats, [&] {
      Tensor up = upsample_bilinear(e1, factor);
      for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] *= vm.v.data[i] * vm.v.data[i];
      return checksum(upsample_adjoint(up, factor));
    });
    const Timing fused = time_op(repeats, [&] { return checksum(stencil_apply(sw.stencil, e1)); });
    std::printf("%-34s literal %8.1f us   fused %7.1f us   speedup %5.1fx   agree %s\n",
                "weighting operator UtV2U", lit.micros, fused.micros, lit.micros / fused.micros,
                std::abs(lit.check - fused.check) < 1e-8 * std::abs(lit.check) ? "yes" : "NO");
  }

  return 0;
}
