#include "dvseg/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

namespace dvseg {

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value");
  }
}

Tensor convolve(const Tensor& x, const ConvKernel& k) {
  if (x.channels != k.in_channels)
    throw DimensionError("convolve: input has " + std::to_string(x.channels) +
                         " channels, kernel expects " + std::to_string(k.in_channels));
  const int H = x.height, W = x.width;
  const int pad = (k.ksize - 1) / 2;
  Tensor out(k.out_channels, H, W);

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < k.out_channels; ++oc) {
    for (int y = 0; y < H; ++y) {
      double* orow = out.row(oc, y);
      for (int ci = 0; ci < k.in_channels; ++ci) {
        for (int ky = 0; ky < k.ksize; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const double* irow = x.row(ci, iy);
          for (int kx = 0; kx < k.ksize; ++kx) {
            const double kw = k.at(oc, ci, ky, kx);
            const int off = kx - pad;
            const int x0 = std::max(0, -off);
            const int x1 = std::min(W, W - off);
            for (int xx = x0; xx < x1; ++xx) orow[xx] += kw * irow[xx + off];
          }
        }
      }
    }
  }
  return out;
}

Tensor convolve_adjoint_input(const Tensor& e, const ConvKernel& k) {
  if (e.channels != k.out_channels)
    throw DimensionError("convolve_adjoint_input: residual has " + std::to_string(e.channels) +
                         " channels, kernel produces " + std::to_string(k.out_channels));
  const int H = e.height, W = e.width;
  const int pad = (k.ksize - 1) / 2;
  Tensor adj(k.in_channels, H, W);

#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < k.in_channels; ++ci) {
    for (int iy = 0; iy < H; ++iy) {
      double* arow = adj.row(ci, iy);
      for (int oc = 0; oc < k.out_channels; ++oc) {
        for (int ky = 0; ky < k.ksize; ++ky) {
          const int oy = iy - ky + pad;
          if (oy < 0 || oy >= H) continue;
          const double* erow = e.row(oc, oy);
          for (int kx = 0; kx < k.ksize; ++kx) {
            const double kw = k.at(oc, ci, ky, kx);
            const int off = kx - pad;
            // ox = ix - off must lie in [0, W)
            const int x0 = std::max(0, off);
            const int x1 = std::min(W, W + off);
            for (int ix = x0; ix < x1; ++ix) arow[ix] += kw * erow[ix - off];
          }
        }
      }
    }
  }
  return adj;
}

ConvKernel convolve_weight_gradient(const Tensor& x, const Tensor& e, int ksize) {
  if (x.height != e.height || x.width != e.width)
    throw DimensionError("convolve_weight_gradient: spatial mismatch");
  const int H = x.height, W = x.width;
  const int pad = (ksize - 1) / 2;
  ConvKernel g(e.channels, x.channels, ksize);

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < g.out_channels; ++oc) {
    for (int ci = 0; ci < g.in_channels; ++ci) {
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          const int off = kx - pad;
          const int x0 = std::max(0, -off);
          const int x1 = std::min(W, W - off);
          double s = 0.0;
          for (int oy = 0; oy < H; ++oy) {
            const int iy = oy + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const double* xr = x.row(ci, iy);
            const double* er = e.row(oc, oy);
            for (int ox = x0; ox < x1; ++ox) s += xr[ox + off] * er[ox];
          }
          g.at(oc, ci, ky, kx) = s;
        }
      }
    }
  }
  return g;
}

BilinearTaps bilinear_taps(int src_len, int factor) {
  const int dst_len = src_len * factor;
  BilinearTaps taps;
  taps.i0.resize(dst_len);
  taps.i1.resize(dst_len);
  taps.t.resize(dst_len);
  for (int j = 0; j < dst_len; ++j) {
    const double src = (j + 0.5) / factor - 0.5;
    if (src <= 0.0) {
      taps.i0[j] = taps.i1[j] = 0;
      taps.t[j] = 0.0;
    } else if (src >= src_len - 1) {
      taps.i0[j] = taps.i1[j] = src_len - 1;
      taps.t[j] = 0.0;
    } else {
      const int i0 = static_cast<int>(std::floor(src));
      taps.i0[j] = i0;
      taps.i1[j] = i0 + 1;
      taps.t[j] = src - i0;
    }
  }
  return taps;
}

Tensor upsample_bilinear(const Tensor& s, int factor) {
  if (factor < 1) throw ArgumentError("upsample_bilinear: factor must be >= 1");
  const int H = s.height, W = s.width;
  const BilinearTaps ty = bilinear_taps(H, factor);
  const BilinearTaps tx = bilinear_taps(W, factor);
  Tensor out(s.channels, H * factor, W * factor);

#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < s.channels; ++c) {
    for (int dy = 0; dy < H * factor; ++dy) {
      const double* r0 = s.row(c, ty.i0[dy]);
      const double* r1 = s.row(c, ty.i1[dy]);
      const double fy = ty.t[dy];
      double* orow = out.row(c, dy);
      for (int dx = 0; dx < W * factor; ++dx) {
        const int x0 = tx.i0[dx], x1 = tx.i1[dx];
        const double fx = tx.t[dx];
        orow[dx] = (1.0 - fy) * ((1.0 - fx) * r0[x0] + fx * r0[x1]) +
                   fy * ((1.0 - fx) * r1[x0] + fx * r1[x1]);
      }
    }
  }
  return out;
}

namespace {

// Transposed tap lists: for each source index, the (dest, weight) pairs that
// read it, in ascending dest order.
std::vector<std::vector<std::pair<int, double>>> transpose_taps(const BilinearTaps& taps,
                                                                int src_len) {
  std::vector<std::vector<std::pair<int, double>>> rev(src_len);
  for (int j = 0; j < static_cast<int>(taps.t.size()); ++j) {
    if (taps.i0[j] == taps.i1[j]) {
      rev[taps.i0[j]].emplace_back(j, 1.0);
    } else {
      rev[taps.i0[j]].emplace_back(j, 1.0 - taps.t[j]);
      rev[taps.i1[j]].emplace_back(j, taps.t[j]);
    }
  }
  return rev;
}

}  // namespace

Tensor upsample_adjoint(const Tensor& e, int factor) {
  if (factor < 1) throw ArgumentError("upsample_adjoint: factor must be >= 1");
  if (e.height % factor != 0 || e.width % factor != 0)
    throw DimensionError("upsample_adjoint: size " + std::to_string(e.height) + "x" +
                         std::to_string(e.width) + " not divisible by factor " +
                         std::to_string(factor));
  const int H = e.height / factor, W = e.width / factor;
  const auto ry = transpose_taps(bilinear_taps(H, factor), H);
  const auto rx = transpose_taps(bilinear_taps(W, factor), W);
  Tensor adj(e.channels, H, W);

#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < e.channels; ++c) {
    for (int iy = 0; iy < H; ++iy) {
      double* arow = adj.row(c, iy);
      for (const auto& [jy, wy] : ry[iy]) {
        const double* erow = e.row(c, jy);
        for (int ix = 0; ix < W; ++ix) {
          double s = 0.0;
          for (const auto& [jx, wx] : rx[ix]) s += wx * erow[jx];
          arow[ix] += wy * s;
        }
      }
    }
  }
  return adj;
}

}  // namespace dvseg
