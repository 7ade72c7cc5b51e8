#include "dvseg/reference_ops.hpp"

#include <cmath>

namespace dvseg::ref {

Tensor convolve(const Tensor& x, const ConvKernel& k) {
  if (x.channels != k.in_channels) throw DimensionError("ref::convolve: channel mismatch");
  const int H = x.height, W = x.width;
  const int pad = (k.ksize - 1) / 2;
  Tensor out(k.out_channels, H, W);
  for (int oc = 0; oc < k.out_channels; ++oc) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        double s = 0.0;
        for (int ci = 0; ci < k.in_channels; ++ci) {
          for (int ky = 0; ky < k.ksize; ++ky) {
            for (int kx = 0; kx < k.ksize; ++kx) {
              const int iy = y + ky - pad;
              const int ix = xx + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              s += k.at(oc, ci, ky, kx) * x.at(ci, iy, ix);
            }
          }
        }
        out.at(oc, y, xx) = s;
      }
    }
  }
  return out;
}

Tensor convolve_adjoint_input(const Tensor& e, const ConvKernel& k) {
  if (e.channels != k.out_channels)
    throw DimensionError("ref::convolve_adjoint_input: channel mismatch");
  const int H = e.height, W = e.width;
  const int pad = (k.ksize - 1) / 2;
  Tensor adj(k.in_channels, H, W);
  // Scatter form: walk the forward reads and transpose each contribution.
  for (int oc = 0; oc < k.out_channels; ++oc) {
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        for (int ci = 0; ci < k.in_channels; ++ci) {
          for (int ky = 0; ky < k.ksize; ++ky) {
            for (int kx = 0; kx < k.ksize; ++kx) {
              const int iy = oy + ky - pad;
              const int ix = ox + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              adj.at(ci, iy, ix) += k.at(oc, ci, ky, kx) * e.at(oc, oy, ox);
            }
          }
        }
      }
    }
  }
  return adj;
}

ConvKernel convolve_weight_gradient(const Tensor& x, const Tensor& e, int ksize) {
  if (x.height != e.height || x.width != e.width)
    throw DimensionError("ref::convolve_weight_gradient: spatial mismatch");
  const int H = x.height, W = x.width;
  const int pad = (ksize - 1) / 2;
  ConvKernel g(e.channels, x.channels, ksize);
  for (int oc = 0; oc < g.out_channels; ++oc) {
    for (int ci = 0; ci < g.in_channels; ++ci) {
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          double s = 0.0;
          for (int oy = 0; oy < H; ++oy) {
            for (int ox = 0; ox < W; ++ox) {
              const int iy = oy + ky - pad;
              const int ix = ox + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              s += x.at(ci, iy, ix) * e.at(oc, oy, ox);
            }
          }
          g.at(oc, ci, ky, kx) = s;
        }
      }
    }
  }
  return g;
}

Tensor upsample_bilinear(const Tensor& s, int factor) {
  if (factor < 1) throw ArgumentError("ref::upsample_bilinear: factor must be >= 1");
  const int H = s.height, W = s.width;
  Tensor out(s.channels, H * factor, W * factor);
  for (int c = 0; c < s.channels; ++c) {
    for (int dy = 0; dy < H * factor; ++dy) {
      for (int dx = 0; dx < W * factor; ++dx) {
        const double sy = (dy + 0.5) / factor - 0.5;
        const double sx = (dx + 0.5) / factor - 0.5;
        int y0, y1, x0, x1;
        double fy, fx;
        if (sy <= 0.0) { y0 = y1 = 0; fy = 0.0; }
        else if (sy >= H - 1) { y0 = y1 = H - 1; fy = 0.0; }
        else { y0 = static_cast<int>(std::floor(sy)); y1 = y0 + 1; fy = sy - y0; }
        if (sx <= 0.0) { x0 = x1 = 0; fx = 0.0; }
        else if (sx >= W - 1) { x0 = x1 = W - 1; fx = 0.0; }
        else { x0 = static_cast<int>(std::floor(sx)); x1 = x0 + 1; fx = sx - x0; }
        out.at(c, dy, dx) =
            (1.0 - fy) * ((1.0 - fx) * s.at(c, y0, x0) + fx * s.at(c, y0, x1)) +
            fy * ((1.0 - fx) * s.at(c, y1, x0) + fx * s.at(c, y1, x1));
      }
    }
  }
  return out;
}

Tensor upsample_adjoint(const Tensor& e, int factor) {
  if (factor < 1) throw ArgumentError("ref::upsample_adjoint: factor must be >= 1");
  if (e.height % factor != 0 || e.width % factor != 0)
    throw DimensionError("ref::upsample_adjoint: size not divisible by factor");
  const int H = e.height / factor, W = e.width / factor;
  Tensor adj(e.channels, H, W);
  for (int c = 0; c < e.channels; ++c) {
    for (int dy = 0; dy < e.height; ++dy) {
      for (int dx = 0; dx < e.width; ++dx) {
        const double sy = (dy + 0.5) / factor - 0.5;
        const double sx = (dx + 0.5) / factor - 0.5;
        int y0, y1, x0, x1;
        double fy, fx;
        if (sy <= 0.0) { y0 = y1 = 0; fy = 0.0; }
        else if (sy >= H - 1) { y0 = y1 = H - 1; fy = 0.0; }
        else { y0 = static_cast<int>(std::floor(sy)); y1 = y0 + 1; fy = sy - y0; }
        if (sx <= 0.0) { x0 = x1 = 0; fx = 0.0; }
        else if (sx >= W - 1) { x0 = x1 = W - 1; fx = 0.0; }
        else { x0 = static_cast<int>(std::floor(sx)); x1 = x0 + 1; fx = sx - x0; }
        const double v = e.at(c, dy, dx);
        adj.at(c, y0, x0) += (1.0 - fy) * (1.0 - fx) * v;
        adj.at(c, y0, x1) += (1.0 - fy) * fx * v;
        adj.at(c, y1, x0) += fy * (1.0 - fx) * v;
        adj.at(c, y1, x1) += fy * fx * v;
      }
    }
  }
  return adj;
}

}  // namespace dvseg::ref
