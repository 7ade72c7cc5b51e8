#include "dvseg/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>

namespace dvseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class PixelState : std::uint8_t { Known, Band, Inside };

// First-order Eikonal update from the known axis neighbors.
double eikonal_update(const std::vector<double>& t, const std::vector<PixelState>& state, int h,
                      int w, int y, int x) {
  auto axis_min = [&](int y0, int x0, int y1, int x1) {
    double m = kInf;
    if (y0 >= 0 && y0 < h && x0 >= 0 && x0 < w && state[y0 * w + x0] == PixelState::Known)
      m = t[y0 * w + x0];
    if (y1 >= 0 && y1 < h && x1 >= 0 && x1 < w && state[y1 * w + x1] == PixelState::Known)
      m = std::min(m, t[y1 * w + x1]);
    return m;
  };
  const double tx = axis_min(y, x - 1, y, x + 1);
  const double ty = axis_min(y - 1, x, y + 1, x);
  if (tx == kInf && ty == kInf) return kInf;
  if (tx == kInf) return ty + 1.0;
  if (ty == kInf) return tx + 1.0;
  if (std::abs(tx - ty) >= 1.0) return std::min(tx, ty) + 1.0;
  return 0.5 * (tx + ty + std::sqrt(2.0 - (tx - ty) * (tx - ty)));
}

}  // namespace

Tensor inpaint_background(const Tensor& image, const Tensor& mask, int radius) {
  if (mask.channels != 1 || mask.height != image.height || mask.width != image.width)
    throw DimensionError("inpaint_background: mask must be single-channel, image-sized");
  if (radius < 1) throw ArgumentError("inpaint_background: radius must be >= 1");
  const int h = image.height, w = image.width;

  Tensor out = image;
  std::vector<PixelState> state(static_cast<std::size_t>(h) * w, PixelState::Known);
  std::vector<double> t(static_cast<std::size_t>(h) * w, 0.0);
  int inside = 0;
  for (int i = 0; i < h * w; ++i) {
    if (mask.data[i] >= 0.5) {
      state[i] = PixelState::Inside;
      t[i] = kInf;
      ++inside;
    }
  }
  if (inside == 0) return out;
  if (inside == h * w)
    throw DegenerateMaskError("inpaint_background: mask covers the entire image");

  // Min-heap on (distance, index); the index breaks ties deterministically.
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> band;
  const int dy4[4] = {-1, 1, 0, 0};
  const int dx4[4] = {0, 0, -1, 1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (state[y * w + x] != PixelState::Inside) continue;
      bool frontier = false;
      for (int n = 0; n < 4 && !frontier; ++n) {
        const int yy = y + dy4[n], xx = x + dx4[n];
        frontier =
            (yy >= 0 && yy < h && xx >= 0 && xx < w && state[yy * w + xx] == PixelState::Known);
      }
      if (frontier) {
        t[y * w + x] = eikonal_update(t, state, h, w, y, x);
        state[y * w + x] = PixelState::Band;
        band.emplace(t[y * w + x], y * w + x);
      }
    }
  }

  auto grad_t = [&](int y, int x, double& gy, double& gx) {
    auto sample = [&](int yy, int xx, double fallback) {
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) return fallback;
      const double v = t[yy * w + xx];
      return std::isfinite(v) ? v : fallback;
    };
    const double c = t[y * w + x];
    gy = 0.5 * (sample(y + 1, x, c) - sample(y - 1, x, c));
    gx = 0.5 * (sample(y, x + 1, c) - sample(y, x - 1, c));
  };

  // Image gradient at a known pixel from its known neighbors (one-sided when
  // a side is missing); feeds the first-order extrapolation term.
  auto grad_i = [&](int c, int y, int x, double& giy, double& gix) {
    auto known = [&](int yy, int xx) {
      return yy >= 0 && yy < h && xx >= 0 && xx < w && state[yy * w + xx] == PixelState::Known;
    };
    const double v = out.at(c, y, x);
    const bool xm = known(y, x - 1), xp = known(y, x + 1);
    if (xm && xp) gix = 0.5 * (out.at(c, y, x + 1) - out.at(c, y, x - 1));
    else if (xp) gix = out.at(c, y, x + 1) - v;
    else if (xm) gix = v - out.at(c, y, x - 1);
    else gix = 0.0;
    const bool ym = known(y - 1, x), yp = known(y + 1, x);
    if (ym && yp) giy = 0.5 * (out.at(c, y + 1, x) - out.at(c, y - 1, x));
    else if (yp) giy = out.at(c, y + 1, x) - v;
    else if (ym) giy = v - out.at(c, y - 1, x);
    else giy = 0.0;
  };

  std::vector<double> acc(image.channels);
  std::vector<double> lo(image.channels), hi(image.channels);
  while (!band.empty()) {
    const auto [tv, idx] = band.top();
    band.pop();
    if (state[idx] == PixelState::Known) continue;  // stale entry
    const int py = idx / w, px = idx % w;

    double gy, gx;
    grad_t(py, px, gy, gx);
    const double gn = std::hypot(gy, gx);

    double wsum = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(lo.begin(), lo.end(), kInf);
    std::fill(hi.begin(), hi.end(), -kInf);
    for (int qy = std::max(0, py - radius); qy <= std::min(h - 1, py + radius); ++qy) {
      for (int qx = std::max(0, px - radius); qx <= std::min(w - 1, px + radius); ++qx) {
        if (state[qy * w + qx] != PixelState::Known) continue;
        const double ry = py - qy, rx = px - qx;
        const double len2 = ry * ry + rx * rx;
        if (len2 > static_cast<double>(radius) * radius || len2 == 0.0) continue;
        const double len = std::sqrt(len2);
        double dir = 1.0;
        if (gn > 1e-12) dir = std::abs(ry * gy + rx * gx) / (len * gn);
        const double wgt = std::max(dir, 1e-6) * (1.0 / len2) *
                           (1.0 / (1.0 + std::abs(t[idx] - t[qy * w + qx])));
        wsum += wgt;
        for (int c = 0; c < image.channels; ++c) {
          const double v = out.at(c, qy, qx);
          double giy, gix;
          grad_i(c, qy, qx, giy, gix);
          acc[c] += wgt * (v + giy * ry + gix * rx);
          lo[c] = std::min(lo[c], v);
          hi[c] = std::max(hi[c], v);
        }
      }
    }
    if (wsum > 0.0) {
      // clamping to the contributing value range keeps every fill a convex
      // combination of known pixels even with the extrapolation term
      for (int c = 0; c < image.channels; ++c)
        out.at(c, py, px) = std::clamp(acc[c] / wsum, lo[c], hi[c]);
    }
    state[idx] = PixelState::Known;

    for (int n = 0; n < 4; ++n) {
      const int yy = py + dy4[n], xx = px + dx4[n];
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      if (state[yy * w + xx] == PixelState::Known) continue;
      const double tn = eikonal_update(t, state, h, w, yy, xx);
      if (tn < t[yy * w + xx]) {
        t[yy * w + xx] = tn;
        state[yy * w + xx] = PixelState::Band;
        band.emplace(tn, yy * w + xx);
      }
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (sigma < 0.0) throw ArgumentError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return image;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kern(2 * r + 1);
  double norm = 0.0;
  for (int i = -r; i <= r; ++i) {
    kern[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kern[i + r];
  }
  for (double& v : kern) v /= norm;

  const int h = image.height, w = image.width;
  Tensor tmp(image.channels, h, w), out(image.channels, h, w);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const double* row = image.row(c, y);
      double* trow = tmp.row(c, y);
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += kern[i + r] * row[std::clamp(x + i, 0, w - 1)];
        trow[x] = s;
      }
    }
    for (int y = 0; y < h; ++y) {
      double* orow = out.row(c, y);
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += kern[i + r] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        orow[x] = s;
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> warp_and_paste(const Tensor& image, const Tensor& mask,
                                         const Tensor& background, const AffineParams& params,
                                         double blur_sigma) {
  if (mask.channels != 1 || mask.height != image.height || mask.width != image.width ||
      !background.same_shape(image))
    throw DimensionError("warp_and_paste: shape mismatch");
  if (params.scale <= 0.0) throw ArgumentError("warp_and_paste: scale must be positive");
  const int h = image.height, w = image.width;

  double cy = 0.0, cx = 0.0;
  int count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(0, y, x) >= 0.5) {
        cy += y;
        cx += x;
        ++count;
      }
    }
  }
  Tensor out_mask(1, h, w);
  if (count == 0) return {background, out_mask};
  cy /= count;
  cx /= count;

  // forward map: q = scale * R(theta) * Shear(s) * (p - c) + c + t
  const double cs = std::cos(params.rotation), sn = std::sin(params.rotation);
  const double m00 = params.scale * cs;
  const double m01 = params.scale * (cs * params.shear - sn);
  const double m10 = params.scale * sn;
  const double m11 = params.scale * (sn * params.shear + cs);
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;

  Tensor warped(image.channels, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double qx = x - cx - params.tx;
      const double qy = y - cy - params.ty;
      const double sx = i00 * qx + i01 * qy + cx;
      const double sy = i10 * qx + i11 * qy + cy;

      const int ny = static_cast<int>(std::lround(sy));
      const int nx = static_cast<int>(std::lround(sx));
      const bool on_target = ny >= 0 && ny < h && nx >= 0 && nx < w && mask.at(0, ny, nx) >= 0.5;
      out_mask.at(0, y, x) = on_target ? 1.0 : 0.0;

      const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int y0 = static_cast<int>(std::floor(fy));
      const int x0 = static_cast<int>(std::floor(fx));
      const int y1 = std::min(y0 + 1, h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double ty = fy - y0, tx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        warped.at(c, y, x) =
            (1.0 - ty) * ((1.0 - tx) * image.at(c, y0, x0) + tx * image.at(c, y0, x1)) +
            ty * ((1.0 - tx) * image.at(c, y1, x0) + tx * image.at(c, y1, x1));
      }
    }
  }

  const Tensor blurred = gaussian_blur(warped, blur_sigma);
  Tensor out_image = background;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (out_mask.at(0, y, x) >= 0.5) {
        for (int c = 0; c < image.channels; ++c) out_image.at(c, y, x) = blurred.at(c, y, x);
      }
    }
  }
  return {std::move(out_image), std::move(out_mask)};
}

std::vector<std::pair<Tensor, Tensor>> generate_initial_set(const Tensor& image,
                                                            const Tensor& mask,
                                                            const AugmentationConfig& cfg) {
  if (cfg.count < 1) throw ArgumentError("generate_initial_set: count must be >= 1");
  auto ordered = [](const Interval& iv) { return iv.lo <= iv.hi; };
  if (!ordered(cfg.rotation) || !ordered(cfg.scale) || !ordered(cfg.translation) ||
      !ordered(cfg.shear) || !ordered(cfg.blur_sigma) || cfg.scale.lo <= 0.0 ||
      cfg.blur_sigma.lo < 0.0)
    throw ArgumentError("generate_initial_set: malformed parameter ranges");

  std::vector<std::pair<Tensor, Tensor>> set;
  set.reserve(cfg.count);
  set.emplace_back(image, mask);
  if (cfg.count == 1) return set;

  const Tensor background = inpaint_background(image, mask);
  for (int k = 1; k < cfg.count; ++k) {
    std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(k));
    auto draw = [&rng](const Interval& iv) {
      return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
    };
    AffineParams p;
    p.rotation = draw(cfg.rotation);
    p.scale = draw(cfg.scale);
    p.tx = draw(cfg.translation) * image.width;
    p.ty = draw(cfg.translation) * image.height;
    p.shear = draw(cfg.shear);
    const double sigma = draw(cfg.blur_sigma);
    set.push_back(warp_and_paste(image, mask, background, p, sigma));
  }
  return set;
}

}  // namespace dvseg
