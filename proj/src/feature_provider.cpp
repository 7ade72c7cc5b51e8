#include "dvseg/feature_provider.hpp"

#include <cmath>
#include <random>

#include "dvseg/io_formats.hpp"
#include "dvseg/tensor_ops.hpp"

namespace dvseg {

namespace {

constexpr int kBaseChannels = 12;

int grid_cells(int pixels) { return (pixels + 15) / 16; }

}  // namespace

Tensor extract_toy_features_raw(const Tensor& image, const FeatureSpec& spec) {
  if (image.channels != 3) throw DimensionError("toy features: image must have 3 channels");
  if (image.height < 16 || image.width < 16)
    throw DimensionError("toy features: image must be at least 16x16");
  if (spec.channels < 1) throw ArgumentError("toy features: channel count must be positive");
  if (spec.stride != 16) throw ArgumentError("toy features: stride is fixed at 16");

  const int h = image.height, w = image.width;
  const int gh = grid_cells(h), gw = grid_cells(w);

  // luminance and Sobel gradients at pixel resolution, borders clamped
  Tensor lum(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      lum.at(0, y, x) = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
    }
  }
  auto lat = [&lum, h, w](int y, int x) {
    return lum.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };

  Tensor base(kBaseChannels, gh, gw);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const int y0 = gy * 16, y1 = std::min(h, y0 + 16);
      const int x0 = gx * 16, x1 = std::min(w, x0 + 16);
      const double n = static_cast<double>(y1 - y0) * (x1 - x0);

      for (int c = 0; c < 3; ++c) {
        double m = 0.0, m2 = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            const double v = image.at(c, y, x);
            m += v;
            m2 += v * v;
          }
        }
        m /= n;
        base.at(c, gy, gx) = m;
        base.at(3 + c, gy, gx) = m2 / n - m * m;
      }

      double e0 = 0.0, e1 = 0.0, e2 = 0.0, e3 = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double gxv = (lat(y - 1, x + 1) + 2.0 * lat(y, x + 1) + lat(y + 1, x + 1) -
                              lat(y - 1, x - 1) - 2.0 * lat(y, x - 1) - lat(y + 1, x - 1)) /
                             4.0;
          const double gyv = (lat(y + 1, x - 1) + 2.0 * lat(y + 1, x) + lat(y + 1, x + 1) -
                              lat(y - 1, x - 1) - 2.0 * lat(y - 1, x) - lat(y - 1, x + 1)) /
                             4.0;
          e0 += std::abs(gxv);
          e1 += std::abs(gyv);
          e2 += std::abs((gxv + gyv) * inv_sqrt2);
          e3 += std::abs((gxv - gyv) * inv_sqrt2);
        }
      }
      base.at(6, gy, gx) = e0 / n;
      base.at(7, gy, gx) = e1 / n;
      base.at(8, gy, gx) = e2 / n;
      base.at(9, gy, gx) = e3 / n;

      base.at(10, gy, gx) = (gx + 0.5) / gw;
      base.at(11, gy, gx) = (gy + 0.5) / gh;
    }
  }

  if (spec.channels <= kBaseChannels) {
    Tensor out(spec.channels, gh, gw);
    std::copy(base.data.begin(), base.data.begin() + out.numel(), out.data.begin());
    return out;
  }

  // seeded random 3x3 filter bank over the base stack for the remainder
  const int n_bank = spec.channels - kBaseChannels;
  ConvKernel bank(n_bank, kBaseChannels, 3);
  std::mt19937_64 rng(spec.toy_seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(9.0 * kBaseChannels));
  for (double& v : bank.weights) v = dist(rng);
  const Tensor mixed = convolve(base, bank);

  Tensor out(spec.channels, gh, gw);
  std::copy(base.data.begin(), base.data.end(), out.data.begin());
  std::copy(mixed.data.begin(), mixed.data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(base.numel()));
  return out;
}

Tensor standardize_channels(Tensor features) {
  const int plane = features.plane();
  for (int c = 0; c < features.channels; ++c) {
    double* p = features.chan(c);
    double m = 0.0;
    for (int i = 0; i < plane; ++i) m += p[i];
    m /= plane;
    double var = 0.0;
    for (int i = 0; i < plane; ++i) var += (p[i] - m) * (p[i] - m);
    var /= plane;
    if (var < 1e-12) {
      for (int i = 0; i < plane; ++i) p[i] = 0.0;
    } else {
      const double inv = 1.0 / std::sqrt(var);
      for (int i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
    }
  }
  return features;
}

Tensor extract_toy_features(const Tensor& image, const FeatureSpec& spec) {
  return standardize_channels(extract_toy_features_raw(image, spec));
}

PrecomputedFeatureProvider::PrecomputedFeatureProvider(std::string sequence_dir,
                                                       int expected_channels)
    : dir_(std::move(sequence_dir)), expected_channels_(expected_channels) {}

Tensor PrecomputedFeatureProvider::compute(int frame_index, const Tensor&) {
  Tensor t = read_feature_file(feature_path(dir_, frame_index));
  if (t.channels != expected_channels_)
    throw DimensionError("precomputed features declare " + std::to_string(t.channels) +
                         " channels but the engine is configured for " +
                         std::to_string(expected_channels_));
  return t;
}

std::unique_ptr<FeatureProvider> make_feature_provider(const FeatureSpec& spec,
                                                       const std::string& sequence_dir) {
  if (spec.source == FeatureSource::Toy) return std::make_unique<ToyFeatureProvider>(spec);
  return std::make_unique<PrecomputedFeatureProvider>(sequence_dir, spec.channels);
}

}  // namespace dvseg
