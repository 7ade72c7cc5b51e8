#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dvseg/tensor.hpp"

namespace dvseg {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Affine warp about the target centroid plus a Gaussian blur, used to
// synthesize extra first-frame training pairs.
struct AffineParams {
  double rotation = 0.0;  // radians
  double scale = 1.0;
  double tx = 0.0;  // pixels
  double ty = 0.0;
  double shear = 0.0;
};

struct AugmentationConfig {
  int count = 20;                          // generated pairs, original included
  Interval rotation{-0.4363, 0.4363};      // +/- 25 degrees
  Interval scale{0.8, 1.3};
  Interval translation{-0.10, 0.10};       // fraction of image size
  Interval shear{-0.1, 0.1};
  Interval blur_sigma{0.5, 2.0};
  std::uint64_t seed = 0;
};

// Replaces masked pixels by fast-marching inpainting: pixels are filled in
// increasing distance-from-boundary order, each as a positively weighted
// average of already-known neighbors within `radius`, the weights combining
// direction, distance and level-set factors. Off-mask pixels are returned
// unchanged and every filled value is a convex combination of known ones.
Tensor inpaint_background(const Tensor& image, const Tensor& mask, int radius = 5);

// Warps the target (mask == 1) about its centroid, blurs the warped image
// channels, and composites the result over `background`. The mask is warped
// nearest-neighbor so it stays binary; target parts leaving the frame are
// dropped. An all-zero result mask is allowed.
std::pair<Tensor, Tensor> warp_and_paste(const Tensor& image, const Tensor& mask,
                                         const Tensor& background, const AffineParams& params,
                                         double blur_sigma);

// First-frame initial set: element 0 is the unmodified (image, mask) pair,
// the rest are warped/blurred variants over the inpainted background with
// parameters drawn uniformly from the config ranges. Sample k draws from a
// generator seeded with seed + k, so the set is a pure function of its
// inputs regardless of evaluation order.
std::vector<std::pair<Tensor, Tensor>> generate_initial_set(const Tensor& image,
                                                            const Tensor& mask,
                                                            const AugmentationConfig& cfg);

// Separable Gaussian blur with border clamping; sigma 0 is a copy.
Tensor gaussian_blur(const Tensor& image, double sigma);

}  // namespace dvseg
