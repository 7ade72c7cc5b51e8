#include <algorithm>
#include <random>

#include "doctest.h"
#include "dvseg/augmentation.hpp"
#include "support/test_util.hpp"

using namespace dvseg;

namespace {

// centered disk mask
Tensor disk_mask(int h, int w, double cy, double cx, double r) {
  Tensor m(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(0, y, x) = 1.0;
  return m;
}

Tensor ramp_image(int h, int w) {
  Tensor img(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = static_cast<double>(x) / (w - 1);
  return img;
}

}  // namespace

TEST_CASE("inpaint_background: empty mask leaves the image untouched") {
  std::mt19937_64 rng(1);
  Tensor img = testutil::random_tensor(3, 12, 12, rng, 0.0, 1.0);
  Tensor mask(1, 12, 12);
  Tensor out = inpaint_background(img, mask);
  CHECK(out.data == img.data);
}

TEST_CASE("inpaint_background: single-pixel hole in a constant image") {
  Tensor img(3, 9, 9);
  img.fill(0.6);
  Tensor mask(1, 9, 9);
  mask.at(0, 4, 4) = 1.0;
  Tensor out = inpaint_background(img, mask);
  CHECK(out.at(0, 4, 4) == doctest::Approx(0.6));
  CHECK(out.at(2, 4, 4) == doctest::Approx(0.6));
}

TEST_CASE("inpaint_background: off-mask pixels unchanged, fill convex in known range") {
  std::mt19937_64 rng(2);
  Tensor img = testutil::random_tensor(1, 16, 16, rng, 0.0, 1.0);
  Tensor mask(1, 16, 16);
  for (int y = 5; y < 10; ++y)
    for (int x = 6; x < 11; ++x) mask.at(0, y, x) = 1.0;

  Tensor out = inpaint_background(img, mask);
  double known_min = 1e9, known_max = -1e9;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (mask.at(0, y, x) < 0.5) {
        CHECK(out.at(0, y, x) == img.at(0, y, x));
        known_min = std::min(known_min, img.at(0, y, x));
        known_max = std::max(known_max, img.at(0, y, x));
      }
    }
  }
  for (int y = 5; y < 10; ++y) {
    for (int x = 6; x < 11; ++x) {
      CHECK(out.at(0, y, x) >= known_min - 1e-12);
      CHECK(out.at(0, y, x) <= known_max + 1e-12);
    }
  }
}

TEST_CASE("inpaint_background: hole in a linear ramp is restored within 10% of span") {
  Tensor img = ramp_image(32, 32);
  Tensor mask(1, 32, 32);
  for (int y = 14; y < 19; ++y)
    for (int x = 14; x < 19; ++x) mask.at(0, y, x) = 1.0;

  Tensor out = inpaint_background(img, mask);
  // ramp span across the hole: columns 13..19 of a 0..1 ramp
  const double span = (19.0 - 13.0) / 31.0;
  double ring_min = 1e9, ring_max = -1e9;
  for (int y = 13; y < 20; ++y) {
    for (int x = 13; x < 20; ++x) {
      if (mask.at(0, y, x) < 0.5) {
        ring_min = std::min(ring_min, img.at(0, y, x));
        ring_max = std::max(ring_max, img.at(0, y, x));
      }
    }
  }
  for (int y = 14; y < 19; ++y) {
    for (int x = 14; x < 19; ++x) {
      const double got = out.at(0, y, x);
      CHECK(got >= ring_min - 1e-12);
      CHECK(got <= ring_max + 1e-12);
      CHECK(std::abs(got - img.at(0, y, x)) < 0.10 * span);
    }
  }
}

TEST_CASE("inpaint_background: full mask raises DegenerateMaskError") {
  Tensor img(3, 8, 8);
  Tensor mask(1, 8, 8);
  mask.fill(1.0);
  CHECK_THROWS_AS(inpaint_background(img, mask), DegenerateMaskError);
}

TEST_CASE("warp_and_paste: identity warp reproduces target over background") {
  std::mt19937_64 rng(3);
  Tensor img = testutil::random_tensor(3, 20, 24, rng, 0.0, 1.0);
  Tensor mask = disk_mask(20, 24, 10, 12, 5);
  Tensor background = inpaint_background(img, mask);

  auto [out_img, out_mask] = warp_and_paste(img, mask, background, AffineParams{}, 0.0);
  CHECK(out_mask.data == mask.data);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (mask.at(0, y, x) >= 0.5) {
          CHECK(out_img.at(c, y, x) == doctest::Approx(img.at(c, y, x)));
        } else {
          CHECK(out_img.at(c, y, x) == background.at(c, y, x));
        }
      }
    }
  }
}

TEST_CASE("warp_and_paste: pure translation shifts the mask exactly") {
  std::mt19937_64 rng(4);
  Tensor img = testutil::random_tensor(3, 24, 32, rng, 0.0, 1.0);
  Tensor mask = disk_mask(24, 32, 12, 12, 4);
  Tensor background(3, 24, 32);
  AffineParams p;
  p.tx = 5.0;
  auto [out_img, out_mask] = warp_and_paste(img, mask, background, p, 0.0);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double want = (x >= 5) ? mask.at(0, y, x - 5) : 0.0;
      CHECK(out_mask.at(0, y, x) == want);
    }
  }
}

TEST_CASE("warp_and_paste: masks stay binary under random parameters") {
  std::mt19937_64 rng(5);
  Tensor img = testutil::random_tensor(3, 20, 20, rng, 0.0, 1.0);
  Tensor mask = disk_mask(20, 20, 10, 10, 4);
  Tensor background(3, 20, 20);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    AffineParams p;
    p.rotation = 0.5 * u(rng);
    p.scale = 1.0 + 0.3 * u(rng);
    p.tx = 6.0 * u(rng);
    p.ty = 6.0 * u(rng);
    p.shear = 0.1 * u(rng);
    auto [oimg, omask] = warp_and_paste(img, mask, background, p, 0.5 + 0.5 * u(rng) + 0.5);
    for (double v : omask.data) CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("generate_initial_set: count, original first, determinism, area bound") {
  std::mt19937_64 rng(6);
  Tensor img = testutil::random_tensor(3, 32, 40, rng, 0.0, 1.0);
  Tensor mask = disk_mask(32, 40, 16, 20, 6);
  AugmentationConfig cfg;
  cfg.count = 20;
  cfg.seed = 99;

  const auto set = generate_initial_set(img, mask, cfg);
  REQUIRE(set.size() == 20);
  CHECK(set[0].first.data == img.data);
  CHECK(set[0].second.data == mask.data);

  const auto set2 = generate_initial_set(img, mask, cfg);
  for (int k = 0; k < 20; ++k) {
    CHECK(set[k].first.data == set2[k].first.data);
    CHECK(set[k].second.data == set2[k].second.data);
  }

  double orig_frac = 0.0;
  for (double v : mask.data) orig_frac += v;
  orig_frac /= mask.numel();
  for (const auto& [i, m] : set) {
    double frac = 0.0;
    for (double v : m.data) frac += v;
    frac /= m.numel();
    CHECK(frac >= 0.0);
    CHECK(frac <= 2.0 * orig_frac + 1e-9);  // scale capped at 1.3 => area < 1.7x
  }
}

TEST_CASE("generate_initial_set: validates ranges and count") {
  Tensor img(3, 16, 16);
  Tensor mask = disk_mask(16, 16, 8, 8, 3);
  AugmentationConfig cfg;
  cfg.count = 0;
  CHECK_THROWS_AS(generate_initial_set(img, mask, cfg), ArgumentError);
  cfg.count = 3;
  cfg.scale = {1.3, 0.8};
  CHECK_THROWS_AS(generate_initial_set(img, mask, cfg), ArgumentError);
}
