#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvseg/io_formats.hpp"
#include "dvseg/tensor.hpp"

namespace dvseg {

enum class ShapeKind { Ellipse, Rectangle };

// One moving shape: linear drift plus a sinusoidal wobble per axis, optional
// linear scale drift over the sequence.
struct ObjectSpec {
  ShapeKind shape = ShapeKind::Ellipse;
  std::array<double, 3> color{0.8, 0.2, 0.2};
  double cx = 0.0, cy = 0.0;          // start center, pixels
  double vx = 0.0, vy = 0.0;          // pixels per frame
  double wobble_amp = 0.0;            // pixels
  double wobble_freq = 0.0;           // cycles per frame
  double wobble_phase = 0.0;
  double rx = 30.0, ry = 30.0;        // half extents, pixels
  double scale_drift = 0.0;           // final scale = 1 + scale_drift
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  int frames = 60;
  int width = 640;
  int height = 384;
  std::vector<ObjectSpec> objects;      // annotated targets, ids 1..n
  std::vector<ObjectSpec> distractors;  // rendered under the targets, unannotated
  std::array<double, 3> background_color{0.45, 0.45, 0.45};
  double background_amplitude = 0.03;  // texture strength
  double brightness_drift = 0.0;       // added to all channels by the last frame
};

struct RenderedFrame {
  Tensor image;    // 3 channels, [0, 1]
  IndexMask mask;  // exact ground truth
};

// Deterministic render of frame t. Raises GenerationError when a target
// keeps less than half of its area inside the frame.
RenderedFrame render_frame(const SyntheticSceneSpec& spec, int t);

// Writes frames/NNNNN.ppm and masks/NNNNN.pgm under dir.
void write_sequence(const SyntheticSceneSpec& spec, const std::string& dir);

enum class Tier { Easy, Medium, Hard };

// Difficulty presets: easy has well-separated colors and slow motion; medium
// adds a moderately similar distractor, brightness drift and scale drift;
// hard uses a near-identical distractor, fast motion and doubled scale drift.
SyntheticSceneSpec make_tier_spec(Tier tier, std::uint64_t seed, int frames, int width,
                                  int height, int n_objects);

Tier tier_from_name(const std::string& name);

}  // namespace dvseg
