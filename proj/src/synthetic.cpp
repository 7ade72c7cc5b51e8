#include "dvseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

namespace dvseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Placement {
  double cx, cy, rx, ry;
};

Placement place_at(const ObjectSpec& o, int t, int frames) {
  const double phase = 2.0 * kPi * o.wobble_freq * t + o.wobble_phase;
  const double progress = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
  const double scale = 1.0 + o.scale_drift * progress;
  Placement p;
  p.cx = o.cx + o.vx * t + o.wobble_amp * std::sin(phase);
  p.cy = o.cy + o.vy * t + o.wobble_amp * std::sin(phase + kPi / 2.0);
  p.rx = o.rx * scale;
  p.ry = o.ry * scale;
  return p;
}

bool inside_shape(const ObjectSpec& o, const Placement& p, double x, double y) {
  const double dx = (x - p.cx) / p.rx;
  const double dy = (y - p.cy) / p.ry;
  if (o.shape == ShapeKind::Ellipse) return dx * dx + dy * dy <= 1.0;
  return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
}

double analytic_area(const ObjectSpec& o, const Placement& p) {
  if (o.shape == ShapeKind::Ellipse) return kPi * p.rx * p.ry;
  return 4.0 * p.rx * p.ry;
}

// Paints a shape; returns the number of painted (in-frame) pixels.
int paint(Tensor& image, IndexMask* mask, const ObjectSpec& o, const Placement& p,
          std::uint8_t id) {
  const int h = image.height, w = image.width;
  const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.ry - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.cy + p.ry + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.rx - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.cx + p.rx + 1)));
  int count = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!inside_shape(o, p, x, y)) continue;
      ++count;
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = o.color[c];
      if (mask) mask->at(y, x) = id;
    }
  }
  return count;
}

struct TextureWave {
  double fx, fy, phase, weight;
};

std::array<std::vector<TextureWave>, 3> texture_waves(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> wt(0.4, 1.0);
  std::array<std::vector<TextureWave>, 3> waves;
  for (auto& channel : waves) {
    for (int k = 0; k < 3; ++k) channel.push_back({freq(rng), freq(rng), ph(rng), wt(rng)});
  }
  return waves;
}

}  // namespace

RenderedFrame render_frame(const SyntheticSceneSpec& spec, int t) {
  if (spec.frames < 1 || t < 0 || t >= spec.frames)
    throw ArgumentError("render_frame: frame index out of range");
  if (spec.width < 16 || spec.height < 16)
    throw ArgumentError("render_frame: scene must be at least 16x16");
  if (spec.objects.empty()) throw ArgumentError("render_frame: no annotated objects");
  if (spec.objects.size() > 255)
    throw ArgumentError("render_frame: object ids must fit an 8-bit mask");

  const int h = spec.height, w = spec.width;
  RenderedFrame out{Tensor(3, h, w), IndexMask(h, w)};

  const auto waves = texture_waves(spec.seed);
  const double progress = spec.frames > 1 ? static_cast<double>(t) / (spec.frames - 1) : 0.0;
  const double brightness = spec.brightness_drift * progress;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      double* row = out.image.row(c, y);
      for (int x = 0; x < w; ++x) {
        double f = 0.0, norm = 0.0;
        for (const TextureWave& wv : waves[c]) {
          f += wv.weight *
               std::sin(2.0 * kPi * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
          norm += wv.weight;
        }
        row[x] = spec.background_color[c] + spec.background_amplitude * f / norm;
      }
    }
  }

  for (const ObjectSpec& d : spec.distractors) {
    paint(out.image, nullptr, d, place_at(d, t, spec.frames), 0);
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    const Placement p = place_at(o, t, spec.frames);
    const int painted = paint(out.image, &out.mask, o, p, static_cast<std::uint8_t>(i + 1));
    if (painted < 0.5 * analytic_area(o, p))
      throw GenerationError("render_frame: object " + std::to_string(i + 1) + " leaves frame " +
                            std::to_string(t));
  }

  if (brightness != 0.0) {
    for (double& v : out.image.data) v += brightness;
  }
  for (double& v : out.image.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void write_sequence(const SyntheticSceneSpec& spec, const std::string& dir) {
  std::filesystem::create_directories(dir + "/frames");
  std::filesystem::create_directories(dir + "/masks");
  for (int t = 0; t < spec.frames; ++t) {
    const RenderedFrame frame = render_frame(spec, t);
    write_ppm(frame_path(dir, t), frame.image);
    write_pgm(mask_path(dir, t), frame.mask);
  }
}

Tier tier_from_name(const std::string& name) {
  if (name == "easy") return Tier::Easy;
  if (name == "medium") return Tier::Medium;
  if (name == "hard") return Tier::Hard;
  throw ArgumentError("unknown tier '" + name + "'");
}

SyntheticSceneSpec make_tier_spec(Tier tier, std::uint64_t seed, int frames, int width,
                                  int height, int n_objects) {
  if (n_objects < 1 || n_objects > 2)
    throw ArgumentError("make_tier_spec: supported object counts are 1 and 2");
  SyntheticSceneSpec spec;
  spec.seed = seed;
  spec.frames = frames;
  spec.width = width;
  spec.height = height;

  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double travel_lo, travel_hi, wobble_lo, wobble_hi, scale_drift, chroma_dist;
  switch (tier) {
    case Tier::Easy:
      travel_lo = 0.08; travel_hi = 0.16;
      wobble_lo = 3.0; wobble_hi = 7.0;
      scale_drift = 0.0;
      chroma_dist = 0.9;  // far-away distractor color
      spec.brightness_drift = 0.0;
      break;
    case Tier::Medium:
      travel_lo = 0.12; travel_hi = 0.22;
      wobble_lo = 4.0; wobble_hi = 9.0;
      scale_drift = 0.30;
      chroma_dist = 0.30;
      spec.brightness_drift = 0.12;
      break;
    case Tier::Hard:
      travel_lo = 0.28; travel_hi = 0.42;
      wobble_lo = 6.0; wobble_hi = 12.0;
      scale_drift = 0.60;
      chroma_dist = 0.06;
      spec.brightness_drift = 0.18;
      break;
  }

  const std::array<std::array<double, 3>, 4> palette{{
      {0.82, 0.16, 0.16},
      {0.14, 0.30, 0.84},
      {0.12, 0.72, 0.22},
      {0.83, 0.78, 0.15},
  }};
  const std::size_t first_color = rng() % palette.size();

  const double base_r = 0.085 * std::min(width, height);
  for (int i = 0; i < n_objects; ++i) {
    ObjectSpec o;
    o.shape = (rng() % 2 == 0) ? ShapeKind::Ellipse : ShapeKind::Rectangle;
    o.color = palette[(first_color + i) % palette.size()];
    o.rx = base_r * (0.85 + 0.4 * unit(rng));
    o.ry = base_r * (0.85 + 0.4 * unit(rng));
    o.scale_drift = scale_drift;

    const double travel = (travel_lo + (travel_hi - travel_lo) * unit(rng)) * width;
    const double dir = (i % 2 == 0) ? 1.0 : -1.0;
    o.cx = 0.5 * width - dir * 0.5 * travel + (unit(rng) - 0.5) * 0.06 * width;
    o.vx = dir * travel / std::max(1, frames - 1);
    const double lane = (n_objects == 1) ? 0.5 : (i == 0 ? 0.28 : 0.72);
    o.cy = lane * height + (unit(rng) - 0.5) * 0.04 * height;
    o.vy = 0.0;
    o.wobble_amp = wobble_lo + (wobble_hi - wobble_lo) * unit(rng);
    o.wobble_freq = 0.02 + 0.04 * unit(rng);
    o.wobble_phase = 2.0 * kPi * unit(rng);
    spec.objects.push_back(o);
  }

  // one distractor whose color sits at the tier's chroma distance from the
  // first target, traveling the middle lane in the opposite direction
  {
    ObjectSpec d;
    d.shape = ShapeKind::Ellipse;
    const auto& base = spec.objects[0].color;
    std::array<double, 3> dirv{unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5};
    const double n = std::sqrt(dirv[0] * dirv[0] + dirv[1] * dirv[1] + dirv[2] * dirv[2]);
    for (int c = 0; c < 3; ++c) {
      d.color[c] = std::clamp(base[c] + chroma_dist * dirv[c] / n, 0.05, 0.95);
    }
    d.rx = base_r * (0.8 + 0.3 * unit(rng));
    d.ry = d.rx;
    const double travel = (travel_lo + (travel_hi - travel_lo) * unit(rng)) * width;
    d.cx = 0.5 * width + 0.5 * travel + 0.18 * width;
    d.vx = -travel / std::max(1, frames - 1);
    d.cy = 0.5 * height + (n_objects == 2 ? 0.0 : 0.30 * height);
    d.wobble_amp = 4.0;
    d.wobble_freq = 0.03;
    d.wobble_phase = 2.0 * kPi * unit(rng);
    spec.distractors.push_back(d);
  }

  spec.background_amplitude = (tier == Tier::Easy) ? 0.03 : 0.05;
  return spec;
}

}  // namespace dvseg
