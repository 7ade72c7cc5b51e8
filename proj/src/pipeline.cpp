#include "dvseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "dvseg/tensor_ops.hpp"

namespace dvseg {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

EngineConfig EngineConfig::preset(EngineMode mode, FeatureSource source, int feature_channels,
                                  std::uint64_t seed) {
  EngineConfig cfg;
  cfg.mode = mode;
  cfg.features.source = source;
  cfg.features.channels = feature_channels;
  cfg.features.toy_seed = mix_seed(seed, 11);
  cfg.model.feature_channels = feature_channels;
  cfg.model.init_seed = seed;
  cfg.augmentation.seed = mix_seed(seed, 23);

  const bool fast = (mode == EngineMode::Fast);
  cfg.t_s = fast ? 16 : 8;
  cfg.optimizer.n_gn = fast ? 4 : 5;
  cfg.optimizer.n_cgi = 5;
  cfg.optimizer.n_cg = 10;
  cfg.optimizer.n_cgu = fast ? 5 : 10;
  if (source == FeatureSource::Toy) {
    cfg.model.c = fast ? 8 : 16;
  } else {
    cfg.model.c = fast ? 32 : 96;
  }
  if (cfg.model.c > feature_channels)
    throw ArgumentError("preset: c (" + std::to_string(cfg.model.c) +
                        ") exceeds the feature channel count (" +
                        std::to_string(feature_channels) + "); use custom mode");
  return cfg;
}

EngineConfig engine_config_from_file(const RunFileConfig& file, int precomputed_channels) {
  const std::string mode_str = file.mode.value_or("ours");
  EngineMode mode;
  if (mode_str == "ours") mode = EngineMode::Ours;
  else if (mode_str == "fast") mode = EngineMode::Fast;
  else if (mode_str == "custom") mode = EngineMode::Custom;
  else throw ArgumentError("config: unknown mode '" + mode_str + "'");

  const std::string src_str = file.feature_source.value_or("toy");
  FeatureSource source;
  if (src_str == "toy") source = FeatureSource::Toy;
  else if (src_str == "precomputed") source = FeatureSource::Precomputed;
  else throw ArgumentError("config: unknown feature_source '" + src_str + "'");

  if (mode != EngineMode::Custom) {
    // the schedule and model width are pinned by the mode preset
    const char* pinned = nullptr;
    if (file.t_s) pinned = "t_s";
    if (file.c) pinned = "c";
    if (file.n_gn) pinned = "n_gn";
    if (file.n_cgi) pinned = "n_cgi";
    if (file.n_cg) pinned = "n_cg";
    if (file.n_cgu) pinned = "n_cgu";
    if (pinned)
      throw ArgumentError("config: key '" + std::string(pinned) + "' is pinned by mode=" +
                          mode_str + "; use mode=custom to override it");
  }

  int channels = file.toy_channels.value_or(64);
  if (source == FeatureSource::Precomputed) {
    if (file.toy_channels)
      throw ArgumentError("config: toy_channels does not apply to precomputed features");
    channels = precomputed_channels > 0 ? precomputed_channels : 1024;
  }
  const std::uint64_t seed = file.seed.value_or(0);

  EngineConfig cfg = EngineConfig::preset(mode == EngineMode::Fast ? EngineMode::Fast
                                                                   : EngineMode::Ours,
                                          source, channels, seed);
  cfg.mode = mode;
  if (mode == EngineMode::Custom) {
    if (file.t_s) cfg.t_s = *file.t_s;
    if (file.c) cfg.model.c = *file.c;
    if (file.n_gn) cfg.optimizer.n_gn = *file.n_gn;
    if (file.n_cgi) cfg.optimizer.n_cgi = *file.n_cgi;
    if (file.n_cg) cfg.optimizer.n_cg = *file.n_cg;
    if (file.n_cgu) cfg.optimizer.n_cgu = *file.n_cgu;
  }
  if (file.eta) cfg.eta = *file.eta;
  if (file.k_max) cfg.k_max = *file.k_max;
  if (file.kappa_min) cfg.optimizer.loss.kappa_min = *file.kappa_min;
  if (file.lambda1) cfg.optimizer.loss.lambda1 = *file.lambda1;
  if (file.lambda2) cfg.optimizer.loss.lambda2 = *file.lambda2;
  if (file.pixel_weight_rule) {
    if (*file.pixel_weight_rule == "balanced_max")
      cfg.optimizer.loss.rule = PixelWeightRule::BalancedMax;
    else if (*file.pixel_weight_rule == "literal_min")
      cfg.optimizer.loss.rule = PixelWeightRule::LiteralMin;
    else
      throw ArgumentError("config: unknown pixel_weight_rule '" + *file.pixel_weight_rule + "'");
  }

  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) throw ArgumentError("config: eta must be in (0, 1)");
  if (cfg.k_max < 1) throw ArgumentError("config: k_max must be >= 1");
  if (!(cfg.optimizer.loss.kappa_min > 0.0 && cfg.optimizer.loss.kappa_min < 1.0))
    throw ArgumentError("config: kappa_min must be in (0, 1)");
  if (cfg.t_s < 1) throw ArgumentError("config: t_s must be >= 1");
  if (cfg.optimizer.n_gn < 1 || cfg.optimizer.n_cgi < 1 || cfg.optimizer.n_cg < 1 ||
      cfg.optimizer.n_cgu < 1)
    throw ArgumentError("config: iteration counts must be >= 1");
  if (cfg.model.c < 1 || cfg.model.c > cfg.model.feature_channels)
    throw ArgumentError("config: c must be in [1, feature channels]");
  if (cfg.optimizer.loss.lambda1 < 0.0 || cfg.optimizer.loss.lambda2 < 0.0)
    throw ArgumentError("config: lambda must be >= 0");
  return cfg;
}

CalibrationHead fit_calibration(const Tensor& score, const Tensor& label, int factor,
                                int iterations, double step) {
  if (score.channels != 1 || label.channels != 1)
    throw DimensionError("fit_calibration: single-channel inputs required");
  const Tensor up = upsample_bilinear(score, factor);
  if (up.height != label.height || up.width != label.width)
    throw DimensionError("fit_calibration: upsampled score does not match label size");

  const double n = static_cast<double>(up.numel());
  // Damped Newton steps on the two-parameter logistic problem. Plain
  // fixed-step gradient descent cannot reach the cross-entropy minimizer
  // here: with target fractions of a few percent the offset gradient dwarfs
  // the scale gradient and the head stays contractive on its own outputs.
  // Newton is affine-invariant in the score units and converges well within
  // the iteration budget.
  double a = 1.0, b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < up.data.size(); ++i) {
      const double u = up.data[i];
      const double p = sigmoid(a * u + b);
      const double d = p - label.data[i];
      const double s2 = p * (1.0 - p);
      ga += d * u;
      gb += d;
      haa += s2 * u * u;
      hab += s2 * u;
      hbb += s2;
    }
    ga /= n;
    gb /= n;
    haa = haa / n + 1e-12;
    hab /= n;
    hbb = hbb / n + 1e-12;
    const double det = haa * hbb - hab * hab;
    if (det <= 0.0 || !std::isfinite(det)) break;
    a -= step * (hbb * ga - hab * gb) / det;
    b -= step * (haa * gb - hab * ga) / det;
  }
  if (!std::isfinite(a) || !std::isfinite(b))
    throw NumericalError("fit_calibration: diverged");
  return CalibrationHead{a, b};
}

Tensor upsampled_probability(const Tensor& score, const CalibrationHead& head, int factor) {
  Tensor p = upsample_bilinear(score, factor);
  for (double& v : p.data) v = sigmoid(head.scale * v + head.offset);
  return p;
}

Tensor crop(const Tensor& t, int h, int w) {
  if (h > t.height || w > t.width) throw DimensionError("crop: target size exceeds source");
  if (h == t.height && w == t.width) return t;
  Tensor out(t.channels, h, w);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      std::copy(t.row(c, y), t.row(c, y) + w, out.row(c, y));
    }
  }
  return out;
}

Tensor pad_to(const Tensor& t, int h, int w) {
  if (h < t.height || w < t.width) throw DimensionError("pad_to: target size below source");
  if (h == t.height && w == t.width) return t;
  Tensor out(t.channels, h, w);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < t.height; ++y) {
      std::copy(t.row(c, y), t.row(c, y) + t.width, out.row(c, y));
    }
  }
  return out;
}

Tensor refine_d_only(const Tensor& score, const CalibrationHead& head, int image_h, int image_w,
                     int factor) {
  return crop(upsampled_probability(score, head, factor), image_h, image_w);
}

OutputMask aggregate_multi_object(const std::vector<Tensor>& probabilities,
                                  const std::vector<int>& object_ids) {
  if (probabilities.empty()) throw ArgumentError("aggregate_multi_object: no probability maps");
  if (probabilities.size() != object_ids.size())
    throw ArgumentError("aggregate_multi_object: ids/maps count mismatch");
  const int h = probabilities[0].height, w = probabilities[0].width;
  for (const Tensor& p : probabilities) {
    if (p.channels != 1 || p.height != h || p.width != w)
      throw DimensionError("aggregate_multi_object: probability map size mismatch");
  }

  constexpr double kEps = 1e-5;
  const int n = static_cast<int>(probabilities.size());
  OutputMask out;
  out.object_ids = object_ids;
  out.probabilities.assign(n, Tensor(1, h, w));
  out.labels = IndexMask(h, w);

  std::vector<double> odds(n);
  for (int i = 0; i < h * w; ++i) {
    double background = 1.0;
    for (int k = 0; k < n; ++k) {
      const double p = std::clamp(probabilities[k].data[i], kEps, 1.0 - kEps);
      odds[k] = p / (1.0 - p);
      background *= (1.0 - p);
    }
    const double o0 = background / (1.0 - background);
    double total = o0;
    for (int k = 0; k < n; ++k) total += odds[k];

    int best = 0;  // background
    double best_odds = o0;
    for (int k = 0; k < n; ++k) {
      out.probabilities[k].data[i] = odds[k] / total;
      if (odds[k] > best_odds) {
        best_odds = odds[k];
        best = k + 1;
      }
    }
    out.labels.ids[i] = best == 0 ? 0 : static_cast<std::uint8_t>(object_ids[best - 1]);
  }
  return out;
}

std::vector<int> mask_object_ids(const IndexMask& mask) {
  std::set<int> ids;
  for (std::uint8_t v : mask.ids)
    if (v != 0) ids.insert(v);
  return {ids.begin(), ids.end()};
}

Tensor object_mask_tensor(const IndexMask& mask, int id) {
  Tensor t(1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.ids.size(); ++i) t.data[i] = (mask.ids[i] == id) ? 1.0 : 0.0;
  return t;
}

Engine::Engine(EngineConfig cfg, std::unique_ptr<FeatureProvider> provider)
    : cfg_(std::move(cfg)), provider_(std::move(provider)) {
  if (!provider_) throw ArgumentError("Engine: null feature provider");
}

OutputMask Engine::initialize(const Tensor& image, const IndexMask& first_mask) {
  if (frame_index_ != -1) throw ArgumentError("Engine: already initialized");
  if (image.channels != 3) throw DimensionError("Engine: image must have 3 channels");
  if (first_mask.height != image.height || first_mask.width != image.width)
    throw DimensionError("Engine: annotation size does not match the image");

  const std::vector<int> ids = mask_object_ids(first_mask);
  if (ids.empty()) throw ArgumentError("Engine: annotation contains no objects");

  image_h_ = image.height;
  image_w_ = image.width;
  padded_h_ = ((image_h_ + 15) / 16) * 16;
  padded_w_ = ((image_w_ + 15) / 16) * 16;

  auto features0 = std::make_shared<const Tensor>(provider_->features_for_frame(0, image));
  if (features0->channels != cfg_.model.feature_channels)
    throw DimensionError("Engine: provider produced " + std::to_string(features0->channels) +
                         " channels, configured for " +
                         std::to_string(cfg_.model.feature_channels));
  if (features0->height * 16 != padded_h_ || features0->width * 16 != padded_w_)
    throw DimensionError("Engine: feature grid does not match the stride-16 image grid");

  int background = 0;
  for (std::uint8_t v : first_mask.ids)
    if (v == 0) ++background;
  if (background == 0)
    throw ArgumentError("Engine: degenerate annotation (no background pixels)");

  for (std::size_t o = 0; o < ids.size(); ++o) {
    const int id = ids[o];
    const Tensor mask = object_mask_tensor(first_mask, id);
    double area = 0.0;
    for (double v : mask.data) area += v;
    if (area == 0.0) throw ArgumentError("Engine: degenerate annotation for object");

    AugmentationConfig aug = cfg_.augmentation;
    aug.seed = mix_seed(cfg_.augmentation.seed, o);
    if (!provider_->can_extract_images()) aug.count = 1;  // no backbone for warped frames

    const auto pairs = generate_initial_set(image, mask, aug);

    using Sample = std::pair<std::shared_ptr<const Tensor>, std::shared_ptr<const Tensor>>;
    std::vector<Sample> samples;
    samples.reserve(pairs.size());
    int skipped = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Tensor& aug_mask = pairs[k].second;
      double s = 0.0;
      for (double v : aug_mask.data) s += v;
      if (k > 0 && (s == 0.0 || s == static_cast<double>(aug_mask.numel()))) {
        ++skipped;  // degenerate augmented mask, flagged and dropped
        continue;
      }
      std::shared_ptr<const Tensor> feats =
          (k == 0) ? features0
                   : std::make_shared<const Tensor>(provider_->extract(pairs[k].first));
      samples.emplace_back(std::move(feats), std::make_shared<const Tensor>(pad_to(
                                                 pairs[k].second, padded_h_, padded_w_)));
    }

    ObjectState state(id, SampleMemory::from_initial_set(samples, 0, cfg_.k_max, cfg_.eta));
    state.skipped_augmented = skipped;

    ModelConfig mc = cfg_.model;
    mc.init_seed = mix_seed(cfg_.model.init_seed, o);
    state.params = init_params(mc);
    state.params = optimize(std::move(state.params), state.memory.snapshot(), cfg_.optimizer,
                            LayerMode::Both, &state.workspace);

    const Tensor s_first = model_forward(state.params, *features0);
    const Tensor y0 = pad_to(mask, padded_h_, padded_w_);
    state.calibration = fit_calibration(s_first, y0, 16);
    objects_.push_back(std::move(state));
  }

  frame_index_ = 0;

  OutputMask out;
  out.object_ids = ids;
  for (int id : ids) out.probabilities.push_back(object_mask_tensor(first_mask, id));
  out.labels = first_mask;
  return out;
}

OutputMask Engine::process_frame(const Tensor& image) {
  if (frame_index_ < 0) throw ArgumentError("Engine: initialize() must run first");
  if (image.height != image_h_ || image.width != image_w_)
    throw DimensionError("Engine: frame size changed mid-sequence");
  const auto t0 = std::chrono::steady_clock::now();
  ++frame_index_;

  auto features =
      std::make_shared<const Tensor>(provider_->features_for_frame(frame_index_, image));
  if (features->channels != cfg_.model.feature_channels)
    throw DimensionError("Engine: provider produced " + std::to_string(features->channels) +
                         " channels, configured for " +
                         std::to_string(cfg_.model.feature_channels));

  std::vector<Tensor> padded_probs;
  std::vector<int> ids;
  padded_probs.reserve(objects_.size());
  for (ObjectState& obj : objects_) {
    const Tensor score = model_forward(obj.params, *features);
    padded_probs.push_back(upsampled_probability(score, obj.calibration, 16));
    ids.push_back(obj.object_id);
  }

  // Aggregation is pointwise, so aggregating at padded resolution and
  // cropping equals aggregating the cropped maps.
  OutputMask padded_out = aggregate_multi_object(padded_probs, ids);

  OutputMask out;
  out.object_ids = padded_out.object_ids;
  for (const Tensor& p : padded_out.probabilities)
    out.probabilities.push_back(crop(p, image_h_, image_w_));
  out.labels = IndexMask(image_h_, image_w_);
  for (int y = 0; y < image_h_; ++y) {
    for (int x = 0; x < image_w_; ++x) out.labels.at(y, x) = padded_out.labels.at(y, x);
  }

  // The aggregated (mutually exclusive) view is what enters the memory: the
  // odds normalization re-sharpens the model's own predictions, which keeps
  // repeated self-training from washing the target out.
  for (std::size_t o = 0; o < objects_.size(); ++o) {
    objects_[o].memory.append(
        features, std::make_shared<const Tensor>(std::move(padded_out.probabilities[o])));
  }

  FrameDiagnostics diag;
  diag.frame = frame_index_;
  if (cfg_.updates_enabled && frame_index_ % cfg_.t_s == 0) {
    diag.updated = true;
    const auto u0 = std::chrono::steady_clock::now();
    for (ObjectState& obj : objects_) {
      obj.params = optimize_update(std::move(obj.params), obj.memory.snapshot(), cfg_.optimizer,
                                   &obj.workspace, [&diag](const GnStepRecord& r) {
                                     diag.update_records.push_back(r);
                                   });
    }
    diag.update_millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - u0).count();
  }
  diag.millis =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (diagnostics_) diagnostics_(diag);
  return out;
}

std::vector<OutputMask> process_sequence(const std::vector<Tensor>& frames,
                                         const IndexMask& first_mask, const EngineConfig& cfg,
                                         std::unique_ptr<FeatureProvider> provider) {
  if (frames.empty()) throw ArgumentError("process_sequence: no frames");
  if (!provider) {
    if (cfg.features.source != FeatureSource::Toy)
      throw ArgumentError("process_sequence: precomputed features need an explicit provider");
    provider = std::make_unique<ToyFeatureProvider>(cfg.features);
  }
  Engine engine(cfg, std::move(provider));
  std::vector<OutputMask> outputs;
  outputs.reserve(frames.size());
  outputs.push_back(engine.initialize(frames[0], first_mask));
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const std::string at = "frame " + std::to_string(i) + ": ";
    try {
      outputs.push_back(engine.process_frame(frames[i]));
    } catch (const DimensionError& e) {
      throw DimensionError(at + e.what());
    } catch (const DegenerateMaskError& e) {
      throw DegenerateMaskError(at + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(at + e.what());
    } catch (const std::exception& e) {
      throw ArgumentError(at + e.what());
    }
  }
  return outputs;
}

}  // namespace dvseg
