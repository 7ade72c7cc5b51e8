#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "dvseg/tensor.hpp"

namespace dvseg {

enum class FeatureSource { Toy, Precomputed };

struct FeatureSpec {
  int channels = 64;
  int stride = 16;  // feature grid is 16x coarser than the image
  FeatureSource source = FeatureSource::Toy;
  std::uint64_t toy_seed = 0;
};

// Deterministic hand-crafted features on the stride-16 cell grid, standing in
// for a deep backbone. Channel layout: per-cell RGB means (3), RGB variances
// (3), oriented gradient energies at 4 orientations, normalized cell
// coordinates (2), then responses of a seeded random 3x3 filter bank over the
// 12 base channels for the remainder.
Tensor extract_toy_features_raw(const Tensor& image, const FeatureSpec& spec);

// Raw channels standardized per frame to zero mean and unit variance;
// constant channels become all-zero.
Tensor extract_toy_features(const Tensor& image, const FeatureSpec& spec);

Tensor standardize_channels(Tensor features);

// Per-frame feature access for the engine. `calls` counts frame extractions,
// which lets tests pin the one-extraction-per-frame contract.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;

  Tensor features_for_frame(int frame_index, const Tensor& image) {
    ++calls_;
    return compute(frame_index, image);
  }

  // Features for an arbitrary image (first-frame augmented samples). Not
  // available for precomputed sources.
  virtual Tensor extract(const Tensor& image) = 0;
  virtual bool can_extract_images() const = 0;
  virtual int channels() const = 0;

  int calls() const { return calls_; }

 protected:
  virtual Tensor compute(int frame_index, const Tensor& image) = 0;

 private:
  int calls_ = 0;
};

class ToyFeatureProvider : public FeatureProvider {
 public:
  explicit ToyFeatureProvider(const FeatureSpec& spec) : spec_(spec) {}
  Tensor extract(const Tensor& image) override { return extract_toy_features(image, spec_); }
  bool can_extract_images() const override { return true; }
  int channels() const override { return spec_.channels; }

 protected:
  Tensor compute(int, const Tensor& image) override { return extract_toy_features(image, spec_); }

 private:
  FeatureSpec spec_;
};

// Loads features/NNNNN.ft from a sequence directory; validates the declared
// stride and channel count against the engine configuration.
class PrecomputedFeatureProvider : public FeatureProvider {
 public:
  PrecomputedFeatureProvider(std::string sequence_dir, int expected_channels);
  Tensor extract(const Tensor&) override {
    throw ArgumentError("precomputed features cannot be extracted from arbitrary images");
  }
  bool can_extract_images() const override { return false; }
  int channels() const override { return expected_channels_; }

 protected:
  Tensor compute(int frame_index, const Tensor& image) override;

 private:
  std::string dir_;
  int expected_channels_;
};

std::unique_ptr<FeatureProvider> make_feature_provider(const FeatureSpec& spec,
                                                       const std::string& sequence_dir);

}  // namespace dvseg
