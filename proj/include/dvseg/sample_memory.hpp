#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "dvseg/tensor.hpp"

namespace dvseg {

// One (features, label, weight) training sample. Tensors are shared and
// immutable once stored; frame features are shared between all objects'
// memories. `weight` is the normalized view (sums to 1 across the memory),
// `raw_weight` the pre-normalization recursion value. `id` is stable for the
// sample's lifetime and identifies it to optimizer-side caches.
struct MemorySample {
  std::shared_ptr<const Tensor> features;
  std::shared_ptr<const Tensor> label;  // values in [0, 1]
  double weight = 0.0;
  double raw_weight = 0.0;
  std::uint64_t id = 0;
};

// Immutable snapshot with stable insertion order; safe to read while the
// owning memory keeps mutating (tensor payloads are shared, weights copied).
using MemorySnapshot = std::vector<MemorySample>;

// Sample store with exponential recency weighting and capacity eviction.
// Raw weights follow w_i = w_{i-1} / (1 - eta) for frame-appended samples;
// the initial group collectively plays the recursion base eta, split 2:1
// between the original first frame and each augmented sample. Normalized
// weights sum to one after every mutation. When full, the minimum-weight
// sample is evicted (ties break toward the oldest).
class SampleMemory {
 public:
  SampleMemory(int capacity, double eta);

  static SampleMemory from_initial_set(
      const std::vector<std::pair<std::shared_ptr<const Tensor>, std::shared_ptr<const Tensor>>>&
          samples,
      int original_index, int capacity, double eta);

  void append(std::shared_ptr<const Tensor> features, std::shared_ptr<const Tensor> label);

  MemorySnapshot snapshot() const { return samples_; }

  int size() const { return static_cast<int>(samples_.size()); }
  int capacity() const { return capacity_; }
  double eta() const { return eta_; }
  const MemorySample& sample(int i) const { return samples_.at(i); }

 private:
  void validate_label_(const Tensor& label) const;
  void normalize_();
  void rescale_if_large_();

  std::vector<MemorySample> samples_;
  int capacity_;
  double eta_;
  double newest_raw_;  // recursion state; starts at eta (the initial group)
  std::uint64_t next_id_ = 1;
};

}  // namespace dvseg
