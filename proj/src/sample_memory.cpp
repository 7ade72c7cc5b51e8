#include "dvseg/sample_memory.hpp"

#include <cmath>

namespace dvseg {

SampleMemory::SampleMemory(int capacity, double eta)
    : capacity_(capacity), eta_(eta), newest_raw_(eta) {
  if (capacity < 1) throw ArgumentError("SampleMemory: capacity must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ArgumentError("SampleMemory: eta must be in (0, 1)");
}

SampleMemory SampleMemory::from_initial_set(
    const std::vector<std::pair<std::shared_ptr<const Tensor>, std::shared_ptr<const Tensor>>>&
        samples,
    int original_index, int capacity, double eta) {
  if (samples.empty()) throw ArgumentError("from_initial_set: empty sample list");
  if (original_index < 0 || original_index >= static_cast<int>(samples.size()))
    throw ArgumentError("from_initial_set: original_index out of range");
  if (capacity < static_cast<int>(samples.size()))
    throw ArgumentError("from_initial_set: capacity smaller than initial set");

  SampleMemory mem(capacity, eta);
  // The group's total raw weight is eta (the recursion base), split so the
  // original sample carries twice the weight of each augmented one.
  const int n = static_cast<int>(samples.size());
  const double unit = eta / (n + 1);
  for (int i = 0; i < n; ++i) {
    if (!samples[i].first || !samples[i].second)
      throw ArgumentError("from_initial_set: null tensor");
    if (i > 0) {
      if (samples[i].second->height != samples[0].second->height ||
          samples[i].second->width != samples[0].second->width)
        throw DimensionError("from_initial_set: label size mismatch within initial set");
    }
    mem.validate_label_(*samples[i].second);
    MemorySample s;
    s.features = samples[i].first;
    s.label = samples[i].second;
    s.raw_weight = (i == original_index) ? 2.0 * unit : unit;
    s.id = mem.next_id_++;
    mem.samples_.push_back(std::move(s));
  }
  mem.normalize_();
  return mem;
}

void SampleMemory::validate_label_(const Tensor& label) const {
  for (double v : label.data) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ArgumentError("SampleMemory: label values must lie in [0, 1]");
  }
}

void SampleMemory::append(std::shared_ptr<const Tensor> features,
                          std::shared_ptr<const Tensor> label) {
  if (!features || !label) throw ArgumentError("append: null tensor");
  if (!samples_.empty()) {
    if (label->height != samples_.front().label->height ||
        label->width != samples_.front().label->width)
      throw DimensionError("append: label size mismatch with existing samples");
    if (features->channels != samples_.front().features->channels)
      throw DimensionError("append: feature channel mismatch with existing samples");
  }
  validate_label_(*label);

  if (static_cast<int>(samples_.size()) >= capacity_) {
    std::size_t victim = 0;
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (samples_[i].raw_weight < samples_[victim].raw_weight) victim = i;
    }
    samples_.erase(samples_.begin() + victim);
  }

  MemorySample s;
  s.features = std::move(features);
  s.label = std::move(label);
  newest_raw_ = newest_raw_ / (1.0 - eta_);
  s.raw_weight = newest_raw_;
  s.id = next_id_++;
  samples_.push_back(std::move(s));

  rescale_if_large_();
  normalize_();
}

void SampleMemory::normalize_() {
  double total = 0.0;
  for (const MemorySample& s : samples_) total += s.raw_weight;
  for (MemorySample& s : samples_) s.weight = s.raw_weight / total;
}

void SampleMemory::rescale_if_large_() {
  // Raw weights grow geometrically; fold in an exact power-of-two factor
  // before they approach overflow. Ratios are preserved bit for bit.
  if (newest_raw_ < 0x1p512) return;
  const double f = 0x1p-512;
  newest_raw_ *= f;
  for (MemorySample& s : samples_) s.raw_weight *= f;
}

}  // namespace dvseg
