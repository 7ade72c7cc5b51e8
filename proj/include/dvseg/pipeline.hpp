#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dvseg/augmentation.hpp"
#include "dvseg/feature_provider.hpp"
#include "dvseg/io_formats.hpp"
#include "dvseg/optimizer.hpp"
#include "dvseg/sample_memory.hpp"
#include "dvseg/target_model.hpp"

namespace dvseg {

enum class EngineMode { Ours, Fast, Custom };

struct EngineConfig {
  EngineMode mode = EngineMode::Ours;
  int t_s = 8;        // model update interval in frames
  double eta = 0.1;   // sample recency rate
  int k_max = 80;     // memory capacity
  OptimizerConfig optimizer;
  ModelConfig model;
  AugmentationConfig augmentation;
  FeatureSpec features;
  double binarize_threshold = 0.5;
  bool updates_enabled = true;

  // Mode presets pin the optimization schedule and the projected channel
  // count. The published c values (96 / 32) assume a 1024-channel backbone;
  // toy features scale them down to 16 / 8.
  static EngineConfig preset(EngineMode mode, FeatureSource source, int feature_channels,
                             std::uint64_t seed);
};

// Resolves a run-configuration file against the mode presets. Keys pinned by
// a preset (c, t_s, n_gn, n_cgi, n_cg, n_cgu) are rejected unless mode=custom.
// For precomputed sources the caller supplies the channel count read from the
// first feature file.
EngineConfig engine_config_from_file(const RunFileConfig& file, int precomputed_channels = 0);

struct CalibrationHead {
  double scale = 1.0;
  double offset = 0.0;
};

// Fits (scale, offset) of the output sigmoid by plain gradient descent on the
// pixel-mean binary cross-entropy, 100 iterations of step 0.1 from (1, 0).
CalibrationHead fit_calibration(const Tensor& score, const Tensor& label, int factor,
                                int iterations = 100, double step = 0.1);

// sigmoid(scale * U_factor(score) + offset) at padded label resolution.
Tensor upsampled_probability(const Tensor& score, const CalibrationHead& head, int factor);

// Same, cropped to the image size (drops the stride padding).
Tensor refine_d_only(const Tensor& score, const CalibrationHead& head, int image_h, int image_w,
                     int factor = 16);

Tensor crop(const Tensor& t, int h, int w);
Tensor pad_to(const Tensor& t, int h, int w);  // zero padding bottom/right

struct OutputMask {
  std::vector<int> object_ids;
  std::vector<Tensor> probabilities;  // aggregated, one per object, image resolution
  IndexMask labels;
};

// Softmax aggregation of per-object probability maps: per-pixel odds against
// the shared background probability prod(1 - p_i), normalized; the hard label
// is the odds argmax with ties toward the lowest index (background first).
OutputMask aggregate_multi_object(const std::vector<Tensor>& probabilities,
                                  const std::vector<int>& object_ids);

std::vector<int> mask_object_ids(const IndexMask& mask);
Tensor object_mask_tensor(const IndexMask& mask, int id);

struct ObjectState {
  int object_id = 0;
  TargetModelParams params;
  SampleMemory memory;
  CalibrationHead calibration;
  GnWorkspace workspace;
  int skipped_augmented = 0;  // degenerate augmented masks dropped at init

  ObjectState(int id, SampleMemory mem) : object_id(id), memory(std::move(mem)) {}
};

struct FrameDiagnostics {
  int frame = 0;
  bool updated = false;
  std::vector<GnStepRecord> update_records;  // one per object when updated
  double millis = 0.0;
  double update_millis = 0.0;  // time inside model updates this frame
};

// Online multi-object segmentation engine: first-frame model fitting, then
// per-frame predict / refine / extend / periodic update. Frames must be fed
// strictly in order.
class Engine {
 public:
  Engine(EngineConfig cfg, std::unique_ptr<FeatureProvider> provider);

  // First-frame setup from per-object binary masks (pairwise disjoint).
  OutputMask initialize(const Tensor& image, const IndexMask& first_mask);

  OutputMask process_frame(const Tensor& image);

  int frame_index() const { return frame_index_; }
  const EngineConfig& config() const { return cfg_; }
  const FeatureProvider& provider() const { return *provider_; }
  int object_count() const { return static_cast<int>(objects_.size()); }
  const ObjectState& object(int i) const { return objects_.at(i); }

  using DiagnosticsSink = std::function<void(const FrameDiagnostics&)>;
  void set_diagnostics(DiagnosticsSink sink) { diagnostics_ = std::move(sink); }

 private:
  EngineConfig cfg_;
  std::unique_ptr<FeatureProvider> provider_;
  std::vector<ObjectState> objects_;
  int frame_index_ = -1;
  int image_h_ = 0, image_w_ = 0;
  int padded_h_ = 0, padded_w_ = 0;
  DiagnosticsSink diagnostics_;
};

// Runs a whole in-memory sequence; output 0 is the ground-truth annotation.
std::vector<OutputMask> process_sequence(const std::vector<Tensor>& frames,
                                         const IndexMask& first_mask, const EngineConfig& cfg,
                                         std::unique_ptr<FeatureProvider> provider = nullptr);

}  // namespace dvseg
