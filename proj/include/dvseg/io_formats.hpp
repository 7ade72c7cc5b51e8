#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvseg/tensor.hpp"

namespace dvseg {

// Object-id mask: 0 = background, i = object i.
struct IndexMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> ids;

  IndexMask() = default;
  IndexMask(int h, int w) : height(h), width(w), ids(static_cast<std::size_t>(h) * w, 0) {}
  std::uint8_t& at(int y, int x) { return ids[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

// P6 binary PPM, 8-bit, values mapped to [0, 1] doubles.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

// P5 binary PGM, 8-bit, raw gray value = object id.
IndexMask read_pgm(const std::string& path);
void write_pgm(const std::string& path, const IndexMask& mask);

// Raw feature tensor file: magic "FTN1", five little-endian u32 fields
// (version=1, channels, height, width, stride=16), then float32 payload in
// (channel, row, column) order.
Tensor read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const Tensor& features, int stride = 16);

// Flat key=value run configuration ('#' starts a comment). Unknown keys are
// errors; values are validated when the engine configuration is resolved.
struct RunFileConfig {
  std::optional<std::string> mode;               // ours | fast | custom
  std::optional<std::string> feature_source;     // toy | precomputed
  std::optional<std::string> pixel_weight_rule;  // balanced_max | literal_min
  std::optional<int> t_s, k_max, n_gn, n_cgi, n_cg, n_cgu, c, toy_channels;
  std::optional<double> eta, kappa_min, lambda1, lambda2;
  std::optional<std::uint64_t> seed;
};

RunFileConfig read_run_config(const std::string& path);
void write_run_config(const std::string& path, const RunFileConfig& cfg);

// Sequence directory layout: frames/NNNNN.ppm, masks/NNNNN.pgm, optional
// features/NNNNN.ft, frame indices contiguous from 0.
std::string frame_path(const std::string& dir, int index);
std::string mask_path(const std::string& dir, int index);
std::string feature_path(const std::string& dir, int index);
int sequence_frame_count(const std::string& dir);

}  // namespace dvseg
