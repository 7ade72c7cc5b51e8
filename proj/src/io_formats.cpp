#include "dvseg/io_formats.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace dvseg {

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_all(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": short write");
}

[[noreturn]] void format_fail(const std::string& path, std::size_t offset,
                              const std::string& expected) {
  throw FormatError(path + ": at byte offset " + std::to_string(offset) + ": expected " + expected);
}

// Netpbm header token scanner: skips whitespace and '#' comments.
struct PnmScanner {
  const std::vector<std::uint8_t>& bytes;
  const std::string& path;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const std::uint8_t c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int next_int(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) format_fail(path, pos, what);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 20) format_fail(path, pos, std::string(what) + " within a sane range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

std::size_t pnm_payload_start(PnmScanner& sc, int& w, int& h) {
  w = sc.next_int("image width");
  h = sc.next_int("image height");
  const int maxval = sc.next_int("maxval 255");
  if (maxval != 255) format_fail(sc.path, sc.pos, "maxval 255");
  if (sc.pos >= sc.bytes.size() || !std::isspace(sc.bytes[sc.pos]))
    format_fail(sc.path, sc.pos, "single whitespace before payload");
  ++sc.pos;
  if (w <= 0 || h <= 0) format_fail(sc.path, 0, "positive dimensions");
  return sc.pos;
}

std::uint32_t read_u32le(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void push_u32le(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    format_fail(path, 0, "magic 'P6'");
  PnmScanner sc{bytes, path, 2};
  int w, h;
  const std::size_t start = pnm_payload_start(sc, w, h);
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - start < need)
    format_fail(path, bytes.size(), std::to_string(need) + " payload bytes");

  Tensor img(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = start + (static_cast<std::size_t>(y) * w + x) * 3;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = bytes[at + c] / 255.0;
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.channels != 3) throw DimensionError("write_ppm: image must have 3 channels");
  std::vector<std::uint8_t> bytes;
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", image.width, image.height);
  bytes.insert(bytes.end(), header, header + n);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  write_all(path, bytes);
}

IndexMask read_pgm(const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    format_fail(path, 0, "magic 'P5'");
  PnmScanner sc{bytes, path, 2};
  int w, h;
  const std::size_t start = pnm_payload_start(sc, w, h);
  const std::size_t need = static_cast<std::size_t>(w) * h;
  if (bytes.size() - start < need)
    format_fail(path, bytes.size(), std::to_string(need) + " payload bytes");

  IndexMask mask(h, w);
  std::memcpy(mask.ids.data(), bytes.data() + start, need);
  return mask;
}

void write_pgm(const std::string& path, const IndexMask& mask) {
  std::vector<std::uint8_t> bytes;
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", mask.width, mask.height);
  bytes.insert(bytes.end(), header, header + n);
  bytes.insert(bytes.end(), mask.ids.begin(), mask.ids.end());
  write_all(path, bytes);
}

Tensor read_feature_file(const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FTN1", 4) != 0)
    format_fail(path, 0, "magic 'FTN1'");
  if (bytes.size() < 24) format_fail(path, bytes.size(), "a 24-byte header");
  const std::uint32_t version = read_u32le(bytes, 4);
  if (version != 1) format_fail(path, 4, "version 1");
  const std::uint32_t channels = read_u32le(bytes, 8);
  const std::uint32_t height = read_u32le(bytes, 12);
  const std::uint32_t width = read_u32le(bytes, 16);
  const std::uint32_t stride = read_u32le(bytes, 20);
  if (stride != 16) format_fail(path, 20, "stride 16");
  if (channels == 0 || height == 0 || width == 0 || channels > (1u << 20) ||
      height > (1u << 20) || width > (1u << 20))
    format_fail(path, 8, "positive, sane tensor dimensions");
  const std::size_t count = static_cast<std::size_t>(channels) * height * width;
  if (count > (64u << 20)) format_fail(path, 8, "payload below the 64M-element cap");
  if (bytes.size() != 24 + 4 * count)
    format_fail(path, bytes.size(),
                std::to_string(4 * count) + " payload bytes after the 24-byte header");

  Tensor t(static_cast<int>(channels), static_cast<int>(height), static_cast<int>(width));
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = read_u32le(bytes, 24 + 4 * i);
    float f;
    std::memcpy(&f, &u, 4);
    if (!std::isfinite(f)) format_fail(path, 24 + 4 * i, "finite float payload");
    t.data[i] = static_cast<double>(f);
  }
  return t;
}

void write_feature_file(const std::string& path, const Tensor& features, int stride) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(24 + 4 * features.numel());
  bytes.insert(bytes.end(), {'F', 'T', 'N', '1'});
  push_u32le(bytes, 1);
  push_u32le(bytes, static_cast<std::uint32_t>(features.channels));
  push_u32le(bytes, static_cast<std::uint32_t>(features.height));
  push_u32le(bytes, static_cast<std::uint32_t>(features.width));
  push_u32le(bytes, static_cast<std::uint32_t>(stride));
  for (double v : features.data) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    push_u32le(bytes, u);
  }
  write_all(path, bytes);
}

namespace {

template <class T>
void parse_number(const std::string& path, int line_no, const std::string& key,
                  const std::string& value, std::optional<T>& out) {
  T v{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  std::from_chars_result res{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for doubles is available in libstdc++ 11
    res = std::from_chars(begin, end, v);
  } else {
    res = std::from_chars(begin, end, v);
  }
  if (res.ec != std::errc() || res.ptr != end)
    throw FormatError(path + ":" + std::to_string(line_no) + ": key '" + key +
                      "' has malformed value '" + value + "'");
  out = v;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

RunFileConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open file");
  RunFileConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty())
      throw FormatError(path + ":" + std::to_string(line_no) + ": empty value for '" + key + "'");

    if (key == "mode") cfg.mode = value;
    else if (key == "feature_source") cfg.feature_source = value;
    else if (key == "pixel_weight_rule") cfg.pixel_weight_rule = value;
    else if (key == "t_s") parse_number(path, line_no, key, value, cfg.t_s);
    else if (key == "k_max") parse_number(path, line_no, key, value, cfg.k_max);
    else if (key == "n_gn") parse_number(path, line_no, key, value, cfg.n_gn);
    else if (key == "n_cgi") parse_number(path, line_no, key, value, cfg.n_cgi);
    else if (key == "n_cg") parse_number(path, line_no, key, value, cfg.n_cg);
    else if (key == "n_cgu") parse_number(path, line_no, key, value, cfg.n_cgu);
    else if (key == "c") parse_number(path, line_no, key, value, cfg.c);
    else if (key == "toy_channels") parse_number(path, line_no, key, value, cfg.toy_channels);
    else if (key == "eta") parse_number(path, line_no, key, value, cfg.eta);
    else if (key == "kappa_min") parse_number(path, line_no, key, value, cfg.kappa_min);
    else if (key == "lambda1") parse_number(path, line_no, key, value, cfg.lambda1);
    else if (key == "lambda2") parse_number(path, line_no, key, value, cfg.lambda2);
    else if (key == "seed") parse_number(path, line_no, key, value, cfg.seed);
    else
      throw FormatError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return cfg;
}

void write_run_config(const std::string& path, const RunFileConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  auto put = [&out](const char* key, const auto& opt) {
    if (opt) {
      if constexpr (std::is_same_v<std::decay_t<decltype(*opt)>, std::string>) {
        out << key << "=" << *opt << "\n";
      } else {
        out << key << "=" << *opt << "\n";
      }
    }
  };
  put("mode", cfg.mode);
  put("feature_source", cfg.feature_source);
  put("pixel_weight_rule", cfg.pixel_weight_rule);
  put("t_s", cfg.t_s);
  put("k_max", cfg.k_max);
  put("n_gn", cfg.n_gn);
  put("n_cgi", cfg.n_cgi);
  put("n_cg", cfg.n_cg);
  put("n_cgu", cfg.n_cgu);
  put("c", cfg.c);
  put("toy_channels", cfg.toy_channels);
  put("eta", cfg.eta);
  put("kappa_min", cfg.kappa_min);
  put("lambda1", cfg.lambda1);
  put("lambda2", cfg.lambda2);
  put("seed", cfg.seed);
}

std::string frame_path(const std::string& dir, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/frames/%05d.ppm", index);
  return dir + buf;
}

std::string mask_path(const std::string& dir, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/masks/%05d.pgm", index);
  return dir + buf;
}

std::string feature_path(const std::string& dir, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/features/%05d.ft", index);
  return dir + buf;
}

int sequence_frame_count(const std::string& dir) {
  int n = 0;
  while (std::filesystem::exists(frame_path(dir, n))) ++n;
  if (n == 0) throw FormatError(dir + ": no frames/00000.ppm found");
  if (!std::filesystem::exists(mask_path(dir, 0)))
    throw FormatError(dir + ": missing first-frame annotation masks/00000.pgm");
  return n;
}

}  // namespace dvseg
