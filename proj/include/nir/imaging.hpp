#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/formation.hpp"
#include "nir/mlp.hpp"
#include "nir/png_io.hpp"
#include "nir/tensor.hpp"

namespace nir {

// 8-bit inputs map to (0,1) for most tasks and to signed (-1,1) for tasks
// whose streams carry signed values (moire, denoising).
enum class Normalization { kUnit, kSigned };

inline const char* normalization_name(Normalization n) {
  return n == Normalization::kUnit ? "unit" : "signed";
}

inline float normalize_u8(unsigned v, Normalization n) {
  return n == Normalization::kUnit ? static_cast<float>(v) / 255.0f
                                   : static_cast<float>(v) / 127.5f - 1.0f;
}

inline double denormalize(double v, Normalization n) {
  return n == Normalization::kUnit ? v * 255.0 : (v + 1.0) * 127.5;
}

// Round half away from zero, clamped to the displayable range.
inline unsigned char quantize_u8(double v, Normalization n) {
  const long long q = std::llround(denormalize(v, n));
  return static_cast<unsigned char>(std::clamp<long long>(q, 0, 255));
}

// Dense float image, row-major (row, col, channel).
struct Image {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return data[(row * width + col) * channels + ch];
  }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data[(row * width + col) * channels + ch];
  }
};

// Pixel-center coordinate convention: pixel (i,j) of an HxW grid sits at
// ((2j+1)/W - 1, (2i+1)/H - 1); symmetric and consistent across scales.
inline double coord_x(std::size_t col, std::size_t width) {
  return (2.0 * static_cast<double>(col) + 1.0) / static_cast<double>(width) - 1.0;
}
inline double coord_y(std::size_t row, std::size_t height) {
  return (2.0 * static_cast<double>(row) + 1.0) / static_cast<double>(height) - 1.0;
}

// Raw CFA ingestion parameters; black/white levels are camera-specific.
struct CfaLoad {
  CfaPattern pattern = CfaPattern::kRGGB;
  double black_level = 0;
  double white_level = 65535;
};

// T normalized frames with shared dimensions; the observation set.
struct BurstSequence {
  std::vector<Image> frames;
  Normalization norm = Normalization::kUnit;
  std::vector<std::string> sources;
  std::optional<CfaPattern> cfa;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].height; }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].width; }
  std::size_t channels() const { return frames.empty() ? 0 : frames[0].channels; }

  // Frame index -> normalized time in [-1, 1].
  double t_norm(std::size_t i) const {
    const std::size_t t = frame_count();
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(t - 1);
  }

  void validate() const {
    if (frames.size() < 2) throw IngestError("burst needs at least 2 frames");
    for (const Image& f : frames) {
      if (f.height != height() || f.width != width() || f.channels != channels())
        throw IngestError("burst frames disagree on dimensions");
    }
  }
};

// Decodes a directory of PNG frames, lexicographically ordered. With a CFA
// descriptor, frames are 16-bit raw mosaics normalized by the black/white
// levels; otherwise 8-bit color.
inline BurstSequence load_burst(const std::string& dir, Normalization norm,
                                std::optional<CfaLoad> cfa = std::nullopt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    throw IngestError("burst directory has " + std::to_string(files.size()) +
                      " frame(s), need at least 2: " + dir);

  BurstSequence seq;
  seq.norm = norm;
  seq.sources = files;
  if (cfa) seq.cfa = cfa->pattern;
  for (const std::string& path : files) {
    Image img;
    try {
      if (cfa) {
        const RawImage16 raw = read_png_gray16(path);
        img = Image(raw.height, raw.width, 1);
        const double scale = 1.0 / (cfa->white_level - cfa->black_level);
        for (std::size_t i = 0; i < raw.gray.size(); ++i) {
          const double v = (static_cast<double>(raw.gray[i]) - cfa->black_level) * scale;
          img.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      } else {
        const RawImage8 raw = read_png_rgb8(path);
        img = Image(raw.height, raw.width, 3);
        for (std::size_t i = 0; i < raw.rgb.size(); ++i)
          img.data[i] = normalize_u8(raw.rgb[i], norm);
      }
    } catch (const IoError& e) {
      throw IngestError(std::string("cannot decode frame ") + path + ": " + e.what());
    }
    if (!seq.frames.empty() &&
        (img.height != seq.height() || img.width != seq.width() || img.channels != seq.channels()))
      throw IngestError("frame dimensions differ at " + path);
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

// Quantizes and writes an image as 8-bit RGB; single-channel images are
// replicated to gray.
inline void save_image(const Image& img, const std::string& path, Normalization norm) {
  std::vector<unsigned char> rgb(img.height * img.width * 3);
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = img.channels == 1 ? img.data[i] : img.data[i * img.channels + std::min(c, img.channels - 1)];
      if (!std::isfinite(v)) throw NumericError("save_image: non-finite pixel in " + path);
      rgb[i * 3 + c] = quantize_u8(v, norm);
    }
  }
  write_png_rgb8(path, img.height, img.width, rgb.data());
}

// ---- NIRT raw tensor format ----
// magic "NIRT", u32 version, u32 ndim, ndim x u32 dims, then row-major
// 32-bit little-endian values.

inline constexpr std::uint32_t kNirtVersion = 1;

template <typename T>
void save_tensor(const Tensor<T>& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open tensor file for writing: " + path);
  os.write("NIRT", 4);
  detail::put_u32(os, kNirtVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
  for (T v : t.data) detail::put_f32(os, static_cast<float>(v));
  if (!os) throw IoError("tensor write failed: " + path);
}

template <typename T = float>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NIRT", 4) != 0) throw IoError("bad tensor magic in " + path);
  if (detail::get_u32(is) != kNirtVersion) throw IoError("unsupported tensor version in " + path);
  const std::uint32_t ndim = detail::get_u32(is);
  if (ndim > 8) throw IoError("implausible tensor rank in " + path);
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) d = detail::get_u32(is);
  Tensor<T> t(shape);
  for (T& v : t.data) v = static_cast<T>(detail::get_f32(is));
  if (!is) throw IoError("tensor truncated: " + path);
  return t;
}

// Image <-> tensor bridges for ground-truth storage.
inline Tensor<float> image_to_tensor(const Image& img) {
  return Tensor<float>({img.height, img.width, img.channels}, img.data);
}

inline Image tensor_to_image(const Tensor<float>& t) {
  if (t.shape.size() != 3) throw DimensionError("image tensor must be rank 3");
  Image img(t.shape[0], t.shape[1], t.shape[2]);
  img.data = t.data;
  return img;
}

}  // namespace nir
