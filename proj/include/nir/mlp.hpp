#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/random.hpp"
#include "nir/tape.hpp"
#include "nir/tensor.hpp"

namespace nir {

enum class Activation { kSine, kRelu };

// Output heads pin the range of a network regardless of its parameters:
// tanh_signed -> (-1,1), sigmoid_unit -> (0,1), linear passes through.
enum class OutputHead { kLinear, kTanhSigned, kSigmoidUnit };

struct MlpConfig {
  std::size_t in_dim = 2;
  std::size_t out_dim = 3;
  std::size_t hidden_layers = 4;
  std::size_t hidden_units = 256;
  Activation activation = Activation::kSine;
  double omega0 = 30.0;  // sine frequency scale, applied in every sine layer
  OutputHead output_head = OutputHead::kLinear;
  // Start as the identity transform: output weights zero, output bias set to
  // the identity parameter vector (homography (1,0,0,0,1,0,0,0) for out_dim
  // 8, zeros i.e. zero displacement otherwise).
  bool identity_bias = false;

  void validate() const {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("mlp: in/out dims must be >= 1");
    if (hidden_layers < 1 || hidden_units < 1) throw ConfigError("mlp: hidden sizes must be >= 1");
    if (activation == Activation::kSine && omega0 <= 0) throw ConfigError("mlp: omega0 must be > 0");
  }
};

// Fully connected network. Weights are {in,out} row-major so a batch
// {B,in} maps through matmul directly; immutable during forward.
template <typename T>
class Mlp {
 public:
  struct Layer {
    Tensor<T> w;  // {fan_in, fan_out}
    Tensor<T> b;  // {fan_out}
  };

  Mlp() = default;

  Mlp(const MlpConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    dims.emplace_back(cfg.in_dim, cfg.hidden_units);
    for (std::size_t i = 1; i < cfg.hidden_layers; ++i) dims.emplace_back(cfg.hidden_units, cfg.hidden_units);
    dims.emplace_back(cfg.hidden_units, cfg.out_dim);

    for (std::size_t li = 0; li < dims.size(); ++li) {
      const auto [fin, fout] = dims[li];
      Layer layer;
      layer.w = Tensor<T>({fin, fout});
      layer.b = Tensor<T>({fout});
      const bool output_layer = (li + 1 == dims.size());

      double wb;  // weight init bound
      if (cfg.activation == Activation::kSine) {
        // SIREN scheme: first layer U(-1/n, 1/n), later layers
        // U(-sqrt(6/n)/omega0, sqrt(6/n)/omega0).
        wb = (li == 0) ? 1.0 / static_cast<double>(fin)
                       : std::sqrt(6.0 / static_cast<double>(fin)) / cfg.omega0;
      } else {
        wb = std::sqrt(6.0 / static_cast<double>(fin));
      }
      const double bb = 1.0 / std::sqrt(static_cast<double>(fin));
      for (T& v : layer.w.data) v = static_cast<T>(rng.uniform(-wb, wb));
      for (T& v : layer.b.data) v = static_cast<T>(rng.uniform(-bb, bb));

      if (output_layer && cfg.identity_bias) {
        for (T& v : layer.w.data) v = T(0);
        for (T& v : layer.b.data) v = T(0);
        if (cfg.out_dim == 8) {
          layer.b.data[0] = T(1);  // h1
          layer.b.data[4] = T(1);  // h5
        }
      }
      layer.w.set_requires_grad(true);
      layer.b.set_requires_grad(true);
      layers_.push_back(std::move(layer));
    }
  }

  const MlpConfig& config() const { return cfg_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out;
    for (Layer& l : layers_) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }

  // Batched evaluation on the tape; coords {B, in_dim} -> {B, out_dim}.
  typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id coords) const {
    check_in_dim(tape.value(coords));
    auto x = coords;
    for (std::size_t li = 0; li + 1 < layers_.size(); ++li) {
      auto wp = tape.param(const_cast<Tensor<T>&>(layers_[li].w));
      auto bp = tape.param(const_cast<Tensor<T>&>(layers_[li].b));
      auto z = tape.add_bias(tape.matmul(x, wp), bp);
      x = cfg_.activation == Activation::kSine ? tape.sin(z, static_cast<T>(cfg_.omega0))
                                               : tape.relu(z);
    }
    auto wp = tape.param(const_cast<Tensor<T>&>(layers_.back().w));
    auto bp = tape.param(const_cast<Tensor<T>&>(layers_.back().b));
    auto z = tape.add_bias(tape.matmul(x, wp), bp);
    switch (cfg_.output_head) {
      case OutputHead::kTanhSigned: return tape.tanh(z);
      case OutputHead::kSigmoidUnit: return tape.sigmoid(z);
      case OutputHead::kLinear: default: return z;
    }
  }

  // Gradient-free evaluation for rendering and analysis.
  Tensor<T> forward_plain(const Tensor<T>& coords) const {
    check_in_dim(coords);
    const std::size_t b = coords.shape[0];
    Tensor<T> x = coords;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      const std::size_t fout = l.w.shape[1];
      Tensor<T> z({b, fout});
      detail::gemm(false, false, b, fout, l.w.shape[0], x.data.data(), l.w.data.data(),
                   z.data.data(), T(0));
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < fout; ++j) z.data[i * fout + j] += l.b.data[j];
      const bool output_layer = (li + 1 == layers_.size());
      if (!output_layer) {
        if (cfg_.activation == Activation::kSine) {
          const T w0 = static_cast<T>(cfg_.omega0);
          for (T& v : z.data) v = std::sin(w0 * v);
        } else {
          for (T& v : z.data) v = v > T(0) ? v : T(0);
        }
      } else {
        switch (cfg_.output_head) {
          case OutputHead::kTanhSigned:
            for (T& v : z.data) v = std::tanh(v);
            break;
          case OutputHead::kSigmoidUnit:
            for (T& v : z.data) v = T(1) / (T(1) + std::exp(-v));
            break;
          case OutputHead::kLinear:
            break;
        }
      }
      x = std::move(z);
    }
    if (!x.all_finite()) throw NumericError("mlp forward: non-finite output");
    return x;
  }

 private:
  void check_in_dim(const Tensor<T>& coords) const {
    if (coords.shape.size() != 2 || coords.shape[1] != cfg_.in_dim)
      throw DimensionError("mlp forward: coords must be {B," + std::to_string(cfg_.in_dim) + "}, got " +
                           shape_str(coords.shape));
  }

  MlpConfig cfg_;
  std::vector<Layer> layers_;
};

// ---- NIRW checkpoint format ----
// magic "NIRW", version u32, then per layer: rows u32, cols u32, row-major
// 32-bit little-endian weights, then biases (cols floats). Layers are read
// back until end of file; bit-exact round-trip for float models.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kNirwVersion = 1;

template <typename T>
void save_checkpoint(const Mlp<T>& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("NIRW", 4);
  detail::put_u32(os, kNirwVersion);
  for (const auto& layer : net.layers()) {
    detail::put_u32(os, static_cast<std::uint32_t>(layer.w.shape[0]));
    detail::put_u32(os, static_cast<std::uint32_t>(layer.w.shape[1]));
    for (T v : layer.w.data) detail::put_f32(os, static_cast<float>(v));
    for (T v : layer.b.data) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

// Loads weights into an existing network built from the same config; the
// file carries shapes only, so topology must already match.
template <typename T>
void load_checkpoint(Mlp<T>& net, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NIRW", 4) != 0) throw IoError("bad checkpoint magic: " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != kNirwVersion) throw IoError("unsupported checkpoint version in " + path);
  for (auto& layer : net.layers()) {
    const std::uint32_t rows = detail::get_u32(is);
    const std::uint32_t cols = detail::get_u32(is);
    if (!is || rows != layer.w.shape[0] || cols != layer.w.shape[1])
      throw IoError("checkpoint layer shape mismatch in " + path);
    for (T& v : layer.w.data) v = static_cast<T>(detail::get_f32(is));
    for (T& v : layer.b.data) v = static_cast<T>(detail::get_f32(is));
  }
  if (!is) throw IoError("checkpoint truncated: " + path);
  is.peek();
  if (!is.eof()) throw IoError("trailing data in checkpoint: " + path);
}

}  // namespace nir
