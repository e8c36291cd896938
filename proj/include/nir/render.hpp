#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/imaging.hpp"
#include "nir/motion.hpp"
#include "nir/trainer.hpp"

namespace nir {

enum class Stream { kComposite, kScene, kInterference, kAlpha };

inline Stream parse_stream(const std::string& s) {
  if (s == "composite") return Stream::kComposite;
  if (s == "scene") return Stream::kScene;
  if (s == "interference") return Stream::kInterference;
  if (s == "alpha") return Stream::kAlpha;
  throw ConfigError("unknown stream: " + s);
}

// Axis-aligned coordinate window, in normalized frame or canonical units.
struct Window {
  double x0 = -1, y0 = -1, x1 = 1, y1 = 1;

  bool empty() const { return !(x1 > x0) || !(y1 > y0); }
};

// Normalization to use when writing a rendered stream: alpha-like maps are
// always unit-range, everything else follows the model's input convention.
template <typename T>
Normalization stream_normalization(const SeparationModel<T>& model, Stream stream) {
  if (stream == Stream::kAlpha) return Normalization::kUnit;
  if (stream == Stream::kInterference &&
      model.config.formation == FormationKind::kRainAchromatic)
    return Normalization::kUnit;
  return model.config.normalization;
}

namespace detail {

constexpr std::size_t kRenderChunk = 8192;

}  // namespace detail

// Evaluates the full composition on a regular grid over a window of frame
// coordinates at fixed t. The window may extend beyond [-1,1]: the scene
// stream is continuous and unbounded.
template <typename T>
Image render_region(const SeparationModel<T>& model, double t_norm, const Window& win,
                    std::size_t out_h, std::size_t out_w, Stream stream = Stream::kComposite) {
  if (out_h < 1 || out_w < 1 || win.empty()) throw ConfigError("render: empty window or resolution");
  const bool has_interf = model.interf.has_value();
  if ((stream == Stream::kInterference || stream == Stream::kAlpha) && !has_interf)
    throw ConfigError("render: model has no interference stream");
  if (stream == Stream::kAlpha && model.config.formation != FormationKind::kFenceAlpha &&
      model.config.formation != FormationKind::kRainAchromatic)
    throw ConfigError("render: task has no alpha map");

  const std::size_t out_c = [&] {
    switch (stream) {
      case Stream::kAlpha: return std::size_t(1);
      case Stream::kInterference: return model.interf->config().out_dim == 1 ? std::size_t(1) : std::size_t(3);
      default: return std::size_t(3);
    }
  }();
  Image out(out_h, out_w, out_c);

  const std::size_t n = out_h * out_w;
  for (std::size_t chunk = 0; chunk < n; chunk += detail::kRenderChunk) {
    const std::size_t m = std::min(detail::kRenderChunk, n - chunk);
    Tensor<T> coords({m, 3});
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = (chunk + k) / out_w, j = (chunk + k) % out_w;
      coords.at(k, 0) = static_cast<T>(win.x0 + (win.x1 - win.x0) * (2.0 * j + 1.0) / (2.0 * out_w));
      coords.at(k, 1) = static_cast<T>(win.y0 + (win.y1 - win.y0) * (2.0 * i + 1.0) / (2.0 * out_h));
      coords.at(k, 2) = static_cast<T>(t_norm);
    }

    Tensor<T> scene_vals;
    if (stream != Stream::kInterference && stream != Stream::kAlpha) {
      Tensor<T> canon;
      try {
        canon = canonical_coords_plain(model.config.motion, model.motion, coords,
                                       model.config.projective);
      } catch (const NearSingularError& e) {
        throw NearSingularError("render at output pixel block starting (" +
                                std::to_string(chunk / out_w) + "," + std::to_string(chunk % out_w) +
                                "): " + e.what());
      }
      scene_vals = model.scene.forward_plain(canon);
    }
    Tensor<T> interf_vals;
    if (has_interf && stream != Stream::kScene) interf_vals = model.interf->forward_plain(coords);

    for (std::size_t k = 0; k < m; ++k) {
      float* dst = out.data.data() + (chunk + k) * out_c;
      switch (stream) {
        case Stream::kScene:
          for (std::size_t c = 0; c < 3; ++c) dst[c] = static_cast<float>(scene_vals.at(k, c));
          break;
        case Stream::kInterference:
          for (std::size_t c = 0; c < out_c; ++c) dst[c] = static_cast<float>(interf_vals.at(k, c));
          break;
        case Stream::kAlpha: {
          const std::size_t ac = model.config.formation == FormationKind::kFenceAlpha ? 3 : 0;
          dst[0] = static_cast<float>(interf_vals.at(k, ac));
          break;
        }
        case Stream::kComposite: {
          T o[3], y[3];
          for (std::size_t c = 0; c < 3; ++c) o[c] = scene_vals.at(k, c);
          const T* u = has_interf ? interf_vals.data.data() + k * interf_vals.shape[1]
                                  : static_cast<const T*>(nullptr);
          compose_plain(model.config.formation, o, u, 3, y);
          for (std::size_t c = 0; c < 3; ++c) dst[c] = static_cast<float>(y[c]);
          break;
        }
      }
    }
  }
  return out;
}

template <typename T>
Image render_frame(const SeparationModel<T>& model, double t_norm, std::size_t out_h,
                   std::size_t out_w, Stream stream = Stream::kComposite) {
  return render_region(model, t_norm, Window{}, out_h, out_w, stream);
}

// Default w for canonical renders: the median fitted w over a coarse
// spatio-temporal grid (the w center is a gauge and varies with init).
template <typename T>
double median_w(const SeparationModel<T>& model) {
  if (model.config.motion != MotionKind::kFlowW) return 0.0;
  const std::size_t g = 17;
  Tensor<T> coords({g * g * model.burst_t, 3});
  std::size_t r = 0;
  for (std::size_t f = 0; f < model.burst_t; ++f)
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j, ++r) {
        coords.at(r, 0) = static_cast<T>(-1.0 + 2.0 * j / (g - 1.0));
        coords.at(r, 1) = static_cast<T>(-1.0 + 2.0 * i / (g - 1.0));
        coords.at(r, 2) = static_cast<T>(model.t_norm(f));
      }
  const Tensor<T> out = model.motion.forward_plain(coords);
  std::vector<T> ws(out.shape[0]);
  for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = out.at(i, 2);
  std::sort(ws.begin(), ws.end());
  return static_cast<double>(ws[ws.size() / 2]);
}

// Samples the scene stream directly on canonical coordinates, bypassing
// the motion transform.
template <typename T>
Image render_canonical(const SeparationModel<T>& model, const Window& win, std::size_t out_h,
                       std::size_t out_w, std::optional<double> w_fixed = std::nullopt) {
  if (out_h < 1 || out_w < 1 || win.empty()) throw ConfigError("render: empty window or resolution");
  const bool with_w = model.scene.config().in_dim == 3;
  const double wv = w_fixed.value_or(with_w ? median_w(model) : 0.0);
  Image out(out_h, out_w, 3);
  const std::size_t n = out_h * out_w;
  for (std::size_t chunk = 0; chunk < n; chunk += detail::kRenderChunk) {
    const std::size_t m = std::min(detail::kRenderChunk, n - chunk);
    Tensor<T> coords({m, with_w ? std::size_t(3) : std::size_t(2)});
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = (chunk + k) / out_w, j = (chunk + k) % out_w;
      coords.at(k, 0) = static_cast<T>(win.x0 + (win.x1 - win.x0) * (2.0 * j + 1.0) / (2.0 * out_w));
      coords.at(k, 1) = static_cast<T>(win.y0 + (win.y1 - win.y0) * (2.0 * i + 1.0) / (2.0 * out_h));
      if (with_w) coords.at(k, 2) = static_cast<T>(wv);
    }
    const Tensor<T> vals = model.scene.forward_plain(coords);
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t c = 0; c < 3; ++c)
        out.data[(chunk + k) * 3 + c] = static_cast<float>(vals.at(k, c));
  }
  return out;
}

// Union bounding box of every frame's footprint in the canonical domain:
// the natural panorama window.
template <typename T>
Window canonical_window(const SeparationModel<T>& model) {
  Window w;
  w.x0 = w.y0 = std::numeric_limits<double>::infinity();
  w.x1 = w.y1 = -std::numeric_limits<double>::infinity();
  const std::size_t border = 9;
  for (std::size_t f = 0; f < model.burst_t; ++f) {
    std::vector<std::array<double, 2>> pts;
    for (std::size_t i = 0; i < border; ++i)
      for (std::size_t j = 0; j < border; ++j) {
        if (i != 0 && i != border - 1 && j != 0 && j != border - 1) continue;
        pts.push_back({-1.0 + 2.0 * j / (border - 1.0), -1.0 + 2.0 * i / (border - 1.0)});
      }
    Tensor<T> coords({pts.size(), 3});
    for (std::size_t k = 0; k < pts.size(); ++k) {
      coords.at(k, 0) = static_cast<T>(pts[k][0]);
      coords.at(k, 1) = static_cast<T>(pts[k][1]);
      coords.at(k, 2) = static_cast<T>(model.t_norm(f));
    }
    const Tensor<T> canon = canonical_coords_plain(model.config.motion, model.motion, coords,
                                                   model.config.projective);
    for (std::size_t k = 0; k < canon.shape[0]; ++k) {
      w.x0 = std::min(w.x0, static_cast<double>(canon.at(k, 0)));
      w.x1 = std::max(w.x1, static_cast<double>(canon.at(k, 0)));
      w.y0 = std::min(w.y0, static_cast<double>(canon.at(k, 1)));
      w.y1 = std::max(w.y1, static_cast<double>(canon.at(k, 1)));
    }
  }
  return w;
}

}  // namespace nir
