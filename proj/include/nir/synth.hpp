#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/formation.hpp"
#include "nir/imaging.hpp"
#include "nir/motion.hpp"
#include "nir/random.hpp"
#include "nir/tensor.hpp"

namespace nir {

// Ground-truth burst generators: known motion plus known layers, so
// recovery can be scored exactly. Composites go through the same formation
// kernels as training, which makes separation error attributable to
// optimization alone.

enum class SynthKind { kTranslate, kHomography, kAdditiveInterf, kFence, kRain, kOcclusion };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "translate") return SynthKind::kTranslate;
  if (s == "homography") return SynthKind::kHomography;
  if (s == "additive") return SynthKind::kAdditiveInterf;
  if (s == "fence") return SynthKind::kFence;
  if (s == "rain") return SynthKind::kRain;
  if (s == "occlusion") return SynthKind::kOcclusion;
  throw ConfigError("unknown synth kind: " + s);
}

inline const char* synth_kind_name(SynthKind k) {
  switch (k) {
    case SynthKind::kTranslate: return "translate";
    case SynthKind::kHomography: return "homography";
    case SynthKind::kAdditiveInterf: return "additive";
    case SynthKind::kFence: return "fence";
    case SynthKind::kRain: return "rain";
    case SynthKind::kOcclusion: return "occlusion";
  }
  return "?";
}

struct SynthSpec {
  SynthKind kind = SynthKind::kTranslate;
  std::size_t frames = 5;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
  // per-frame cumulative shift of the scene, in pixels
  double shift_x_px = 1.0;
  double shift_y_px = 0.0;
  // homography kind: translation cap (px) and projective term scale
  double motion_px = 2.0;
  double projective = 0.01;
  // interference parameters
  double interf_amplitude = 0.25;  // additive band amplitude (signed units)
  double interf_period_px = 9.0;   // band wavelength
  double rain_density = 0.5;       // expected streaks per 1000 px
  double fence_period_px = 14.0;   // grid pitch
  double fence_width_px = 2.5;     // bar thickness
  // coarsest value-noise lattice cell; larger cells give the texture the
  // long-range structure wide-baseline alignment needs
  double texture_cell_px = 16.0;

  void validate() const {
    if (frames < 2) throw ConfigError("synth: need at least 2 frames");
    if (height < 16 || width < 16) throw ConfigError("synth: frames must be at least 16x16");
    if (motion_px < 0 || interf_amplitude < 0 || rain_density < 0)
      throw ConfigError("synth: magnitudes must be nonnegative");
  }
};

struct GroundTruth {
  std::vector<Image> scene;         // clean scene per frame
  std::vector<Image> interference;  // interference layer per frame (may be empty)
  std::vector<Image> alpha;         // fence alpha maps (fence kind only)
  Tensor<float> motion;             // {T,2} pixel offsets or {T,8} homography params
  Image texture;                    // source texture in canonical placement
};

struct SynthResult {
  BurstSequence burst;
  GroundTruth gt;
};

// Catmull-Rom interpolation; reproduces linear ramps exactly and returns
// exact texels at integer coordinates. Requires a 2-pixel margin.
inline float bicubic_sample(const Image& tex, double x, double y, std::size_t ch) {
  if (x < 1.0 || y < 1.0 || x > static_cast<double>(tex.width - 3) ||
      y > static_cast<double>(tex.height - 3))
    throw ConfigError("bicubic_sample: coordinate outside the 2-pixel margin");
  const auto ix = static_cast<std::size_t>(std::floor(x));
  const auto iy = static_cast<std::size_t>(std::floor(y));
  const double fx = x - std::floor(x);
  const double fy = y - std::floor(y);
  auto cr = [](double p0, double p1, double p2, double p3, double t) {
    return 0.5 * (2.0 * p1 + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
  };
  double rows[4];
  for (int r = 0; r < 4; ++r) {
    const std::size_t row = iy - 1 + r;
    rows[r] = cr(tex.at(row, ix - 1, ch), tex.at(row, ix, ch), tex.at(row, ix + 1, ch),
                 tex.at(row, ix + 2, ch), fx);
  }
  return static_cast<float>(cr(rows[0], rows[1], rows[2], rows[3], fy));
}

namespace detail {

// Band-limited value noise: three octaves of smoothly interpolated lattice
// noise. Guarantees nonzero image gradients everywhere, which keeps flow
// recovery well-posed.
inline Image value_noise_texture(std::size_t height, std::size_t width, std::size_t channels,
                                 Rng& rng, double base_cell = 16.0) {
  Image out(height, width, channels);
  auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  const int octaves = 3;
  for (int o = 0; o < octaves; ++o) {
    const double cell = base_cell / static_cast<double>(1 << o);
    const double amp = 0.5 / static_cast<double>(1 << o);
    const std::size_t gw = static_cast<std::size_t>(std::ceil(width / cell)) + 2;
    const std::size_t gh = static_cast<std::size_t>(std::ceil(height / cell)) + 2;
    std::vector<double> lattice(gw * gh * channels);
    for (double& v : lattice) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double gy = static_cast<double>(i) / cell;
        const double gx = static_cast<double>(j) / cell;
        const auto y0 = static_cast<std::size_t>(gy), x0 = static_cast<std::size_t>(gx);
        const double ty = fade(gy - static_cast<double>(y0));
        const double tx = fade(gx - static_cast<double>(x0));
        for (std::size_t c = 0; c < channels; ++c) {
          auto at = [&](std::size_t yy, std::size_t xx) {
            return lattice[(yy * gw + xx) * channels + c];
          };
          const double a = at(y0, x0) + tx * (at(y0, x0 + 1) - at(y0, x0));
          const double b = at(y0 + 1, x0) + tx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
          out.at(i, j, c) += static_cast<float>(amp * (a + ty * (b - a)));
        }
      }
    }
  }
  // map roughly [-0.9, 0.9] -> [0.1, 0.9]
  for (float& v : out.data) v = 0.5f + 0.45f * v;
  return out;
}

constexpr std::size_t kMargin = 8;

// Scene frames as translated crops of one padded texture. Offsets are
// cumulative per frame; `texture` is cropped to the union footprint of all
// frames, with frame 0's origin at its top-left when shifts are positive.
struct TranslatedScene {
  Image texture;
  std::vector<Image> frames;
  Tensor<float> offsets;  // {T,2} (dx, dy) in pixels
};

inline TranslatedScene translated_scene(const SynthSpec& spec, Rng& rng) {
  const double span_x = std::fabs(spec.shift_x_px) * static_cast<double>(spec.frames - 1);
  const double span_y = std::fabs(spec.shift_y_px) * static_cast<double>(spec.frames - 1);
  const std::size_t tw = spec.width + static_cast<std::size_t>(std::ceil(span_x)) + 2 * kMargin;
  const std::size_t th = spec.height + static_cast<std::size_t>(std::ceil(span_y)) + 2 * kMargin;
  TranslatedScene out;
  out.texture = value_noise_texture(th, tw, 3, rng, spec.texture_cell_px);
  out.offsets = Tensor<float>({spec.frames, 2});
  const double base_x = kMargin + std::max(0.0, -spec.shift_x_px * (double)(spec.frames - 1));
  const double base_y = kMargin + std::max(0.0, -spec.shift_y_px * (double)(spec.frames - 1));
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const double dx = spec.shift_x_px * static_cast<double>(f);
    const double dy = spec.shift_y_px * static_cast<double>(f);
    out.offsets.at(f, 0) = static_cast<float>(dx);
    out.offsets.at(f, 1) = static_cast<float>(dy);
    Image frame(spec.height, spec.width, 3);
    for (std::size_t i = 0; i < spec.height; ++i)
      for (std::size_t j = 0; j < spec.width; ++j)
        for (std::size_t c = 0; c < 3; ++c)
          frame.at(i, j, c) = bicubic_sample(out.texture, base_x + dx + static_cast<double>(j),
                                             base_y + dy + static_cast<double>(i), c);
    out.frames.push_back(std::move(frame));
  }
  const std::size_t ux = static_cast<std::size_t>(std::floor(
      std::min(base_x, base_x + spec.shift_x_px * static_cast<double>(spec.frames - 1))));
  const std::size_t uy = static_cast<std::size_t>(std::floor(
      std::min(base_y, base_y + spec.shift_y_px * static_cast<double>(spec.frames - 1))));
  const std::size_t uw = spec.width + static_cast<std::size_t>(std::ceil(span_x));
  const std::size_t uh = spec.height + static_cast<std::size_t>(std::ceil(span_y));
  Image unioned(uh, uw, 3);
  for (std::size_t i = 0; i < uh; ++i)
    for (std::size_t j = 0; j < uw; ++j)
      for (std::size_t c = 0; c < 3; ++c) unioned.at(i, j, c) = out.texture.at(uy + i, ux + j, c);
  out.texture = std::move(unioned);
  return out;
}

}  // namespace detail

inline SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthResult out;
  out.burst.norm =
      spec.kind == SynthKind::kAdditiveInterf ? Normalization::kSigned : Normalization::kUnit;

  switch (spec.kind) {
    case SynthKind::kTranslate: {
      auto scene = detail::translated_scene(spec, rng);
      out.gt.motion = scene.offsets;
      out.gt.texture = std::move(scene.texture);
      out.gt.scene = scene.frames;
      out.burst.frames = std::move(scene.frames);
      break;
    }

    case SynthKind::kHomography: {
      // canonical domain = frame 0; later frames get translation + mild
      // projective terms, sampled from the padded texture
      const std::size_t m = detail::kMargin;
      Image tex = detail::value_noise_texture(spec.height + 2 * m, spec.width + 2 * m, 3, rng,
                                              spec.texture_cell_px);
      out.gt.motion = Tensor<float>({spec.frames, 8});
      for (std::size_t f = 0; f < spec.frames; ++f) {
        HomographyParams h = HomographyParams::identity();
        if (f > 0) {
          const double unit_x = 2.0 / static_cast<double>(spec.width);   // 1 px in normalized units
          const double unit_y = 2.0 / static_cast<double>(spec.height);
          h.h[2] = rng.uniform(-spec.motion_px, spec.motion_px) * unit_x;
          h.h[5] = rng.uniform(-spec.motion_px, spec.motion_px) * unit_y;
          h.h[6] = rng.uniform(-spec.projective, spec.projective);
          h.h[7] = rng.uniform(-spec.projective, spec.projective);
        }
        for (int i = 0; i < 8; ++i) out.gt.motion.at(f, i) = static_cast<float>(h.h[i]);
        Image frame(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < spec.height; ++i)
          for (std::size_t j = 0; j < spec.width; ++j) {
            const auto [cx, cy] = apply_homography(h, coord_x(j, spec.width), coord_y(i, spec.height));
            const double px = (cx + 1.0) * static_cast<double>(spec.width) / 2.0 - 0.5 + m;
            const double py = (cy + 1.0) * static_cast<double>(spec.height) / 2.0 - 0.5 + m;
            for (std::size_t c = 0; c < 3; ++c) frame.at(i, j, c) = bicubic_sample(tex, px, py, c);
          }
        out.gt.scene.push_back(frame);
        out.burst.frames.push_back(std::move(frame));
      }
      Image crop(spec.height, spec.width, 3);
      for (std::size_t i = 0; i < spec.height; ++i)
        for (std::size_t j = 0; j < spec.width; ++j)
          for (std::size_t c = 0; c < 3; ++c) crop.at(i, j, c) = tex.at(m + i, m + j, c);
      out.gt.texture = std::move(crop);
      break;
    }

    case SynthKind::kAdditiveInterf: {
      // signed scene in about [-0.6, 0.6] plus drifting sinusoidal color
      // bands with motion independent of the scene
      auto scene = detail::translated_scene(spec, rng);
      out.gt.motion = scene.offsets;
      out.gt.texture = std::move(scene.texture);
      const double period = spec.interf_period_px;
      const double kx = 2.0 * std::numbers::pi / period;
      const double ky = 0.35 * kx;
      const double drift = 2.0 * std::numbers::pi / static_cast<double>(spec.frames);
      const double phase0[3] = {0.0, 2.1, 4.2};
      for (std::size_t f = 0; f < spec.frames; ++f) {
        Image sc(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < sc.data.size(); ++i)
          sc.data[i] = 1.2f * (scene.frames[f].data[i] - 0.5f);  // [0.1,0.9] -> [-0.48, 0.48]
        Image interf(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < spec.height; ++i)
          for (std::size_t j = 0; j < spec.width; ++j)
            for (std::size_t c = 0; c < 3; ++c)
              interf.at(i, j, c) = static_cast<float>(
                  spec.interf_amplitude *
                  std::sin(kx * static_cast<double>(j) + ky * static_cast<double>(i) + phase0[c] +
                           drift * static_cast<double>(f)));
        Image comp(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < comp.data.size(); ++i)
          comp.data[i] = sc.data[i] + interf.data[i];
        out.gt.scene.push_back(std::move(sc));
        out.gt.interference.push_back(std::move(interf));
        out.burst.frames.push_back(std::move(comp));
      }
      break;
    }

    case SynthKind::kFence: {
      auto scene = detail::translated_scene(spec, rng);
      out.gt.motion = scene.offsets;
      out.gt.texture = std::move(scene.texture);
      Rng fence_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
      const float fence_shade = 0.15f;
      for (std::size_t f = 0; f < spec.frames; ++f) {
        // the fence drifts opposite to the scene
        const double off = -0.8 * spec.shift_x_px * static_cast<double>(f);
        Image alpha(spec.height, spec.width, 1);
        Image fence(spec.height, spec.width, 3, fence_shade);
        for (std::size_t i = 0; i < spec.height; ++i)
          for (std::size_t j = 0; j < spec.width; ++j) {
            const double px = static_cast<double>(j) + off;
            const double py = static_cast<double>(i) + off * 0.5;
            auto bar = [&](double p) {
              const double m = std::fabs(std::fmod(std::fmod(p, spec.fence_period_px) +
                                                   spec.fence_period_px, spec.fence_period_px) -
                                         spec.fence_period_px / 2.0);
              return std::clamp(1.0 - (m - spec.fence_width_px) / 1.5, 0.0, 1.0);
            };
            alpha.at(i, j, 0) = static_cast<float>(std::max(bar(px), bar(py)) * 0.95);
          }
        Image comp(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < spec.height; ++i)
          for (std::size_t j = 0; j < spec.width; ++j)
            for (std::size_t c = 0; c < 3; ++c)
              comp.at(i, j, c) = compose_fence_scalar(scene.frames[f].at(i, j, c),
                                                      fence.at(i, j, c), alpha.at(i, j, 0));
        out.gt.scene.push_back(scene.frames[f]);
        out.gt.interference.push_back(std::move(fence));
        out.gt.alpha.push_back(std::move(alpha));
        out.burst.frames.push_back(std::move(comp));
      }
      break;
    }

    case SynthKind::kRain: {
      auto scene = detail::translated_scene(spec, rng);
      out.gt.motion = scene.offsets;
      out.gt.texture = std::move(scene.texture);
      Rng streak_rng(spec.seed ^ 0xda3e39cb94b95bdbULL);
      const auto streaks =
          static_cast<std::size_t>(spec.rain_density * static_cast<double>(spec.height * spec.width) / 1000.0);
      for (std::size_t f = 0; f < spec.frames; ++f) {
        Image u(spec.height, spec.width, 1);
        for (std::size_t s = 0; s < streaks; ++s) {
          const double cx = streak_rng.uniform(2, static_cast<double>(spec.width - 2));
          const double cy = streak_rng.uniform(2, static_cast<double>(spec.height - 2));
          const double len = streak_rng.uniform(5, 11);
          const double ang = streak_rng.uniform(-0.35, 0.35);  // near vertical, fast and random
          const double a = streak_rng.uniform(0.45, 0.8);
          const double dx = std::sin(ang), dy = std::cos(ang);
          const int n = static_cast<int>(len * 2);
          for (int k = -n; k <= n; ++k) {
            const double t = len * static_cast<double>(k) / (2.0 * n);
            const auto px = static_cast<std::int64_t>(std::llround(cx + t * dx));
            const auto py = static_cast<std::int64_t>(std::llround(cy + t * dy));
            if (px < 0 || py < 0 || px >= static_cast<std::int64_t>(spec.width) ||
                py >= static_cast<std::int64_t>(spec.height))
              continue;
            auto& dst = u.at(static_cast<std::size_t>(py), static_cast<std::size_t>(px), 0);
            dst = std::max(dst, static_cast<float>(a));
          }
        }
        Image comp(spec.height, spec.width, 3);
        for (std::size_t i = 0; i < spec.height; ++i)
          for (std::size_t j = 0; j < spec.width; ++j)
            for (std::size_t c = 0; c < 3; ++c)
              comp.at(i, j, c) = compose_rain_scalar(scene.frames[f].at(i, j, c), u.at(i, j, 0));
        out.gt.scene.push_back(scene.frames[f]);
        out.gt.interference.push_back(std::move(u));
        out.burst.frames.push_back(std::move(comp));
      }
      break;
    }

    case SynthKind::kOcclusion: {
      // static textured background occluded by a moving textured square
      SynthSpec still = spec;
      still.shift_x_px = still.shift_y_px = 0;
      auto scene = detail::translated_scene(still, rng);
      out.gt.motion = scene.offsets;
      out.gt.texture = std::move(scene.texture);
      Rng sprite_rng(spec.seed ^ 0xc2b2ae3d27d4eb4fULL);
      Image sprite = detail::value_noise_texture(spec.height, spec.width, 3, sprite_rng);
      for (float& v : sprite.data) v = 1.0f - v;  // contrast against the background
      const std::size_t side = spec.height / 3;
      const double travel = static_cast<double>(spec.width - side - 8);
      for (std::size_t f = 0; f < spec.frames; ++f) {
        Image comp = scene.frames[f];
        const auto x0 = static_cast<std::size_t>(
            4 + travel * static_cast<double>(f) / static_cast<double>(spec.frames - 1));
        const std::size_t y0 = spec.height / 3;
        for (std::size_t i = 0; i < side; ++i)
          for (std::size_t j = 0; j < side; ++j)
            for (std::size_t c = 0; c < 3; ++c)
              comp.at(y0 + i, x0 + j, c) = sprite.at(y0 + i, x0 + j, c);
        out.gt.scene.push_back(comp);
        out.burst.frames.push_back(std::move(comp));
      }
      break;
    }
  }
  return out;
}

// Writes burst/NNN.png frames plus gt/ NIRT tensors, consumed by the CLI
// and by acceptance runs.
inline void write_synth(const SynthResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "burst");
  fs::create_directories(root / "gt");
  char name[32];
  for (std::size_t f = 0; f < result.burst.frames.size(); ++f) {
    std::snprintf(name, sizeof(name), "frame_%03zu.png", f);
    save_image(result.burst.frames[f], (root / "burst" / name).string(), result.burst.norm);
    std::snprintf(name, sizeof(name), "scene_%03zu.nirt", f);
    save_tensor(image_to_tensor(result.gt.scene[f]), (root / "gt" / name).string());
    if (!result.gt.interference.empty()) {
      std::snprintf(name, sizeof(name), "interf_%03zu.nirt", f);
      save_tensor(image_to_tensor(result.gt.interference[f]), (root / "gt" / name).string());
    }
    if (!result.gt.alpha.empty()) {
      std::snprintf(name, sizeof(name), "alpha_%03zu.nirt", f);
      save_tensor(image_to_tensor(result.gt.alpha[f]), (root / "gt" / name).string());
    }
  }
  save_tensor(result.gt.motion, (root / "gt" / "motion.nirt").string());
  save_tensor(image_to_tensor(result.gt.texture), (root / "gt" / "texture.nirt").string());
}

}  // namespace nir
