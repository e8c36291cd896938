#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "nir/errors.hpp"
#include "nir/tape.hpp"
#include "nir/tensor.hpp"

namespace nir {

// How scene stream O and interference stream U combine into the predicted
// frame. One kind per fitting job.
enum class FormationKind {
  kAdditive,        // I = O + U (signed streams for moire)
  kFenceAlpha,      // I = (1-a) O + a U
  kRainAchromatic,  // I = (1-U) O + U * 1, U a single channel
  kSceneOnly,       // I = O
  kBayerMasked,     // scene-only against CFA-masked targets
};

inline const char* formation_name(FormationKind k) {
  switch (k) {
    case FormationKind::kAdditive: return "additive";
    case FormationKind::kFenceAlpha: return "fence_alpha";
    case FormationKind::kRainAchromatic: return "rain_achromatic";
    case FormationKind::kSceneOnly: return "scene_only";
    case FormationKind::kBayerMasked: return "bayer_masked";
  }
  return "?";
}

// Scalar kernels. The synthetic generators compose ground truth through
// these same expressions (same operation order), so generated composites
// match the training-side formation bit for bit.
template <typename T>
T compose_fence_scalar(T o, T u, T a) {
  return (T(1) - a) * o + a * u;
}

template <typename T>
T compose_rain_scalar(T o, T u) {
  return (T(1) - u) * o + u;
}

// Tape-side formation. O is {B,3}; U is {B,3} (additive, fence) or {B,1}
// (rain); alpha is {B,1} and only used by fence_alpha. No clamping here:
// values are clamped to the displayable range at render time only.
template <typename T>
typename Tape<T>::Id compose(Tape<T>& tape, FormationKind kind, typename Tape<T>::Id scene,
                             std::optional<typename Tape<T>::Id> interf = std::nullopt,
                             std::optional<typename Tape<T>::Id> alpha = std::nullopt) {
  const Tensor<T>& o = tape.value(scene);
  o.require_2d();
  const std::size_t c = o.shape[1];
  auto require_interf = [&](std::size_t channels) {
    if (!interf) throw DimensionError("compose: interference stream required");
    const Tensor<T>& u = tape.value(*interf);
    u.require_2d();
    if (u.shape[0] != o.shape[0] || u.shape[1] != channels)
      throw DimensionError("compose: interference must be {B," + std::to_string(channels) + "}, got " +
                           shape_str(u.shape));
  };
  switch (kind) {
    case FormationKind::kSceneOnly:
    case FormationKind::kBayerMasked:
      return scene;
    case FormationKind::kAdditive:
      require_interf(c);
      return tape.add(scene, *interf);
    case FormationKind::kFenceAlpha: {
      require_interf(c);
      if (!alpha) throw DimensionError("compose: fence_alpha requires an alpha map");
      const Tensor<T>& a = tape.value(*alpha);
      if (a.shape.size() != 2 || a.shape[0] != o.shape[0] || a.shape[1] != 1)
        throw DimensionError("compose: alpha must be {B,1}");
      auto am = tape.repeat_cols(tape.sub(tape.scalar(T(1)), *alpha), c);
      auto af = tape.repeat_cols(*alpha, c);
      return tape.add(tape.mul(am, scene), tape.mul(af, *interf));
    }
    case FormationKind::kRainAchromatic: {
      require_interf(1);
      auto um = tape.repeat_cols(tape.sub(tape.scalar(T(1)), *interf), c);
      auto uf = tape.repeat_cols(*interf, c);
      return tape.add(tape.mul(um, scene), uf);
    }
  }
  throw ConfigError("unknown formation kind");
}

// Plain composition of one sample, used by rendering.
template <typename T>
void compose_plain(FormationKind kind, const T* o, const T* u, std::size_t c, T* out) {
  switch (kind) {
    case FormationKind::kSceneOnly:
    case FormationKind::kBayerMasked:
      for (std::size_t i = 0; i < c; ++i) out[i] = o[i];
      return;
    case FormationKind::kAdditive:
      for (std::size_t i = 0; i < c; ++i) out[i] = o[i] + u[i];
      return;
    case FormationKind::kFenceAlpha: {
      const T a = u[c];  // interference net emits (color..., alpha)
      for (std::size_t i = 0; i < c; ++i) out[i] = compose_fence_scalar(o[i], u[i], a);
      return;
    }
    case FormationKind::kRainAchromatic:
      for (std::size_t i = 0; i < c; ++i) out[i] = compose_rain_scalar(o[i], u[0]);
      return;
  }
}

// ---- Bayer color filter arrays ----

enum class CfaPattern { kRGGB, kBGGR, kGRBG, kGBRG };

inline CfaPattern parse_cfa(const std::string& s) {
  if (s == "RGGB") return CfaPattern::kRGGB;
  if (s == "BGGR") return CfaPattern::kBGGR;
  if (s == "GRBG") return CfaPattern::kGRBG;
  if (s == "GBRG") return CfaPattern::kGBRG;
  throw ConfigError("unknown CFA pattern: " + s);
}

inline const char* cfa_name(CfaPattern p) {
  switch (p) {
    case CfaPattern::kRGGB: return "RGGB";
    case CfaPattern::kBGGR: return "BGGR";
    case CfaPattern::kGRBG: return "GRBG";
    case CfaPattern::kGBRG: return "GBRG";
  }
  return "?";
}

// Channel sampled at integer pixel (row, col): 0=R, 1=G, 2=B.
inline int cfa_channel_at(CfaPattern p, std::int64_t row, std::int64_t col) {
  const int r = static_cast<int>(((row % 2) + 2) % 2);
  const int c = static_cast<int>(((col % 2) + 2) % 2);
  switch (p) {
    case CfaPattern::kRGGB: return r == 0 ? (c == 0 ? 0 : 1) : (c == 0 ? 1 : 2);
    case CfaPattern::kBGGR: return r == 0 ? (c == 0 ? 2 : 1) : (c == 0 ? 1 : 0);
    case CfaPattern::kGRBG: return r == 0 ? (c == 0 ? 1 : 0) : (c == 0 ? 2 : 1);
    case CfaPattern::kGBRG: return r == 0 ? (c == 0 ? 1 : 2) : (c == 0 ? 0 : 1);
  }
  return 1;
}

// Zeroes the two channels not sampled at each position. Used only inside
// the reconstruction loss for raw bursts; the mask carries no gradient.
template <typename T>
typename Tape<T>::Id bayer_mask(Tape<T>& tape, typename Tape<T>::Id pred, CfaPattern pattern,
                                const std::vector<std::pair<std::int64_t, std::int64_t>>& positions) {
  const Tensor<T>& p = tape.value(pred);
  if (p.shape.size() != 2 || p.shape[1] != 3 || p.shape[0] != positions.size())
    throw DimensionError("bayer_mask: pred must be {B,3} matching positions");
  Tensor<T> mask({positions.size(), 3}, T(0));
  for (std::size_t i = 0; i < positions.size(); ++i)
    mask.data[i * 3 + cfa_channel_at(pattern, positions[i].first, positions[i].second)] = T(1);
  return tape.mul(pred, tape.constant(std::move(mask)));
}

}  // namespace nir
