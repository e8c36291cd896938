#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/mlp.hpp"
#include "nir/tape.hpp"
#include "nir/tensor.hpp"

namespace nir {

// Coordinate transforms into the canonical domain. The canonical frame is
// defined only up to a global transform, so recovery tests must always
// compare relative transforms (frame-to-frame), never absolute ones.

enum class MotionKind { kHomography, kFlow, kFlowW };

inline const char* motion_name(MotionKind k) {
  switch (k) {
    case MotionKind::kHomography: return "homography";
    case MotionKind::kFlow: return "flow";
    case MotionKind::kFlowW: return "flow-w";
  }
  return "?";
}

// Denominator guard for the perspective divide, in normalized coordinates.
inline constexpr double kEpsDiv = 1e-6;

// Eight free parameters h1..h8 of M = [[h1,h2,h3],[h4,h5,h6],[h7,h8,1]];
// the fixed bottom-right 1 removes the scale gauge.
struct HomographyParams {
  std::array<double, 8> h{1, 0, 0, 0, 1, 0, 0, 0};

  static HomographyParams identity() { return {}; }
};

struct FlowDisplacement {
  double dx = 0;
  double dy = 0;
  double w = 0;
  bool has_w = false;
};

// (x', y') = ((h1 x + h2 y + h3)/d, (h4 x + h5 y + h6)/d), d = h7 x + h8 y + 1.
// With projective = false the divide is skipped (pure linear action on
// (x,y,1) truncated to the first two coordinates).
inline std::pair<double, double> apply_homography(const HomographyParams& m, double x, double y,
                                                  bool projective = true) {
  const auto& h = m.h;
  const double nx = h[0] * x + h[1] * y + h[2];
  const double ny = h[3] * x + h[4] * y + h[5];
  if (!projective) return {nx, ny};
  const double d = h[6] * x + h[7] * y + 1.0;
  if (std::fabs(d) <= kEpsDiv)
    throw NearSingularError("homography denominator " + std::to_string(d) + " at (" +
                            std::to_string(x) + "," + std::to_string(y) + ")");
  return {nx / d, ny / d};
}

using Mat3 = std::array<double, 9>;  // row-major

inline Mat3 to_mat3(const HomographyParams& m) {
  return {m.h[0], m.h[1], m.h[2], m.h[3], m.h[4], m.h[5], m.h[6], m.h[7], 1.0};
}

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

inline Mat3 mat3_inverse(const Mat3& m) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::fabs(det) < 1e-12) throw NearSingularError("homography matrix is singular");
  const double inv = 1.0 / det;
  return {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
          (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
          (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
          (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
          (m[0] * m[4] - m[1] * m[3]) * inv};
}

inline HomographyParams from_mat3(const Mat3& m) {
  if (std::fabs(m[8]) < 1e-12) throw NearSingularError("cannot normalize homography: m33 ~ 0");
  HomographyParams p;
  for (int i = 0; i < 8; ++i) p.h[i] = m[i] / m[8];
  return p;
}

// Frame-t to frame-0 correspondence map M_0^-1 * M_t. The canonical gauge
// cancels, which is what makes motion recovery testable.
inline HomographyParams relative_homography(const HomographyParams& m_t, const HomographyParams& m_0) {
  return from_mat3(mat3_mul(mat3_inverse(to_mat3(m_0)), to_mat3(m_t)));
}

// ---- network-backed transforms ----

// Homography parameters for one normalized frame time.
template <typename T>
HomographyParams homography_at(const Mlp<T>& g, double t) {
  if (g.config().in_dim != 1 || g.config().out_dim != 8)
    throw DimensionError("homography net must map 1 -> 8");
  Tensor<T> in({1, 1}, {static_cast<T>(t)});
  const Tensor<T> out = g.forward_plain(in);
  HomographyParams p;
  for (int i = 0; i < 8; ++i) p.h[i] = static_cast<double>(out.data[i]);
  return p;
}

// Displacement (and w for occlusion-aware nets) at one normalized point.
template <typename T>
FlowDisplacement flow_at(const Mlp<T>& g, double x, double y, double t) {
  if (g.config().in_dim != 3 || (g.config().out_dim != 2 && g.config().out_dim != 3))
    throw DimensionError("flow net must map 3 -> 2 or 3 -> 3");
  Tensor<T> in({1, 3}, {static_cast<T>(x), static_cast<T>(y), static_cast<T>(t)});
  const Tensor<T> out = g.forward_plain(in);
  FlowDisplacement d;
  d.dx = static_cast<double>(out.data[0]);
  d.dy = static_cast<double>(out.data[1]);
  if (g.config().out_dim == 3) {
    d.w = static_cast<double>(out.data[2]);
    d.has_w = true;
  }
  return d;
}

namespace detail {

// Tape-side perspective map. coords {B,3} carries (x,y,t); h_rows {B,8} the
// per-sample homography parameters. Returns canonical {B,2}.
template <typename T>
typename Tape<T>::Id homography_coords(Tape<T>& tape, typename Tape<T>::Id coords,
                                       typename Tape<T>::Id h_rows, bool projective) {
  auto x = tape.cols(coords, 0, 1);
  auto y = tape.cols(coords, 1, 2);
  auto h = [&](std::size_t i) { return tape.cols(h_rows, i, i + 1); };
  auto nx = tape.add(tape.add(tape.mul(h(0), x), tape.mul(h(1), y)), h(2));
  auto ny = tape.add(tape.add(tape.mul(h(3), x), tape.mul(h(4), y)), h(5));
  if (!projective) return tape.hcat2(nx, ny);
  auto den = tape.add_scalar(tape.add(tape.mul(h(6), x), tape.mul(h(7), y)), T(1));
  for (const T d : tape.value(den).data) {
    if (std::fabs(static_cast<double>(d)) <= kEpsDiv)
      throw NearSingularError("homography denominator below epsilon during batch transform");
  }
  return tape.hcat2(tape.div(nx, den), tape.div(ny, den));
}

// Canonical coordinates from a flow net's output. with_w appends the extra
// canonical dimension, giving {B,3} instead of {B,2}.
template <typename T>
typename Tape<T>::Id flow_coords(Tape<T>& tape, typename Tape<T>::Id coords,
                                 typename Tape<T>::Id g_out, bool with_w) {
  auto x = tape.cols(coords, 0, 1);
  auto y = tape.cols(coords, 1, 2);
  auto cx = tape.add(x, tape.cols(g_out, 0, 1));
  auto cy = tape.add(y, tape.cols(g_out, 1, 2));
  if (!with_w) return tape.hcat2(cx, cy);
  return tape.hcat3(cx, cy, tape.cols(g_out, 2, 3));
}

}  // namespace detail

// Dispatcher over the three transform families. frame_of_row/unique_t are
// used only by the homography path (the net takes t alone, so it runs once
// per distinct frame time and the result is gathered per sample).
template <typename T>
typename Tape<T>::Id canonical_coords(Tape<T>& tape, MotionKind kind, const Mlp<T>& g,
                                      typename Tape<T>::Id coords,
                                      const std::vector<std::uint32_t>& frame_of_row,
                                      const Tensor<T>& unique_t, bool projective = true) {
  switch (kind) {
    case MotionKind::kHomography: {
      auto t_id = tape.constant(unique_t);
      auto h_frames = g.forward(tape, t_id);
      auto h_rows = tape.gather_rows(h_frames, frame_of_row);
      return detail::homography_coords(tape, coords, h_rows, projective);
    }
    case MotionKind::kFlow: {
      auto g_out = g.forward(tape, coords);
      return detail::flow_coords(tape, coords, g_out, false);
    }
    case MotionKind::kFlowW: {
      auto g_out = g.forward(tape, coords);
      return detail::flow_coords(tape, coords, g_out, true);
    }
  }
  throw ConfigError("unknown motion kind");
}

// Gradient-free canonical transform for rendering.
template <typename T>
Tensor<T> canonical_coords_plain(MotionKind kind, const Mlp<T>& g, const Tensor<T>& coords,
                                 bool projective = true) {
  const std::size_t b = coords.shape[0];
  if (kind == MotionKind::kHomography) {
    Tensor<T> out({b, 2});
    // One homography per distinct t; burst renders use a single t per call,
    // so cache the last row.
    double cached_t = std::numeric_limits<double>::quiet_NaN();
    HomographyParams m;
    for (std::size_t i = 0; i < b; ++i) {
      const double x = coords.data[i * 3], y = coords.data[i * 3 + 1], t = coords.data[i * 3 + 2];
      if (t != cached_t) {
        m = homography_at(g, t);
        cached_t = t;
      }
      const auto [cx, cy] = apply_homography(m, x, y, projective);
      out.data[i * 2] = static_cast<T>(cx);
      out.data[i * 2 + 1] = static_cast<T>(cy);
    }
    return out;
  }
  const bool with_w = (kind == MotionKind::kFlowW);
  const Tensor<T> g_out = g.forward_plain(coords);
  Tensor<T> out({b, with_w ? std::size_t(3) : std::size_t(2)});
  const std::size_t oc = out.shape[1];
  for (std::size_t i = 0; i < b; ++i) {
    out.data[i * oc] = coords.data[i * 3] + g_out.data[i * g_out.shape[1]];
    out.data[i * oc + 1] = coords.data[i * 3 + 1] + g_out.data[i * g_out.shape[1] + 1];
    if (with_w) out.data[i * oc + 2] = g_out.data[i * g_out.shape[1] + 2];
  }
  return out;
}

}  // namespace nir
