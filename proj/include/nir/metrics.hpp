#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/imaging.hpp"

namespace nir {

// Degenerate statistics (constant image fed to a correlation metric).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

struct MetricReport {
  double psnr = 0;  // dB, +inf when identical
  double ssim = 0;
  double ncc = 0;
  double si = 0;
};

namespace detail {

inline void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw DimensionError(std::string(who) + ": image shapes differ");
}

// 11x11 Gaussian window, sigma 1.5, normalized.
inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(11);
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5.0;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

// Valid-mode separable Gaussian filter of one channel plane.
inline std::vector<double> gaussian_valid(const std::vector<double>& plane, std::size_t h,
                                          std::size_t w) {
  const auto& k = ssim_kernel();
  const std::size_t ow = w - 10, oh = h - 10;
  std::vector<double> tmp(h * ow);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0;
      for (int u = 0; u < 11; ++u) s += k[u] * plane[i * w + j + u];
      tmp[i * ow + j] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0;
      for (int u = 0; u < 11; ++u) s += k[u] * tmp[(i + u) * ow + j];
      out[i * ow + j] = s;
    }
  return out;
}

inline std::vector<double> channel_plane(const Image& img, std::size_t c) {
  std::vector<double> out(img.height * img.width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i * img.channels + c];
  return out;
}

struct SsimStats {
  double ssim = 0;
  double si = 0;
};

// Shared window statistics for SSIM and its structure component.
inline SsimStats ssim_channel(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t h, std::size_t w) {
  constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2, dynamic range 1
  constexpr double kC2 = 0.03 * 0.03;
  constexpr double kC3 = kC2 / 2.0;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = gaussian_valid(a, h, w);
  const auto mu_b = gaussian_valid(b, h, w);
  const auto m_aa = gaussian_valid(aa, h, w);
  const auto m_bb = gaussian_valid(bb, h, w);
  const auto m_ab = gaussian_valid(ab, h, w);
  SsimStats s;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cab = m_ab[i] - mu_a[i] * mu_b[i];
    s.ssim += ((2 * mu_a[i] * mu_b[i] + kC1) * (2 * cab + kC2)) /
              ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
    s.si += (cab + kC3) / (std::sqrt(std::max(va, 0.0)) * std::sqrt(std::max(vb, 0.0)) + kC3);
  }
  s.ssim /= static_cast<double>(mu_a.size());
  s.si /= static_cast<double>(mu_a.size());
  return s;
}

}  // namespace detail

// 10 log10(peak^2 / MSE), MSE averaged over all pixels and channels;
// identical images return the +inf sentinel.
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  detail::require_same_shape(a, b, "psnr");
  if (!(peak > 0)) throw ConfigError("psnr: peak must be positive");
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline SsimStats ssim_all(const Image& a, const Image& b, const char* who) {
  require_same_shape(a, b, who);
  if (a.height < 11 || a.width < 11)
    throw DimensionError(std::string(who) + ": images must be at least 11x11");
  SsimStats acc;
  for (std::size_t c = 0; c < a.channels; ++c) {
    const auto s = ssim_channel(channel_plane(a, c), channel_plane(b, c), a.height, a.width);
    acc.ssim += s.ssim;
    acc.si += s.si;
  }
  acc.ssim /= static_cast<double>(a.channels);
  acc.si /= static_cast<double>(a.channels);
  return acc;
}

}  // namespace detail

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03,
// dynamic range 1; channels averaged.
inline double ssim(const Image& a, const Image& b) { return detail::ssim_all(a, b, "ssim").ssim; }

// Mean of the SSIM structure component s = (cov + C3)/(sigma_a sigma_b + C3)
// over the same windows. "Structure index" has no canonical published
// formula; this decomposition is our declared convention.
inline double si(const Image& a, const Image& b) { return detail::ssim_all(a, b, "si").si; }

// Pearson correlation of the mean-removed images, channels averaged.
inline double ncc(const Image& a, const Image& b) {
  detail::require_same_shape(a, b, "ncc");
  double acc = 0;
  for (std::size_t c = 0; c < a.channels; ++c) {
    const auto pa = detail::channel_plane(a, c);
    const auto pb = detail::channel_plane(b, c);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      ma += pa[i];
      mb += pb[i];
    }
    ma /= static_cast<double>(pa.size());
    mb /= static_cast<double>(pb.size());
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      num += (pa[i] - ma) * (pb[i] - mb);
      va += (pa[i] - ma) * (pa[i] - ma);
      vb += (pb[i] - mb) * (pb[i] - mb);
    }
    if (va <= 0 || vb <= 0) throw DegenerateInputError("ncc: constant image channel");
    acc += num / std::sqrt(va * vb);
  }
  return acc / static_cast<double>(a.channels);
}

inline MetricReport compare_images(const Image& a, const Image& b) {
  MetricReport r;
  r.psnr = psnr(a, b);
  const auto s = detail::ssim_all(a, b, "ssim");
  r.ssim = s.ssim;
  r.si = s.si;
  r.ncc = ncc(a, b);
  return r;
}

}  // namespace nir
