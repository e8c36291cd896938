#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "nir/errors.hpp"
#include "nir/mlp.hpp"
#include "nir/tape.hpp"
#include "nir/tensor.hpp"

namespace nir {

// All loss reductions are per-sample means over the batch with channel sums
// kept inside, so the paper's weight ratios are preserved independent of
// batch size.

struct LossWeights {
  double interf = 0;
  double tvflow = 0;
  double excl = 0;
  double w = 0;  // optional L1 pull of the occlusion dimension toward 0

  void validate() const {
    for (double v : {interf, tvflow, excl, w}) {
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
    }
  }
};

struct LossReport {
  std::uint64_t step = 0;
  double total = 0;
  double recon = 0;
  double interf = 0;
  double tvflow = 0;
  double excl = 0;
  double w_l1 = 0;
  double wall_ms = 0;
};

// Finite-difference steps for coordinate Jacobians, in normalized units:
// one pixel spatially, one frame interval temporally.
struct FdSteps {
  double hx = 0;
  double hy = 0;
  double ht = 0;

  static FdSteps for_burst(std::size_t height, std::size_t width, std::size_t frames) {
    FdSteps s;
    s.hx = s.hy = 2.0 / static_cast<double>(std::max(height, width));
    s.ht = 2.0 / static_cast<double>(std::max<std::size_t>(frames - 1, 1));
    return s;
  }
};

// Mean over the batch of the squared pixel error.
template <typename T>
typename Tape<T>::Id recon_loss(Tape<T>& tape, typename Tape<T>::Id pred,
                                typename Tape<T>::Id target) {
  const Tensor<T>& p = tape.value(pred);
  if (!same_shape(p, tape.value(target)))
    throw DimensionError("recon_loss: pred/target shape mismatch");
  const T inv_b = T(1) / static_cast<T>(p.shape[0]);
  return tape.mul_scalar(tape.l2sq(tape.sub(pred, target)), inv_b);
}

// Mean over the batch of the per-sample L1 norm of the interference stream.
template <typename T>
typename Tape<T>::Id interference_loss(Tape<T>& tape, typename Tape<T>::Id interf) {
  const T inv_b = T(1) / static_cast<T>(tape.value(interf).shape[0]);
  return tape.mul_scalar(tape.l1(interf), inv_b);
}

// Mean |w| of the occlusion dimension.
template <typename T>
typename Tape<T>::Id w_l1_loss(Tape<T>& tape, typename Tape<T>::Id w) {
  return tape.mean(tape.abs(w));
}

// One forward-difference Jacobian column: (f(p + h e_c) - f(p)) / h.
template <typename T>
typename Tape<T>::Id fd_column(Tape<T>& tape, typename Tape<T>::Id base,
                               typename Tape<T>::Id shifted, double h) {
  return tape.mul_scalar(tape.sub(shifted, base), static_cast<T>(1.0 / h));
}

// TV regularizer on the flow net's Jacobian, from precomputed evaluations
// at the base and coordinate-shifted points. Mean over the batch of the L1
// norm of all Jacobian entries; gradients flow through every evaluation.
template <typename T>
typename Tape<T>::Id tv_flow_from_diffs(Tape<T>& tape, typename Tape<T>::Id g_base,
                                        typename Tape<T>::Id g_dx, typename Tape<T>::Id g_dy,
                                        typename Tape<T>::Id g_dt, const FdSteps& steps) {
  const T inv_b = T(1) / static_cast<T>(tape.value(g_base).shape[0]);
  auto jx = fd_column(tape, g_base, g_dx, steps.hx);
  auto jy = fd_column(tape, g_base, g_dy, steps.hy);
  auto jt = fd_column(tape, g_base, g_dt, steps.ht);
  auto total = tape.add(tape.add(tape.l1(jx), tape.l1(jy)), tape.l1(jt));
  return tape.mul_scalar(total, inv_b);
}

// Convenience form that evaluates the flow net itself at the four stencil
// points. coords is {B,3} of (x,y,t).
template <typename T>
typename Tape<T>::Id tv_flow_loss(Tape<T>& tape, const Mlp<T>& g, const Tensor<T>& coords,
                                  const FdSteps& steps) {
  if (g.config().out_dim != 2 && g.config().out_dim != 3)
    throw DimensionError("tv_flow_loss: network is not a flow net");
  const std::size_t b = coords.shape[0];
  Tensor<T> all({4 * b, 3});
  for (int block = 0; block < 4; ++block) {
    for (std::size_t i = 0; i < b; ++i) {
      T x = coords.data[i * 3], y = coords.data[i * 3 + 1], t = coords.data[i * 3 + 2];
      if (block == 1) x += static_cast<T>(steps.hx);
      if (block == 2) y += static_cast<T>(steps.hy);
      if (block == 3) t += static_cast<T>(steps.ht);
      T* row = all.data.data() + (block * b + i) * 3;
      row[0] = x;
      row[1] = y;
      row[2] = t;
    }
  }
  auto out = g.forward(tape, tape.constant(std::move(all)));
  auto base = tape.rows(out, 0, b);
  auto dx = tape.rows(out, b, 2 * b);
  auto dy = tape.rows(out, 2 * b, 3 * b);
  auto dt = tape.rows(out, 3 * b, 4 * b);
  return tv_flow_from_diffs(tape, base, dx, dy, dt, steps);
}

// Decorrelates the spatial gradient structure of the two streams:
// mean over batch and entries of (tanh(N1 J1) * tanh(N2 J2))^2 with the
// reciprocal normalization N1 = sqrt(mean|J2| / mean|J1|), N2 = 1/N1.
// J1/J2 are {B, 2C} finite-difference gradients at shared sample points.
template <typename T>
typename Tape<T>::Id exclusion_loss(Tape<T>& tape, typename Tape<T>::Id j1,
                                    typename Tape<T>::Id j2) {
  constexpr T kFloor = T(1e-6);
  auto m1 = tape.add_scalar(tape.mean(tape.abs(j1)), kFloor);
  auto m2 = tape.add_scalar(tape.mean(tape.abs(j2)), kFloor);
  auto n1 = tape.sqrt(tape.div(m2, m1));
  auto n2 = tape.div(tape.scalar(T(1)), n1);
  auto phi = tape.mul(tape.tanh(tape.mul(j1, n1)), tape.tanh(tape.mul(j2, n2)));
  return tape.mean(tape.square(phi));
}

// Term ids present on the tape for the current step.
template <typename T>
struct LossTerms {
  using Id = typename Tape<T>::Id;
  Id recon;
  std::optional<Id> interf;
  std::optional<Id> tvflow;
  std::optional<Id> excl;
  std::optional<Id> w_l1;
};

// Weighted sum per the task objective; fills in the per-term report.
template <typename T>
typename Tape<T>::Id total_loss(Tape<T>& tape, const LossTerms<T>& terms, const LossWeights& weights,
                                LossReport& report) {
  weights.validate();
  auto scalar_of = [&](typename Tape<T>::Id id) {
    return static_cast<double>(tape.value(id).data[0]);
  };
  auto total = terms.recon;
  report = LossReport{};
  report.recon = scalar_of(terms.recon);
  if (terms.interf && weights.interf > 0) {
    report.interf = scalar_of(*terms.interf);
    total = tape.add(total, tape.mul_scalar(*terms.interf, static_cast<T>(weights.interf)));
  }
  if (terms.tvflow && weights.tvflow > 0) {
    report.tvflow = scalar_of(*terms.tvflow);
    total = tape.add(total, tape.mul_scalar(*terms.tvflow, static_cast<T>(weights.tvflow)));
  }
  if (terms.excl && weights.excl > 0) {
    report.excl = scalar_of(*terms.excl);
    total = tape.add(total, tape.mul_scalar(*terms.excl, static_cast<T>(weights.excl)));
  }
  if (terms.w_l1 && weights.w > 0) {
    report.w_l1 = scalar_of(*terms.w_l1);
    total = tape.add(total, tape.mul_scalar(*terms.w_l1, static_cast<T>(weights.w)));
  }
  report.total = scalar_of(total);
  return total;
}

}  // namespace nir
