#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "nir/errors.hpp"

namespace nir {

// Dense row-major n-d array. Carrier of all numeric state; compute precision
// is the template parameter (float for training, double for verification).
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // same length as data when grads are tracked

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  Tensor(std::vector<std::size_t> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel_of(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape product " + std::to_string(numel_of(shape)));
    }
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<T> values) {
    return Tensor({r, c}, std::move(values));
  }

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const {
    require_2d();
    return shape[0];
  }
  std::size_t cols() const {
    require_2d();
    return shape[1];
  }

  T& at(std::size_t r, std::size_t c) {
    require_2d();
    return data[r * shape[1] + c];
  }
  const T& at(std::size_t r, std::size_t c) const {
    require_2d();
    return data[r * shape[1] + c];
  }

  void require_2d() const {
    if (shape.size() != 2) throw DimensionError("expected a 2-d tensor");
  }

  void set_requires_grad(bool on) {
    requires_grad = on;
    if (on) grad.assign(data.size(), T(0));
    else grad.clear();
  }

  void zero_grad() {
    if (requires_grad) grad.assign(data.size(), T(0));
  }

  bool all_finite() const {
    // |v| <= max is false for NaN and Inf; integer OR-reduction vectorizes
    unsigned bad = 0;
    for (const T v : data) bad |= !(std::fabs(v) <= std::numeric_limits<T>::max());
    return bad == 0;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace nir
