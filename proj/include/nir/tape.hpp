#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nir/blas.hpp"
#include "nir/errors.hpp"
#include "nir/tensor.hpp"

namespace nir {

// Reverse-mode autodiff over a dynamic tape, rebuilt each training step.
// Nodes are recorded in topological order (an op's inputs always precede
// it), so one reverse sweep visits every node exactly once. Leaves bound to
// external parameter tensors accumulate into Tensor::grad; repeated
// backward() calls without zero_grad() keep accumulating.
//
// Every forward op validates that its output is finite and throws
// NumericError otherwise.
template <typename T>
class Tape {
 public:
  using Id = std::uint32_t;

  // Leaf bound to external storage; gradients land in t.grad. The tensor
  // must outlive the tape.
  Id param(Tensor<T>& t) {
    Node n;
    n.ext = &t;
    n.needs_grad = t.requires_grad;
    return push(std::move(n), "param", /*check=*/false);
  }

  // Owning leaf without gradient (coordinates, targets, constants).
  Id constant(Tensor<T> value) {
    Node n;
    n.val = std::move(value);
    return push(std::move(n), "constant");
  }

  Id scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  const Tensor<T>& value(Id id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.val;
  }

  // Gradient of the last backward() w.r.t. an internal node. For parameter
  // leaves read Tensor::grad instead.
  const std::vector<T>& grad(Id id) const { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }

  // Recycles node storage into the pool; capacities persist across steps,
  // so a rebuilt tape of the same structure allocates nothing.
  void clear() {
    for (Node& n : nodes_) {
      if (!n.ext && n.val.data.capacity() > 0) pool_.push_back(std::move(n.val.data));
      if (n.grad.capacity() > 0) pool_.push_back(std::move(n.grad));
    }
    nodes_.clear();
  }

  // ---- elementwise binary ops (equal shapes, or either side 1-element) ----

  Id add(Id a, Id b) {
    return binary(a, b, "add", [](T x, T y) { return x + y; },
                  [](T, T, T, T g) { return std::pair<T, T>{g, g}; });
  }

  Id sub(Id a, Id b) {
    return binary(a, b, "sub", [](T x, T y) { return x - y; },
                  [](T, T, T, T g) { return std::pair<T, T>{g, -g}; });
  }

  Id mul(Id a, Id b) {
    return binary(a, b, "mul", [](T x, T y) { return x * y; },
                  [](T x, T y, T, T g) { return std::pair<T, T>{g * y, g * x}; });
  }

  Id div(Id a, Id b) {
    return binary(a, b, "div", [](T x, T y) { return x / y; },
                  [](T, T y, T out, T g) { return std::pair<T, T>{g / y, -g * out / y}; });
  }

  // ---- elementwise unary ops ----

  Id add_scalar(Id a, T c) {
    return unary(a, "add_scalar", [c](T x) { return x + c; }, [](T, T, T g) { return g; });
  }

  Id mul_scalar(Id a, T c) {
    return unary(a, "mul_scalar", [c](T x) { return x * c; }, [c](T, T, T g) { return g * c; });
  }

  // sin(freq * x); freq carries the sine-layer frequency scale. Bounded
  // maps of already-checked inputs cannot go non-finite, so they skip the
  // output scan.
  Id sin(Id a, T freq = T(1)) {
    return unary(a, "sin", [freq](T x) { return std::sin(freq * x); },
                 [freq](T x, T, T g) { return g * freq * std::cos(freq * x); }, /*check=*/false);
  }

  Id tanh(Id a) {
    return unary(a, "tanh", [](T x) { return std::tanh(x); },
                 [](T, T y, T g) { return g * (T(1) - y * y); }, /*check=*/false);
  }

  Id sigmoid(Id a) {
    return unary(a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                 [](T, T y, T g) { return g * y * (T(1) - y); }, /*check=*/false);
  }

  Id relu(Id a) {
    // Subgradient 0 at x == 0.
    return unary(a, "relu", [](T x) { return x > T(0) ? x : T(0); },
                 [](T x, T, T g) { return x > T(0) ? g : T(0); }, /*check=*/false);
  }

  Id abs(Id a) {
    // sign(0) == 0.
    return unary(a, "abs", [](T x) { return std::fabs(x); },
                 [](T x, T, T g) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); },
                 /*check=*/false);
  }

  Id square(Id a) {
    return unary(a, "square", [](T x) { return x * x; }, [](T x, T, T g) { return g * T(2) * x; });
  }

  Id sqrt(Id a) {
    return unary(a, "sqrt", [](T x) { return std::sqrt(x); },
                 [](T, T y, T g) { return g / (T(2) * y); });
  }

  Id clamp(Id a, T lo, T hi) {
    // Gradient passes only strictly inside (lo, hi), mirroring relu'(0)=0.
    return unary(a, "clamp", [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
                 [lo, hi](T x, T, T g) { return (x > lo && x < hi) ? g : T(0); },
                 /*check=*/false);
  }

  // ---- matrix ops ----

  Id matmul(Id a, Id b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0]) {
      throw DimensionError("matmul: incompatible shapes " + shape_str(ta.shape) + " * " +
                           shape_str(tb.shape));
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor<T> out = alloc({m, n});
    detail::gemm(false, false, m, n, k, ta.data.data(), tb.data.data(), out.data.data(), T(0));
    return make_op(
        std::move(out), {a, b}, "matmul", [a, b, m, k, n](Tape& tp, const Node& self) {
          const T* g = self.grad.data();
          if (tp.wants_grad(a)) {
            // gA += gC * B^T
            detail::gemm(false, true, m, k, n, g, tp.value(b).data.data(), tp.grad_buf(a), T(1));
          }
          if (tp.wants_grad(b)) {
            // gB += A^T * gC
            detail::gemm(true, false, k, n, m, tp.value(a).data.data(), g, tp.grad_buf(b), T(1));
          }
        });
  }

  // m[r,c] + bias[c] for a {R,C} matrix and {C} (or {1,C}) bias.
  Id add_bias(Id m, Id bias) {
    const Tensor<T>& tm = value(m);
    const Tensor<T>& tb = value(bias);
    tm.require_2d();
    const std::size_t r = tm.shape[0], c = tm.shape[1];
    if (tb.numel() != c) {
      throw DimensionError("add_bias: bias length " + std::to_string(tb.numel()) +
                           " vs matrix cols " + std::to_string(c));
    }
    Tensor<T> out = alloc({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = tm.data[i * c + j] + tb.data[j];
    return make_op(std::move(out), {m, bias}, "add_bias", [m, bias, r, c](Tape& tp, const Node& self) {
      const T* g = self.grad.data();
      if (tp.wants_grad(m)) {
        T* gm = tp.grad_buf(m);
        for (std::size_t i = 0; i < r * c; ++i) gm[i] += g[i];
      }
      if (tp.wants_grad(bias)) {
        T* gb = tp.grad_buf(bias);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    });
  }

  // ---- reductions to a scalar ----

  Id sum(Id a) {
    return reduce(a, "sum", [](const std::vector<T>& d) {
      T s = 0;
      for (T v : d) s += v;
      return s;
    }, [](T x, std::size_t) { (void)x; return T(1); });
  }

  Id mean(Id a) {
    return reduce(a, "mean", [](const std::vector<T>& d) {
      T s = 0;
      for (T v : d) s += v;
      return s / static_cast<T>(d.size());
    }, [](T, std::size_t n) { return T(1) / static_cast<T>(n); });
  }

  Id l1(Id a) {
    return reduce(a, "l1", [](const std::vector<T>& d) {
      T s = 0;
      for (T v : d) s += std::fabs(v);
      return s;
    }, [](T x, std::size_t) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
  }

  Id l2sq(Id a) {
    return reduce(a, "l2sq", [](const std::vector<T>& d) {
      T s = 0;
      for (T v : d) s += v * v;
      return s;
    }, [](T x, std::size_t) { return T(2) * x; });
  }

  // ---- shape ops ----

  Id rows(Id a, std::size_t r0, std::size_t r1) {
    const Tensor<T>& ta = value(a);
    ta.require_2d();
    const std::size_t c = ta.shape[1];
    if (r0 > r1 || r1 > ta.shape[0]) throw DimensionError("rows: slice out of range");
    Tensor<T> out = alloc({r1 - r0, c});
    std::copy(ta.data.begin() + r0 * c, ta.data.begin() + r1 * c, out.data.begin());
    return make_op(std::move(out), {a}, "rows", [a, r0, c](Tape& tp, const Node& self) {
      if (!tp.wants_grad(a)) return;
      T* ga = tp.grad_buf(a);
      const std::size_t n = self.grad.size();
      for (std::size_t i = 0; i < n; ++i) ga[r0 * c + i] += self.grad[i];
    }, /*check=*/false);
  }

  Id cols(Id a, std::size_t c0, std::size_t c1) {
    const Tensor<T>& ta = value(a);
    ta.require_2d();
    const std::size_t r = ta.shape[0], c = ta.shape[1], w = c1 - c0;
    if (c0 > c1 || c1 > c) throw DimensionError("cols: slice out of range");
    Tensor<T> out = alloc({r, w});
    for (std::size_t i = 0; i < r; ++i)
      std::copy(ta.data.begin() + i * c + c0, ta.data.begin() + i * c + c1, out.data.begin() + i * w);
    return make_op(std::move(out), {a}, "cols", [a, c0, c, w, r](Tape& tp, const Node& self) {
      if (!tp.wants_grad(a)) return;
      T* ga = tp.grad_buf(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += self.grad[i * w + j];
    }, /*check=*/false);
  }

  Id vcat(std::span<const Id> parts) {
    if (parts.empty()) throw DimensionError("vcat: no inputs");
    const std::size_t c = value(parts[0]).shape[1];
    std::size_t r = 0;
    for (Id p : parts) {
      value(p).require_2d();
      if (value(p).shape[1] != c) throw DimensionError("vcat: column mismatch");
      r += value(p).shape[0];
    }
    Tensor<T> out = alloc({r, c});
    std::size_t off = 0;
    for (Id p : parts) {
      const auto& d = value(p).data;
      std::copy(d.begin(), d.end(), out.data.begin() + off);
      off += d.size();
    }
    std::vector<Id> in(parts.begin(), parts.end());
    return make_op(std::move(out), in, "vcat", [in](Tape& tp, const Node& self) {
      std::size_t off = 0;
      for (Id p : in) {
        const std::size_t n = tp.value(p).numel();
        if (tp.wants_grad(p)) {
          T* gp = tp.grad_buf(p);
          for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[off + i];
        }
        off += n;
      }
    }, /*check=*/false);
  }

  Id hcat(std::span<const Id> parts) {
    if (parts.empty()) throw DimensionError("hcat: no inputs");
    const std::size_t r = value(parts[0]).shape[0];
    std::size_t c = 0;
    std::vector<std::size_t> widths;
    for (Id p : parts) {
      value(p).require_2d();
      if (value(p).shape[0] != r) throw DimensionError("hcat: row mismatch");
      widths.push_back(value(p).shape[1]);
      c += widths.back();
    }
    Tensor<T> out = alloc({r, c});
    std::size_t coff = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& d = value(parts[k]).data;
      const std::size_t w = widths[k];
      for (std::size_t i = 0; i < r; ++i)
        std::copy(d.begin() + i * w, d.begin() + (i + 1) * w, out.data.begin() + i * c + coff);
      coff += w;
    }
    std::vector<Id> in(parts.begin(), parts.end());
    return make_op(std::move(out), in, "hcat",
                   [in, widths, r, c](Tape& tp, const Node& self) {
                     std::size_t coff = 0;
                     for (std::size_t k = 0; k < in.size(); ++k) {
                       const std::size_t w = widths[k];
                       if (tp.wants_grad(in[k])) {
                         T* gp = tp.grad_buf(in[k]);
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             gp[i * w + j] += self.grad[i * c + coff + j];
                       }
                       coff += w;
                     }
                   }, /*check=*/false);
  }

  Id hcat2(Id a, Id b) {
    const Id parts[] = {a, b};
    return hcat(parts);
  }

  Id hcat3(Id a, Id b, Id c) {
    const Id parts[] = {a, b, c};
    return hcat(parts);
  }

  // out[i,:] = a[idx[i],:]. Scatter-add backward in index order.
  Id gather_rows(Id a, std::vector<std::uint32_t> idx) {
    const Tensor<T>& ta = value(a);
    ta.require_2d();
    const std::size_t c = ta.shape[1];
    for (std::uint32_t i : idx)
      if (i >= ta.shape[0]) throw DimensionError("gather_rows: index out of range");
    Tensor<T> out = alloc({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(ta.data.begin() + idx[i] * c, ta.data.begin() + (idx[i] + 1) * c,
                out.data.begin() + i * c);
    return make_op(std::move(out), {a}, "gather_rows",
                   [a, idx = std::move(idx), c](Tape& tp, const Node& self) {
                     if (!tp.wants_grad(a)) return;
                     T* ga = tp.grad_buf(a);
                     for (std::size_t i = 0; i < idx.size(); ++i)
                       for (std::size_t j = 0; j < c; ++j)
                         ga[idx[i] * c + j] += self.grad[i * c + j];
                   }, /*check=*/false);
  }

  // {R,1} -> {R,n} by repetition; backward sums across the copies.
  Id repeat_cols(Id a, std::size_t n) {
    const Tensor<T>& ta = value(a);
    ta.require_2d();
    if (ta.shape[1] != 1) throw DimensionError("repeat_cols: input must be {R,1}");
    const std::size_t r = ta.shape[0];
    Tensor<T> out = alloc({r, n});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = ta.data[i];
    return make_op(std::move(out), {a}, "repeat_cols", [a, r, n](Tape& tp, const Node& self) {
      if (!tp.wants_grad(a)) return;
      T* ga = tp.grad_buf(a);
      for (std::size_t i = 0; i < r; ++i) {
        T s = 0;
        for (std::size_t j = 0; j < n; ++j) s += self.grad[i * n + j];
        ga[i] += s;
      }
    }, /*check=*/false);
  }

  // ---- backward ----

  void backward(Id loss) {
    if (loss >= nodes_.size()) throw DimensionError("backward: unknown node");
    if (value(loss).numel() != 1) throw DimensionError("backward: loss must be scalar");
    for (Node& n : nodes_) {
      if (!n.needs_grad) continue;
      const std::size_t n_elems = n.ext ? n.ext->numel() : n.val.numel();
      if (n.grad.size() != n_elems) n.grad = take_buffer(n_elems);
      std::fill(n.grad.begin(), n.grad.end(), T(0));
    }
    Node& ln = nodes_[loss];
    if (!ln.needs_grad) return;  // nothing upstream requires gradients
    ln.grad[0] = T(1);
    for (std::size_t i = loss + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad) continue;
      if (n.back) n.back(*this, n);
      if (n.ext && n.ext->requires_grad) {
        for (std::size_t j = 0; j < n.grad.size(); ++j) n.ext->grad[j] += n.grad[j];
      }
    }
  }

 private:
  struct Node {
    Tensor<T>* ext = nullptr;
    Tensor<T> val;
    std::vector<T> grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;
  };

  bool wants_grad(Id id) const { return nodes_[id].needs_grad; }

  // Pool-backed storage. Shrinking resize performs no element
  // initialization, so recycled buffers skip the zero-fill entirely.
  std::vector<T> take_buffer(std::size_t n) {
    for (std::size_t i = pool_.size(); i-- > 0;) {
      if (pool_[i].capacity() < n) continue;
      std::vector<T> buf = std::move(pool_[i]);
      pool_[i] = std::move(pool_.back());
      pool_.pop_back();
      buf.resize(n);
      return buf;
    }
    std::vector<T> buf;
    buf.reserve(n);
    buf.resize(n);
    return buf;
  }

  Tensor<T> alloc(std::vector<std::size_t> shape) {
    const std::size_t n = Tensor<T>::numel_of(shape);
    Tensor<T> t;
    t.shape = std::move(shape);
    t.data = take_buffer(n);
    return t;
  }

  T* grad_buf(Id id) { return nodes_[id].grad.data(); }

  Id push(Node n, const char* opname, bool check = true) {
    if (check) {
      const Tensor<T>& v = n.ext ? *n.ext : n.val;
      if (!v.all_finite()) throw NumericError(std::string(opname) + ": non-finite output");
    }
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <typename Back>
  Id make_op(Tensor<T> out, std::vector<Id> inputs, const char* opname, Back&& back,
             bool check = true) {
    Node n;
    n.val = std::move(out);
    for (Id i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
    if (n.needs_grad) n.back = std::forward<Back>(back);
    return push(std::move(n), opname, check);
  }

  // Scalar reduction. fwd maps the whole buffer to one value; bwd gives the
  // per-element derivative, scaled by the incoming scalar gradient.
  template <typename FwdAll, typename BwdElem>
  Id reduce(Id a, const char* opname, FwdAll fwd, BwdElem bwd) {
    const Tensor<T>& ta = value(a);
    if (ta.numel() == 0) throw DimensionError(std::string(opname) + ": empty tensor");
    Tensor<T> out = Tensor<T>::scalar(fwd(ta.data));
    const std::size_t n = ta.numel();
    return make_op(std::move(out), {a}, opname, [a, bwd, n](Tape& tp, const Node& self) {
      if (!tp.wants_grad(a)) return;
      const Tensor<T>& ta = tp.value(a);
      T* ga = tp.grad_buf(a);
      const T g0 = self.grad[0];
      for (std::size_t i = 0; i < n; ++i) ga[i] += g0 * bwd(ta.data[i], n);
    });
  }

  template <typename Fwd, typename Bwd>
  Id unary(Id a, const char* opname, Fwd fwd, Bwd bwd, bool check = true) {
    const Tensor<T>& ta = value(a);
    Tensor<T> out = alloc(ta.shape);
    const std::size_t n = ta.numel();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = fwd(ta.data[i]);
    return make_op(std::move(out), {a}, opname, [a, bwd](Tape& tp, const Node& self) {
      if (!tp.wants_grad(a)) return;
      const Tensor<T>& ta = tp.value(a);
      const Tensor<T>& out = self.val;
      T* ga = tp.grad_buf(a);
      const std::size_t n = ta.numel();
      for (std::size_t i = 0; i < n; ++i) ga[i] += bwd(ta.data[i], out.data[i], self.grad[i]);
    }, check);
  }

  // Equal shapes, or either operand a 1-element tensor broadcast over the
  // other. bwd(x, y, out, g) -> {dx, dy} contributions.
  template <typename Fwd, typename Bwd>
  Id binary(Id a, Id b, const char* opname, Fwd fwd, Bwd bwd) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    const bool sa = ta.is_scalar(), sb = tb.is_scalar();
    if (!same_shape(ta, tb) && !sa && !sb) {
      throw DimensionError(std::string(opname) + ": incompatible shapes " + shape_str(ta.shape) +
                           " vs " + shape_str(tb.shape));
    }
    const Tensor<T>& big = sa ? tb : ta;
    Tensor<T> out = alloc(big.shape);
    const std::size_t n = big.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const T x = sa ? ta.data[0] : ta.data[i];
      const T y = sb ? tb.data[0] : tb.data[i];
      out.data[i] = fwd(x, y);
    }
    return make_op(std::move(out), {a, b}, opname, [a, b, sa, sb, bwd](Tape& tp, const Node& self) {
      const Tensor<T>& ta = tp.value(a);
      const Tensor<T>& tb = tp.value(b);
      const std::size_t n = self.val.numel();
      const bool wa = tp.wants_grad(a), wb = tp.wants_grad(b);
      T* ga = wa ? tp.grad_buf(a) : nullptr;
      T* gb = wb ? tp.grad_buf(b) : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T x = sa ? ta.data[0] : ta.data[i];
        const T y = sb ? tb.data[0] : tb.data[i];
        const auto [dx, dy] = bwd(x, y, self.val.data[i], self.grad[i]);
        if (wa) ga[sa ? 0 : i] += dx;
        if (wb) gb[sb ? 0 : i] += dy;
      }
    });
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> pool_;
};

}  // namespace nir
