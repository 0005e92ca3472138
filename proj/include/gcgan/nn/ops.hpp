#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <type_traits>
#include <vector>

#include "gcgan/nn/autograd.hpp"
#include "gcgan/nn/conv_kernels.hpp"
#include "gcgan/nn/tensor.hpp"

// Differentiable operations. Every backward is expressed through other operations in
// this file, so gradients can be differentiated again (needed by the gradient penalty).

namespace gcgan::nn {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides of `s` viewed at the rank of `out`, zero along broadcast dims.
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  const std::size_t r = out.size();
  if (s.size() > r) throw ShapeError("cannot broadcast " + to_string(s) + " to " + to_string(out));
  std::vector<std::size_t> strides(r, 0);
  std::size_t stride = 1;
  for (std::size_t i = r; i-- > 0;) {
    const std::size_t j = i + s.size();
    if (j < r) break;
    const int d = s[j - r];
    if (d != out[i] && d != 1) throw ShapeError("cannot broadcast " + to_string(s) + " to " + to_string(out));
    strides[i] = d == 1 ? 0 : stride;
    stride *= static_cast<std::size_t>(d);
  }
  return strides;
}

// Walks every element of `out_shape`, calling f(out_index, offset_a, offset_b) one inner
// row at a time as f(out_offset, a_offset, b_offset, row_len, a_stride, b_stride).
template <typename F>
void for_each_row(const Shape& out_shape, const std::vector<std::size_t>& sa,
                  const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t r = out_shape.size();
  if (r == 0) {
    f(0, 0, 0, 1, 0, 0);
    return;
  }
  const std::size_t inner = static_cast<std::size_t>(out_shape[r - 1]);
  const std::size_t rows = numel(out_shape) / inner;
  std::vector<int> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t row = 0; row < rows; ++row) {
    f(row * inner, oa, ob, inner, sa[r - 1], sb[r - 1]);
    for (std::size_t d = r - 1; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * (out_shape[d] - 1);
      ob -= sb[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
}

template <typename T, typename F>
Tensor<T> binary_kernel(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const Shape shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(shape);
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for_each_row(shape, sa, sb,
               [&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t da, std::size_t db) {
                 for (std::size_t i = 0; i < n; ++i) po[o + i] = f(pa[ia + i * da], pb[ib + i * db]);
               });
  return out;
}

template <typename T, typename F>
Tensor<T> unary_kernel(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T>
using Accum = std::conditional_t<std::is_same_v<T, float>, double, T>;

// Sums `x` down to `target`, which must broadcast to x's shape.
template <typename T>
Tensor<T> sum_to_kernel(const Tensor<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  const auto so = broadcast_strides(target, x.shape());
  std::vector<Accum<T>> acc(numel(target), Accum<T>(0));
  const std::vector<std::size_t> unit(x.shape().size(), 0);
  const T* px = x.data();
  for_each_row(x.shape(), so, unit,
               [&](std::size_t xo, std::size_t oo, std::size_t, std::size_t n, std::size_t d, std::size_t) {
                 if (d == 0) {
                   Accum<T> s = 0;
                   for (std::size_t i = 0; i < n; ++i) s += px[xo + i];
                   acc[oo] += s;
                 } else {
                   for (std::size_t i = 0; i < n; ++i) acc[oo + i * d] += px[xo + i];
                 }
               });
  Tensor<T> out(target);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
Tensor<T> broadcast_to_kernel(const Tensor<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  Tensor<T> out(target);
  const auto sx = broadcast_strides(x.shape(), target);
  const std::vector<std::size_t> unit(target.size(), 0);
  const T* px = x.data();
  T* po = out.data();
  for_each_row(target, sx, unit,
               [&](std::size_t o, std::size_t ix, std::size_t, std::size_t n, std::size_t d, std::size_t) {
                 for (std::size_t i = 0; i < n; ++i) po[o + i] = px[ix + i * d];
               });
  return out;
}

inline Shape reduced_shape(const Shape& s, const std::vector<int>& axes) {
  Shape out = s;
  for (int a : axes) {
    const int ax = a < 0 ? a + static_cast<int>(s.size()) : a;
    if (ax < 0 || ax >= static_cast<int>(s.size())) throw ShapeError("reduction axis out of range");
    out[ax] = 1;
  }
  return out;
}

inline Shape drop_unit_axes(const Shape& s, const std::vector<int>& axes) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    bool reduced = false;
    for (int a : axes) reduced = reduced || (a < 0 ? a + static_cast<int>(s.size()) : a) == i;
    if (!reduced) out.push_back(s[i]);
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t));
}

template <typename T>
Var<T> ones_like(const Var<T>& a) {
  return Var<T>(Tensor<T>(a.shape(), T(1)));
}

template <typename T>
Var<T> zeros_like(const Var<T>& a) {
  return Var<T>(Tensor<T>(a.shape(), T(0)));
}

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& target);
template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& target);

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  return Var<T>::make(detail::sum_to_kernel(x.value(), target), {x},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{broadcast_to(g, in[0].shape())};
                      },
                      "sum_to");
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  return Var<T>::make(detail::broadcast_to_kernel(x.value(), target), {x},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{sum_to(g, in[0].shape())};
                      },
                      "broadcast_to");
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return Var<T>::make(detail::unary_kernel(a.value(), [](T v) { return -v; }), {a},
                      [](const std::vector<Var<T>>&, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{neg(g)};
                      },
                      "neg");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make(detail::binary_kernel(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = sum_to(g, in[0].shape());
                        if (in[1].requires_grad()) out[1] = sum_to(g, in[1].shape());
                        return out;
                      },
                      "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make(detail::binary_kernel(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = sum_to(g, in[0].shape());
                        if (in[1].requires_grad()) out[1] = sum_to(neg(g), in[1].shape());
                        return out;
                      },
                      "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make(detail::binary_kernel(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = sum_to(mul(g, in[1]), in[0].shape());
                        if (in[1].requires_grad()) out[1] = sum_to(mul(g, in[0]), in[1].shape());
                        return out;
                      },
                      "mul");
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return Var<T>::make(detail::unary_kernel(a.value(), [c](T v) { return v * c; }), {a},
                      [c](const std::vector<Var<T>>&, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{scale(g, c)};
                      },
                      "scale");
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return Var<T>::make(detail::unary_kernel(a.value(), [c](T v) { return v + c; }), {a},
                      [](const std::vector<Var<T>>&, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{g};
                      },
                      "add_scalar");
}

template <typename T>
Var<T> pow_scalar(const Var<T>& a, T p) {
  return Var<T>::make(detail::unary_kernel(a.value(), [p](T v) { return std::pow(v, p); }), {a},
                      [p](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        if (p == T(1)) return std::vector<Var<T>>{g};
                        if (p == T(2)) return std::vector<Var<T>>{mul(g, scale(in[0], T(2)))};
                        return std::vector<Var<T>>{mul(g, scale(pow_scalar(in[0], p - T(1)), p))};
                      },
                      "pow");
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return mul(a, a);
}

/// Saturates one ulp inside (-1, 1) so the open bound survives float rounding.
template <typename T>
Var<T> tanh(const Var<T>& a) {
  static constexpr T top = 1 - std::numeric_limits<T>::epsilon() / 2;
  return Var<T>::make(detail::unary_kernel(a.value(), [](T v) { return std::clamp(std::tanh(v), -top, top); }), {a},
                      [](const std::vector<Var<T>>&, const Var<T>& y, const Var<T>& g) {
                        return std::vector<Var<T>>{mul(g, add_scalar(neg(mul(y, y)), T(1)))};
                      },
                      "tanh");
}

/// Multiplies by a mask computed from the forward input; the mask is a constant, so the
/// op is piecewise linear and its second derivative vanishes.
template <typename T, typename Slope>
Var<T> piecewise_linear(const Var<T>& a, Slope slope, const char* name) {
  Tensor<T> mask = detail::unary_kernel(a.value(), slope);
  Tensor<T> out = detail::binary_kernel(a.value(), mask, [](T x, T m) { return x * m; });
  return Var<T>::make(std::move(out), {a},
                      [mask = std::move(mask)](const std::vector<Var<T>>&, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{mul(g, constant(mask))};
                      },
                      name);
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return piecewise_linear(a, [](T v) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return piecewise_linear(a, [slope](T v) { return v > T(0) ? T(1) : slope; }, "leaky_relu");
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return piecewise_linear(a, [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); }, "abs");
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return Var<T>::make(a.value().reshaped(std::move(shape)), {a},
                      [](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{reshape(g, in[0].shape())};
                      },
                      "reshape");
}

/// Sum over `axes`; keeps reduced axes as size 1 when `keepdim`.
template <typename T>
Var<T> sum(const Var<T>& a, const std::vector<int>& axes, bool keepdim = false) {
  const Shape kept = detail::reduced_shape(a.shape(), axes);
  Var<T> s = sum_to(a, kept);
  return keepdim ? s : reshape(s, detail::drop_unit_axes(a.shape(), axes));
}

template <typename T>
Var<T> mean(const Var<T>& a, const std::vector<int>& axes, bool keepdim = false) {
  std::size_t count = 1;
  for (int ax : axes) count *= a.dim(ax);
  return scale(sum(a, axes, keepdim), T(1) / static_cast<T>(count));
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  return reshape(sum_to(a, Shape(a.shape().size(), 1)), Shape{});
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

/// 2-D matrix product op(a) * op(b), op = optional transpose.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false) {
  if (a.shape().size() != 2 || b.shape().size() != 2) throw ShapeError("matmul expects rank-2 operands");
  const int m = trans_a ? a.dim(1) : a.dim(0);
  const int ka = trans_a ? a.dim(0) : a.dim(1);
  const int kb = trans_b ? b.dim(1) : b.dim(0);
  const int n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul inner dims differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  detail::ConstMapMat<T> am(a.value().data(), a.dim(0), a.dim(1));
  detail::ConstMapMat<T> bm(b.value().data(), b.dim(0), b.dim(1));
  detail::MapMat<T> om(out.data(), m, n);
  if (!trans_a && !trans_b) om.noalias() = am * bm;
  else if (trans_a && !trans_b) om.noalias() = am.transpose() * bm;
  else if (!trans_a && trans_b) om.noalias() = am * bm.transpose();
  else om.noalias() = am.transpose() * bm.transpose();
  return Var<T>::make(std::move(out), {a, b},
                      [trans_a, trans_b](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        std::vector<Var<T>> out(2);
                        const Var<T>& A = in[0];
                        const Var<T>& B = in[1];
                        if (A.requires_grad()) {
                          out[0] = trans_a ? matmul(B, g, trans_b, true) : matmul(g, B, false, !trans_b);
                        }
                        if (B.requires_grad()) {
                          out[1] = trans_b ? matmul(g, A, true, trans_a) : matmul(A, g, !trans_a, false);
                        }
                        return out;
                      },
                      "matmul");
}

template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, const ConvGeometry& g);
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, const ConvGeometry& g);

/// Cross-correlation, x (N,C,H,W) * w (O,C,k,k) -> (N,O,out_h,out_w).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const ConvGeometry& g) {
  return Var<T>::make(conv2d_kernel(x.value(), w.value(), g), {x, w},
                      [g](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& gy) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = conv2d_input_grad(gy, in[1], g);
                        if (in[1].requires_grad()) out[1] = conv2d_weight_grad(in[0], gy, g);
                        return out;
                      },
                      "conv2d");
}

/// Adjoint of conv2d in its input; the forward pass of a transposed convolution.
template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, const ConvGeometry& g) {
  return Var<T>::make(conv2d_input_grad_kernel(gy.value(), w.value(), g), {gy, w},
                      [g](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& up) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = conv2d(up, in[1], g);
                        if (in[1].requires_grad()) out[1] = conv2d_weight_grad(up, in[0], g);
                        return out;
                      },
                      "conv2d_input_grad");
}

template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, const ConvGeometry& g) {
  return Var<T>::make(conv2d_weight_grad_kernel(x.value(), gy.value(), g), {x, gy},
                      [g](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& up) {
                        std::vector<Var<T>> out(2);
                        if (in[0].requires_grad()) out[0] = conv2d_input_grad(in[1], up, g);
                        if (in[1].requires_grad()) out[1] = conv2d(in[0], up, g);
                        return out;
                      },
                      "conv2d_weight_grad");
}

namespace detail {

struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.axis = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int start, int length);

/// Inverse of slice: places `x` at `start` along `axis` inside zeros of `full` shape.
template <typename T>
Var<T> embed_slice(const Var<T>& x, const Shape& full, int axis, int start) {
  const auto fs = detail::split_at(full, axis);
  const auto xs = detail::split_at(x.shape(), axis);
  Tensor<T> out(full);
  for (std::size_t o = 0; o < xs.outer; ++o) {
    const T* src = x.value().data() + o * xs.axis * xs.inner;
    T* dst = out.data() + (o * fs.axis + start) * fs.inner;
    std::copy(src, src + xs.axis * xs.inner, dst);
  }
  const int length = x.dim(axis);
  return Var<T>::make(std::move(out), {x},
                      [axis, start, length](const std::vector<Var<T>>&, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{slice(g, axis, start, length)};
                      },
                      "embed_slice");
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int start, int length) {
  const auto xs = detail::split_at(x.shape(), axis);
  if (start < 0 || length <= 0 || start + length > static_cast<int>(xs.axis)) {
    throw ShapeError("slice out of range on " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  Tensor<T> out(shape);
  for (std::size_t o = 0; o < xs.outer; ++o) {
    const T* src = x.value().data() + (o * xs.axis + start) * xs.inner;
    std::copy(src, src + length * xs.inner, out.data() + o * length * xs.inner);
  }
  return Var<T>::make(std::move(out), {x},
                      [axis, start](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{embed_slice(g, in[0].shape(), axis, start)};
                      },
                      "slice");
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of nothing");
  Shape shape = xs[0].shape();
  int total = 0;
  for (const auto& x : xs) {
    Shape s = x.shape();
    if (s.size() != shape.size()) throw ShapeError("concat rank mismatch");
    total += s[axis];
    s[axis] = shape[axis];
    if (s != shape) throw ShapeError("concat shape mismatch " + to_string(x.shape()));
  }
  shape[axis] = total;
  const auto fs = detail::split_at(shape, axis);
  Tensor<T> out(shape);
  int offset = 0;
  for (const auto& x : xs) {
    const auto xsp = detail::split_at(x.shape(), axis);
    for (std::size_t o = 0; o < xsp.outer; ++o) {
      const T* src = x.value().data() + o * xsp.axis * xsp.inner;
      std::copy(src, src + xsp.axis * xsp.inner, out.data() + (o * fs.axis + offset) * fs.inner);
    }
    offset += static_cast<int>(xsp.axis);
  }
  return Var<T>::make(std::move(out), xs,
                      [axis](const std::vector<Var<T>>& in, const Var<T>&, const Var<T>& g) {
                        std::vector<Var<T>> out(in.size());
                        int off = 0;
                        for (std::size_t i = 0; i < in.size(); ++i) {
                          const int len = in[i].dim(axis);
                          if (in[i].requires_grad()) out[i] = slice(g, axis, off, len);
                          off += len;
                        }
                        return out;
                      },
                      "concat");
}

template <typename T>
void require_finite(const Var<T>& v, const std::string& what) {
  require_finite(v.value(), what);
}

}  // namespace gcgan::nn
