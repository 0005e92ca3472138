#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <vector>

#include "gcgan/nn/tensor.hpp"

namespace gcgan::nn {

/// Spatial geometry of a square-kernel convolution mapping (in_h, in_w) to (out_h, out_w).
/// A transposed convolution reuses the geometry of the convolution it is the adjoint of.
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int kernel = 1, stride = 1;
  int pad_top = 0, pad_left = 0;

  /// "Same" padding: out = ceil(in / stride), extra padding goes to the bottom/right.
  static ConvGeometry same(int in_h, int in_w, int kernel, int stride) {
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.kernel = kernel;
    g.stride = stride;
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const int pad_h = std::max((g.out_h - 1) * stride + kernel - in_h, 0);
    const int pad_w = std::max((g.out_w - 1) * stride + kernel - in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
  }

  int patch() const { return kernel * kernel; }
  int out_pixels() const { return out_h * out_w; }
  int in_pixels() const { return in_h * in_w; }
  bool operator==(const ConvGeometry&) const = default;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Output columns ox in [lo, hi) read input column ox * stride - pad + offset inside [0, in).
inline void valid_range(int out, int in, int stride, int pad, int offset, int& lo, int& hi) {
  const int shift = pad - offset;
  lo = shift > 0 ? (shift + stride - 1) / stride : 0;
  hi = (in + shift + stride - 1) / stride;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
}

// cols: (channels * k * k) rows of length out_h * out_w, consecutive rows `ld` apart.
template <typename T>
void im2col(const T* image, int channels, const ConvGeometry& g, T* cols, std::size_t ld) {
  const int k = g.kernel, s = g.stride;
  for (int c = 0; c < channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * g.in_pixels();
    for (int ki = 0; ki < k; ++ki) {
      int oy0, oy1;
      valid_range(g.out_h, g.in_h, s, g.pad_top, ki, oy0, oy1);
      for (int kj = 0; kj < k; ++kj) {
        int ox0, ox1;
        valid_range(g.out_w, g.in_w, s, g.pad_left, kj, ox0, ox1);
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ld;
        std::fill(row, row + static_cast<std::size_t>(oy0) * g.out_w, T(0));
        for (int oy = oy0; oy < oy1; ++oy) {
          T* dst = row + oy * g.out_w;
          const T* src = plane + (oy * s - g.pad_top + ki) * g.in_w + (ox0 * s - g.pad_left + kj);
          std::fill(dst, dst + ox0, T(0));
          if (s == 1) {
            std::copy(src, src + (ox1 - ox0), dst + ox0);
          } else {
            for (int ox = ox0; ox < ox1; ++ox, src += s) dst[ox] = *src;
          }
          std::fill(dst + ox1, dst + g.out_w, T(0));
        }
        std::fill(row + static_cast<std::size_t>(oy1) * g.out_w, row + g.out_pixels(), T(0));
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, const ConvGeometry& g, T* image, std::size_t ld) {
  const int k = g.kernel, s = g.stride;
  for (int c = 0; c < channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.in_pixels();
    for (int ki = 0; ki < k; ++ki) {
      int oy0, oy1;
      valid_range(g.out_h, g.in_h, s, g.pad_top, ki, oy0, oy1);
      for (int kj = 0; kj < k; ++kj) {
        int ox0, ox1;
        valid_range(g.out_w, g.in_w, s, g.pad_left, kj, ox0, ox1);
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ld;
        for (int oy = oy0; oy < oy1; ++oy) {
          const T* src = row + oy * g.out_w;
          T* dst = plane + (oy * s - g.pad_top + ki) * g.in_w + (ox0 * s - g.pad_left + kj);
          for (int ox = ox0; ox < ox1; ++ox, dst += s) *dst += src[ox];
        }
      }
    }
  }
}

// Samples per GEMM so the column buffer stays under ~8M elements.
inline int chunk_size(int n, std::size_t rows, std::size_t pixels) {
  const std::size_t per = std::max<std::size_t>(rows * pixels, 1);
  return static_cast<int>(std::clamp<std::size_t>((std::size_t{1} << 23) / per, 1, static_cast<std::size_t>(n)));
}

}  // namespace detail

// x: (N, C, in_h, in_w), w: (O, C, k, k) -> (N, O, out_h, out_w)
template <typename T>
Tensor<T> conv2d_kernel(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g) {
  const int n = x.dim(0), c = x.dim(1), o = w.dim(0);
  if (w.dim(1) != c || x.dim(2) != g.in_h || x.dim(3) != g.in_w || w.dim(2) != g.kernel) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  const int ckk = c * g.patch();
  const std::size_t p = g.out_pixels();
  const int chunk = detail::chunk_size(n, ckk, p);
  Tensor<T> y(Shape{n, o, g.out_h, g.out_w});
  std::unique_ptr<T[]> cols(new T[static_cast<std::size_t>(ckk) * chunk * p]);
  std::unique_ptr<T[]> out(new T[static_cast<std::size_t>(o) * chunk * p]);
  detail::ConstMapMat<T> wm(w.data(), o, ckk);
  for (int s0 = 0; s0 < n; s0 += chunk) {
    const int m = std::min(chunk, n - s0);
    const std::size_t ld = m * p;
    for (int j = 0; j < m; ++j)
      detail::im2col(x.data() + static_cast<std::size_t>(s0 + j) * c * g.in_pixels(), c, g, cols.get() + j * p, ld);
    detail::MapMat<T> om(out.get(), o, ld);
    om.noalias() = wm * detail::ConstMapMat<T>(cols.get(), ckk, ld);
    for (int j = 0; j < m; ++j)
      for (int f = 0; f < o; ++f)
        std::copy_n(out.get() + f * ld + j * p, p, y.data() + (static_cast<std::size_t>(s0 + j) * o + f) * p);
  }
  return y;
}

// Adjoint of conv2d in its input: gy (N, O, out_h, out_w), w (O, C, k, k) -> (N, C, in_h, in_w).
// This is also the forward pass of a transposed convolution.
template <typename T>
Tensor<T> conv2d_input_grad_kernel(const Tensor<T>& gy, const Tensor<T>& w, const ConvGeometry& g) {
  const int n = gy.dim(0), o = w.dim(0), c = w.dim(1);
  if (gy.dim(1) != o || gy.dim(2) != g.out_h || gy.dim(3) != g.out_w) {
    throw ShapeError("conv2d_input_grad: " + to_string(gy.shape()) + " vs weight " + to_string(w.shape()));
  }
  const int ckk = c * g.patch();
  const std::size_t p = g.out_pixels();
  const int chunk = detail::chunk_size(n, ckk, p);
  Tensor<T> gx(Shape{n, c, g.in_h, g.in_w});
  std::unique_ptr<T[]> cols(new T[static_cast<std::size_t>(ckk) * chunk * p]);
  std::unique_ptr<T[]> grads(new T[static_cast<std::size_t>(o) * chunk * p]);
  detail::ConstMapMat<T> wm(w.data(), o, ckk);
  for (int s0 = 0; s0 < n; s0 += chunk) {
    const int m = std::min(chunk, n - s0);
    const std::size_t ld = m * p;
    for (int j = 0; j < m; ++j)
      for (int f = 0; f < o; ++f)
        std::copy_n(gy.data() + (static_cast<std::size_t>(s0 + j) * o + f) * p, p, grads.get() + f * ld + j * p);
    detail::MapMat<T> cm(cols.get(), ckk, ld);
    cm.noalias() = wm.transpose() * detail::ConstMapMat<T>(grads.get(), o, ld);
    for (int j = 0; j < m; ++j)
      detail::col2im_add(cols.get() + j * p, c, g, gx.data() + static_cast<std::size_t>(s0 + j) * c * g.in_pixels(), ld);
  }
  return gx;
}

// Adjoint of conv2d in its weight: x (N, C, in_h, in_w), gy (N, O, out_h, out_w) -> (O, C, k, k).
template <typename T>
Tensor<T> conv2d_weight_grad_kernel(const Tensor<T>& x, const Tensor<T>& gy, const ConvGeometry& g) {
  const int n = x.dim(0), c = x.dim(1), o = gy.dim(1);
  if (gy.dim(0) != n) throw ShapeError("conv2d_weight_grad: batch mismatch");
  const int ckk = c * g.patch();
  const std::size_t p = g.out_pixels();
  const int chunk = detail::chunk_size(n, ckk, p);
  Tensor<T> gw(Shape{o, c, g.kernel, g.kernel});
  std::unique_ptr<T[]> cols(new T[static_cast<std::size_t>(ckk) * chunk * p]);
  std::unique_ptr<T[]> grads(new T[static_cast<std::size_t>(o) * chunk * p]);
  detail::MapMat<T> gwm(gw.data(), o, ckk);
  for (int s0 = 0; s0 < n; s0 += chunk) {
    const int m = std::min(chunk, n - s0);
    const std::size_t ld = m * p;
    for (int j = 0; j < m; ++j) {
      detail::im2col(x.data() + static_cast<std::size_t>(s0 + j) * c * g.in_pixels(), c, g, cols.get() + j * p, ld);
      for (int f = 0; f < o; ++f)
        std::copy_n(gy.data() + (static_cast<std::size_t>(s0 + j) * o + f) * p, p, grads.get() + f * ld + j * p);
    }
    gwm.noalias() += detail::ConstMapMat<T>(grads.get(), o, ld) *
                     detail::ConstMapMat<T>(cols.get(), ckk, ld).transpose();
  }
  return gw;
}

}  // namespace gcgan::nn
