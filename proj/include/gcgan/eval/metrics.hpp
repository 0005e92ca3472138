#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gcgan/nn/tensor.hpp"

namespace gcgan::eval {

using nn::Tensor;

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kDataRange = 2.0;
constexpr double kPsnrCap = 100.0;

namespace detail {

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable "valid" filtering of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto g = gaussian_window();
  const int oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * src[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

inline void check_pair(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw nn::ShapeError(std::string(what) + ": shape mismatch " + nn::to_string(a.shape()) + " vs " +
                         nn::to_string(b.shape()));
  }
}

}  // namespace detail

/// SSIM of two (C,H,W) images in [-1,1]: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, data
/// range 2, averaged over valid window positions and then over channels.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  detail::check_pair(a, b, "ssim");
  if (a.rank() != 3 || a.dim(1) < kSsimWindow || a.dim(2) < kSsimWindow)
    throw nn::ShapeError("ssim: expected (C,H,W) with H,W >= 11, got " + nn::to_string(a.shape()));
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const double c1 = std::pow(0.01 * kDataRange, 2), c2 = std::pow(0.03 * kDataRange, 2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  double total = 0;
  for (int c = 0; c < C; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a[c * plane + i];
      y[i] = b[c * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, H, W), my = detail::filter_valid(y, H, W);
    const auto sxx = detail::filter_valid(xx, H, W), syy = detail::filter_valid(yy, H, W),
               sxy = detail::filter_valid(xy, H, W);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / C;
}

/// 10 log10(R^2 / MSE) with R = 2, capped at 100 dB when MSE < R^2 * 1e-10.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  detail::check_pair(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  const double r2 = kDataRange * kDataRange;
  if (mse < r2 * 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(r2 / mse));
}

/// Cosine similarity; throws on a zero-norm argument.
inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw nn::ShapeError("cosine_similarity: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  if (aa == 0 || bb == 0) throw nn::NumericError("cosine_similarity: zero-norm vector");
  return ab / std::sqrt(aa * bb);
}

}  // namespace gcgan::eval
