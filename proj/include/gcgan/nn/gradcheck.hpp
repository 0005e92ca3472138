#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gcgan/nn/autograd.hpp"

namespace gcgan::nn {

struct GradCheckResult {
  double relative_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_error = 0;
  double analytic_norm = 0;
};

/// Compares reverse-mode gradients of `loss` against central differences with step `eps`
/// over every element of `wrt`. `loss` must rebuild its graph on each call.
template <typename T>
GradCheckResult gradient_check(const std::function<Var<T>()>& loss, std::vector<Var<T>> wrt, double eps = 1e-3) {
  const auto analytic = grad(loss(), wrt);
  double diff2 = 0, a2 = 0, n2 = 0, max_abs = 0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto& values = wrt[k].mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = static_cast<T>(saved + eps);
      const double up = loss().item();
      values[i] = static_cast<T>(saved - eps);
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k].value()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      max_abs = std::max(max_abs, std::abs(a - numeric));
    }
  }
  GradCheckResult r;
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  r.relative_error = std::sqrt(diff2) / denom;
  r.max_abs_error = max_abs;
  r.analytic_norm = std::sqrt(a2);
  return r;
}

}  // namespace gcgan::nn
