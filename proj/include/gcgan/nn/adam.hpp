#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcgan/nn/autograd.hpp"

namespace gcgan::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments for one parameter tensor plus the shared step counter.
template <typename T>
struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
};

/// One bias-corrected Adam update of `params` in place; increments `state.step`.
template <typename T>
void adam_update(AdamState<T>& state, std::span<T> params, std::span<const T> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient sizes differ");
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), T(0));
    state.second_moment.assign(params.size(), T(0));
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state size differs from parameters");
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
    const double v = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
    state.first_moment[i] = static_cast<T>(m);
    state.second_moment[i] = static_cast<T>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] = static_cast<T>(params[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

/// Adam over a fixed, named list of parameters.
template <typename T>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Var<T>>> params, AdamConfig config) : params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      AdamState<T> s;
      s.config = config;
      states_.push_back(std::move(s));
    }
  }

  template <typename Store>
  static Adam over(const Store& store, AdamConfig config) {
    std::vector<std::pair<std::string, Var<T>>> p(store.parameters().begin(), store.parameters().end());
    return Adam(std::move(p), config);
  }

  std::vector<Var<T>> variables() const {
    std::vector<Var<T>> out;
    for (const auto& [n, v] : params_) out.push_back(v);
    return out;
  }

  void step(const std::vector<Var<T>>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("adam: expected one gradient per parameter");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second.mutable_value();
      const auto& g = grads[i].value();
      if (g.shape() != p.shape()) throw ShapeError("adam: gradient shape mismatch for " + params_[i].first);
      require_finite(g, "gradient of " + params_[i].first);
      adam_update(states_[i], p.values(), g.values());
    }
  }

  long steps() const { return states_.empty() ? 0 : states_.front().step; }

  /// Moments and step counter as named tensors: `<param>.m`, `<param>.v`, `step`.
  std::map<std::string, Tensor<T>> state() const {
    std::map<std::string, Tensor<T>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Shape& shape = params_[i].second.shape();
      const auto& s = states_[i];
      std::vector<T> m = s.first_moment.empty() ? std::vector<T>(numel(shape), T(0)) : s.first_moment;
      std::vector<T> v = s.second_moment.empty() ? std::vector<T>(numel(shape), T(0)) : s.second_moment;
      out.emplace(params_[i].first + ".m", Tensor<T>(shape, std::move(m)));
      out.emplace(params_[i].first + ".v", Tensor<T>(shape, std::move(v)));
    }
    out.emplace("step", Tensor<T>::scalar(static_cast<T>(steps())));
    return out;
  }

  void load_state(const std::map<std::string, Tensor<T>>& values) {
    const long step = static_cast<long>(values.at("step").item());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& s = states_[i];
      s.first_moment = values.at(params_[i].first + ".m").storage();
      s.second_moment = values.at(params_[i].first + ".v").storage();
      if (s.first_moment.size() != params_[i].second.size()) {
        throw ShapeError("optimizer state shape mismatch for " + params_[i].first);
      }
      s.step = step;
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<AdamState<T>> states_;
};

}  // namespace gcgan::nn
