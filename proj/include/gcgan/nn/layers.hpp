#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gcgan/nn/ops.hpp"

namespace gcgan::nn {

enum class Mode { train, infer };

/// Named parameters (trainable) and buffers (running statistics) of one or more networks.
/// Handles share storage with the layers that registered them.
template <typename T>
class ParameterStore {
 public:
  Var<T> add_parameter(const std::string& name, Tensor<T> init) {
    if (params_.count(name) || buffers_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    Var<T> v(std::move(init), true);
    params_.emplace(name, v);
    return v;
  }

  Var<T> add_buffer(const std::string& name, Tensor<T> init) {
    if (params_.count(name) || buffers_.count(name)) throw std::invalid_argument("duplicate buffer " + name);
    Var<T> v(std::move(init), false);
    buffers_.emplace(name, v);
    return v;
  }

  const std::map<std::string, Var<T>>& parameters() const { return params_; }
  const std::map<std::string, Var<T>>& buffers() const { return buffers_; }

  std::vector<Var<T>> parameter_list() const {
    std::vector<Var<T>> out;
    for (const auto& [name, v] : params_) out.push_back(v);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& [name, v] : params_) out.push_back(name);
    return out;
  }

  /// Parameters and buffers in one name-sorted map.
  std::map<std::string, Tensor<T>> state() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, v] : params_) out.emplace(name, v.value());
    for (const auto& [name, v] : buffers_) out.emplace(name, v.value());
    return out;
  }

  /// Overwrites every registered tensor from `values`; all names must be present.
  void load_state(const std::map<std::string, Tensor<T>>& values) {
    auto assign = [&](const std::string& name, Var<T> v) {
      auto it = values.find(name);
      if (it == values.end()) throw std::runtime_error("checkpoint is missing tensor " + name);
      if (it->second.shape() != v.shape()) {
        throw ShapeError("checkpoint tensor " + name + " has shape " + to_string(it->second.shape()) +
                         ", expected " + to_string(v.shape()));
      }
      v.mutable_value() = it->second;
    };
    for (auto& [name, v] : params_) assign(name, v);
    for (auto& [name, v] : buffers_) assign(name, v);
  }

 private:
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Var<T>> buffers_;
};

/// Truncated normal (cut at two standard deviations) with zero mean.
template <typename T>
Tensor<T> truncated_normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<T> t(shape);
  for (auto& v : t.values()) {
    double s;
    do {
      s = dist(rng);
    } while (std::abs(s) > 2.0);
    v = static_cast<T>(s * stddev);
  }
  return t;
}

constexpr double kInitStddev = 0.02;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var<T> forward(const Var<T>& x, Mode mode) = 0;
  /// Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& in) const = 0;
};

template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(ParameterStore<T>& store, const std::string& name, int in, int out, std::mt19937_64& rng)
      : in_(in), out_(out) {
    weight_ = store.add_parameter(name + ".weight", truncated_normal<T>({in, out}, kInitStddev, rng));
    bias_ = store.add_parameter(name + ".bias", Tensor<T>({1, out}));
  }

  Var<T> forward(const Var<T>& x, Mode) override {
    Var<T> flat = x.shape().size() == 2 ? x : reshape(x, Shape{x.dim(0), static_cast<int>(x.size() / x.dim(0))});
    if (flat.dim(1) != in_) {
      throw ShapeError("fully-connected layer expects " + std::to_string(in_) + " features, got " +
                       to_string(x.shape()));
    }
    return add(matmul(flat, weight_), bias_);
  }

  Shape output_shape(const Shape&) const override { return {out_}; }

 private:
  int in_, out_;
  Var<T> weight_, bias_;
};

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(ParameterStore<T>& store, const std::string& name, int in_channels, int filters, int kernel, int stride,
         std::mt19937_64& rng)
      : in_(in_channels), filters_(filters), kernel_(kernel), stride_(stride) {
    weight_ = store.add_parameter(name + ".weight",
                                  truncated_normal<T>({filters, in_channels, kernel, kernel}, kInitStddev, rng));
    bias_ = store.add_parameter(name + ".bias", Tensor<T>({1, filters, 1, 1}));
  }

  Var<T> forward(const Var<T>& x, Mode) override {
    if (x.shape().size() != 4 || x.dim(1) != in_) {
      throw ShapeError("conv expects (N," + std::to_string(in_) + ",H,W), got " + to_string(x.shape()));
    }
    const auto g = ConvGeometry::same(x.dim(2), x.dim(3), kernel_, stride_);
    return add(conv2d(x, weight_, g), bias_);
  }

  Shape output_shape(const Shape& in) const override {
    const auto g = ConvGeometry::same(in[1], in[2], kernel_, stride_);
    return {filters_, g.out_h, g.out_w};
  }

 private:
  int in_, filters_, kernel_, stride_;
  Var<T> weight_, bias_;
};

/// Transposed convolution; the exact adjoint of a "same"-padded Conv2d, so stride s maps
/// n to s*n.
template <typename T>
class Deconv2d : public Layer<T> {
 public:
  Deconv2d(ParameterStore<T>& store, const std::string& name, int in_channels, int filters, int kernel, int stride,
           std::mt19937_64& rng)
      : in_(in_channels), filters_(filters), kernel_(kernel), stride_(stride) {
    weight_ = store.add_parameter(name + ".weight",
                                  truncated_normal<T>({in_channels, filters, kernel, kernel}, kInitStddev, rng));
    bias_ = store.add_parameter(name + ".bias", Tensor<T>({1, filters, 1, 1}));
  }

  Var<T> forward(const Var<T>& x, Mode) override {
    if (x.shape().size() != 4 || x.dim(1) != in_) {
      throw ShapeError("deconv expects (N," + std::to_string(in_) + ",H,W), got " + to_string(x.shape()));
    }
    const auto g = ConvGeometry::same(x.dim(2) * stride_, x.dim(3) * stride_, kernel_, stride_);
    return add(conv2d_input_grad(x, weight_, g), bias_);
  }

  Shape output_shape(const Shape& in) const override { return {filters_, in[1] * stride_, in[2] * stride_}; }

 private:
  int in_, filters_, kernel_, stride_;
  Var<T> weight_, bias_;
};

namespace detail {
inline std::vector<int> channel_stat_axes(std::size_t rank) {
  return rank == 2 ? std::vector<int>{0} : std::vector<int>{0, 2, 3};
}
inline Shape channel_param_shape(std::size_t rank, int channels) {
  return rank == 2 ? Shape{1, channels} : Shape{1, channels, 1, 1};
}
}  // namespace detail

/// Batch normalization over the batch (and spatial) axes; per-channel affine.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(ParameterStore<T>& store, const std::string& name, int channels, int rank, T momentum = T(0.1),
            T eps = T(1e-5))
      : channels_(channels), rank_(rank), momentum_(momentum), eps_(eps) {
    const Shape ps = detail::channel_param_shape(rank, channels);
    gamma_ = store.add_parameter(name + ".gamma", Tensor<T>(ps, T(1)));
    beta_ = store.add_parameter(name + ".beta", Tensor<T>(ps, T(0)));
    running_mean_ = store.add_buffer(name + ".running_mean", Tensor<T>(ps, T(0)));
    running_var_ = store.add_buffer(name + ".running_var", Tensor<T>(ps, T(1)));
  }

  Var<T> forward(const Var<T>& x, Mode mode) override {
    if (static_cast<int>(x.shape().size()) != rank_ || x.dim(1) != channels_) {
      throw ShapeError("batch-norm over " + std::to_string(channels_) + " channels got " + to_string(x.shape()));
    }
    const auto axes = detail::channel_stat_axes(x.shape().size());
    Var<T> xhat;
    if (mode == Mode::train) {
      Var<T> mu = mean(x, axes, true);
      Var<T> centered = sub(x, mu);
      Var<T> var = mean(square(centered), axes, true);
      xhat = mul(centered, pow_scalar(add_scalar(var, eps_), T(-0.5)));
      const double count = static_cast<double>(x.size() / channels_);
      const double unbias = count > 1 ? count / (count - 1) : 1.0;
      auto& rm = running_mean_.mutable_value();
      auto& rv = running_var_.mutable_value();
      for (int c = 0; c < channels_; ++c) {
        rm[c] = (T(1) - momentum_) * rm[c] + momentum_ * mu.value()[c];
        rv[c] = (T(1) - momentum_) * rv[c] + momentum_ * static_cast<T>(var.value()[c] * unbias);
      }
    } else {
      Tensor<T> inv_std = running_var_.value();
      for (auto& v : inv_std.values()) v = T(1) / std::sqrt(v + eps_);
      xhat = mul(sub(x, constant(running_mean_.value())), constant(inv_std));
    }
    return add(mul(xhat, gamma_), beta_);
  }

  Shape output_shape(const Shape& in) const override { return in; }

 private:
  int channels_, rank_;
  T momentum_, eps_;
  Var<T> gamma_, beta_, running_mean_, running_var_;
};

/// Layer normalization over all non-batch axes of each sample; per-channel affine.
template <typename T>
class LayerNorm : public Layer<T> {
 public:
  LayerNorm(ParameterStore<T>& store, const std::string& name, int channels, int rank, T eps = T(1e-5))
      : channels_(channels), rank_(rank), eps_(eps) {
    const Shape ps = detail::channel_param_shape(rank, channels);
    gamma_ = store.add_parameter(name + ".gamma", Tensor<T>(ps, T(1)));
    beta_ = store.add_parameter(name + ".beta", Tensor<T>(ps, T(0)));
  }

  Var<T> forward(const Var<T>& x, Mode) override {
    if (static_cast<int>(x.shape().size()) != rank_ || x.dim(1) != channels_) {
      throw ShapeError("layer-norm over " + std::to_string(channels_) + " channels got " + to_string(x.shape()));
    }
    const std::vector<int> axes = rank_ == 2 ? std::vector<int>{1} : std::vector<int>{1, 2, 3};
    Var<T> centered = sub(x, mean(x, axes, true));
    Var<T> var = mean(square(centered), axes, true);
    Var<T> xhat = mul(centered, pow_scalar(add_scalar(var, eps_), T(-0.5)));
    return add(mul(xhat, gamma_), beta_);
  }

  Shape output_shape(const Shape& in) const override { return in; }

 private:
  int channels_, rank_;
  T eps_;
  Var<T> gamma_, beta_;
};

template <typename T>
class Activation : public Layer<T> {
 public:
  enum class Kind { relu, leaky_relu, tanh };
  explicit Activation(Kind kind, T slope = T(0.2)) : kind_(kind), slope_(slope) {}

  Var<T> forward(const Var<T>& x, Mode) override {
    switch (kind_) {
      case Kind::relu: return relu(x);
      case Kind::leaky_relu: return leaky_relu(x, slope_);
      case Kind::tanh: return tanh(x);
    }
    return x;
  }

  Shape output_shape(const Shape& in) const override { return in; }

 private:
  Kind kind_;
  T slope_;
};

template <typename T>
class Reshape : public Layer<T> {
 public:
  explicit Reshape(Shape per_sample) : shape_(std::move(per_sample)) {}

  Var<T> forward(const Var<T>& x, Mode) override {
    Shape s = shape_;
    s.insert(s.begin(), x.dim(0));
    return reshape(x, s);
  }

  Shape output_shape(const Shape&) const override { return shape_; }

 private:
  Shape shape_;
};

enum class LayerKind { conv, deconv, fully_connected, batch_norm, layer_norm, relu, leaky_relu, tanh, reshape };

/// One row of a network table: Conv(d,k,s), DeConv(d,k,s), FC(width), BN, LN, activations.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int filters = 0;
  int kernel = 5;
  int stride = 1;
  int width = 0;
  Shape target;  // reshape only
  double slope = 0.2;

  static LayerSpec conv(int d, int k, int s) { return make(LayerKind::conv, d, k, s); }
  static LayerSpec deconv(int d, int k, int s) { return make(LayerKind::deconv, d, k, s); }
  static LayerSpec fc(int width) {
    LayerSpec l = make(LayerKind::fully_connected);
    l.width = width;
    return l;
  }
  static LayerSpec bn() { return make(LayerKind::batch_norm); }
  static LayerSpec ln() { return make(LayerKind::layer_norm); }
  static LayerSpec relu() { return make(LayerKind::relu); }
  static LayerSpec lrelu(double slope = 0.2) {
    LayerSpec l = make(LayerKind::leaky_relu);
    l.slope = slope;
    return l;
  }
  static LayerSpec tanh() { return make(LayerKind::tanh); }
  static LayerSpec reshape(Shape s) {
    LayerSpec l = make(LayerKind::reshape);
    l.target = std::move(s);
    return l;
  }

 private:
  static LayerSpec make(LayerKind kind, int d = 0, int k = 5, int s = 1) {
    LayerSpec l;
    l.kind = kind;
    l.filters = d;
    l.kernel = k;
    l.stride = s;
    return l;
  }
};

/// A feed-forward stack built from LayerSpecs with a declared per-sample input shape.
/// Parameters are registered as `<prefix>.<index>.<tensor>`.
template <typename T>
class Sequential {
 public:
  Sequential() = default;

  Sequential(ParameterStore<T>& store, const std::string& prefix, Shape input_shape,
             const std::vector<LayerSpec>& specs, std::mt19937_64& rng)
      : input_shape_(std::move(input_shape)), output_shape_(input_shape_) {
    Shape cur = input_shape_;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      const std::string name = prefix + "." + std::to_string(i);
      std::unique_ptr<Layer<T>> layer;
      switch (s.kind) {
        case LayerKind::conv:
          check_kernel(s);
          layer = std::make_unique<Conv2d<T>>(store, name, cur.at(0), s.filters, s.kernel, s.stride, rng);
          break;
        case LayerKind::deconv:
          check_kernel(s);
          layer = std::make_unique<Deconv2d<T>>(store, name, cur.at(0), s.filters, s.kernel, s.stride, rng);
          break;
        case LayerKind::fully_connected:
          layer = std::make_unique<Linear<T>>(store, name, static_cast<int>(numel(cur)), s.width, rng);
          break;
        case LayerKind::batch_norm:
          layer = std::make_unique<BatchNorm<T>>(store, name, cur.at(0), static_cast<int>(cur.size()) + 1);
          break;
        case LayerKind::layer_norm:
          layer = std::make_unique<LayerNorm<T>>(store, name, cur.at(0), static_cast<int>(cur.size()) + 1);
          break;
        case LayerKind::relu: layer = std::make_unique<Activation<T>>(Activation<T>::Kind::relu); break;
        case LayerKind::leaky_relu:
          layer = std::make_unique<Activation<T>>(Activation<T>::Kind::leaky_relu, static_cast<T>(s.slope));
          break;
        case LayerKind::tanh: layer = std::make_unique<Activation<T>>(Activation<T>::Kind::tanh); break;
        case LayerKind::reshape: layer = std::make_unique<Reshape<T>>(s.target); break;
      }
      cur = layer->output_shape(cur);
      layers_.push_back(std::move(layer));
      names_.push_back(name);
    }
    output_shape_ = cur;
  }

  Var<T> forward(const Var<T>& x, Mode mode) const {
    Shape per_sample(x.shape().begin() + (x.shape().empty() ? 0 : 1), x.shape().end());
    if (per_sample != input_shape_) {
      throw ShapeError("network expects per-sample input " + to_string(input_shape_) + ", got " +
                       to_string(x.shape()));
    }
    Var<T> y = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      y = layers_[i]->forward(y, mode);
      if (!y.value().all_finite()) throw NumericError("non-finite activation after layer " + names_[i]);
    }
    return y;
  }

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t depth() const { return layers_.size(); }

 private:
  static void check_kernel(const LayerSpec& s) {
    if (s.kernel <= 0 || (s.stride != 1 && s.stride != 2) || s.filters <= 0) {
      throw std::invalid_argument("conv/deconv layers need filters > 0 and stride 1 or 2");
    }
  }

  Shape input_shape_;
  Shape output_shape_;
  std::vector<std::shared_ptr<Layer<T>>> layers_;
  std::vector<std::string> names_;
};

}  // namespace gcgan::nn
