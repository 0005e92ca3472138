#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/nn/adam.hpp"
#include "gcgan/nn/layers.hpp"
#include "gcgan/nn/ops.hpp"

namespace gcgan::eval {

using nn::Mode;
using nn::Tensor;
using nn::Var;

/// Image -> landmark regressor used to read expressions off generated faces. Parameters live under
/// `R.*`. ReLU follows every convolution and the hidden FC layer.
class LandmarkRegressor {
 public:
  explicit LandmarkRegressor(std::uint64_t seed = 0, int width_divisor = 1) {
    using nn::LayerSpec;
    if (width_divisor < 1 || 32 % width_divisor != 0) throw std::invalid_argument("regressor width divisor must divide 32");
    const int w = width_divisor;
    std::mt19937_64 rng(seed);
    net_ = nn::Sequential<float>(store_, "R", {3, data::kImageSize, data::kImageSize},
                                 {LayerSpec::conv(32 / w, 5, 2), LayerSpec::relu(), LayerSpec::conv(64 / w, 5, 2),
                                  LayerSpec::relu(), LayerSpec::conv(128 / w, 5, 2), LayerSpec::relu(),
                                  LayerSpec::fc(256 / w), LayerSpec::relu(), LayerSpec::fc(data::kLandmarkDims),
                                  LayerSpec::tanh()},
                                 rng);
  }

  LandmarkRegressor(const LandmarkRegressor&) = delete;
  LandmarkRegressor& operator=(const LandmarkRegressor&) = delete;

  Var<float> forward(const Var<float>& images) const { return net_.forward(images, Mode::infer); }

  /// (B,3,64,64) -> (B,136)
  Tensor<float> regress(const Tensor<float>& images) const {
    nn::NoGradGuard guard;
    return forward(Var<float>(images)).value();
  }

  nn::ParameterStore<float>& store() { return store_; }
  const nn::ParameterStore<float>& store() const { return store_; }
  std::map<std::string, Tensor<float>> state() const { return store_.state(); }
  void load_state(const std::map<std::string, Tensor<float>>& s) { store_.load_state(s); }

 private:
  nn::ParameterStore<float> store_;
  nn::Sequential<float> net_;
};

struct RegressorTrainOptions {
  nn::AdamConfig adam;
  long epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Mean absolute coordinate error of the regressor on a dataset.
inline double regressor_mae(const LandmarkRegressor& r, const data::Dataset& d, std::size_t batch = 64) {
  if (d.empty()) throw std::invalid_argument("regressor_mae: empty dataset");
  double total = 0;
  for (std::size_t s = 0; s < d.size(); s += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(d.size(), s + batch); ++i) idx.push_back(i);
    const auto pred = r.regress(data::image_batch<float>(d, idx));
    const auto truth = data::landmark_batch<float>(d, idx);
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(static_cast<double>(pred[i]) - truth[i]);
  }
  return total / (static_cast<double>(d.size()) * data::kLandmarkDims);
}

/// Trains on mean squared coordinate error; returns the per-epoch training loss.
inline std::vector<double> train_regressor(LandmarkRegressor& r, const data::Dataset& train, const RegressorTrainOptions& opt,
                                           const std::function<void(long, double)>& hook = {}) {
  if (train.empty()) throw std::invalid_argument("train_regressor: empty training set");
  auto adam = nn::Adam<float>::over(r.store(), opt.adam);
  std::vector<double> history;
  for (long e = 0; e < opt.epochs; ++e) {
    auto rng = data::epoch_rng(opt.seed, e, 3);
    const auto batches = data::shuffled_batches(train.size(), opt.batch_size, rng, 1);
    double total = 0;
    for (const auto& b : batches) {
      const Var<float> pred = r.forward(Var<float>(data::image_batch<float>(train, b)));
      const Var<float> loss =
          nn::mean_all(nn::square(nn::sub(pred, Var<float>(data::landmark_batch<float>(train, b)))));
      if (!std::isfinite(loss.item())) throw nn::NumericError("regressor training diverged at epoch " + std::to_string(e));
      adam.step(nn::grad(loss, adam.variables()));
      total += loss.item();
    }
    history.push_back(total / static_cast<double>(batches.size()));
    if (hook) hook(e, history.back());
  }
  return history;
}

/// Renders `per_identity` faces with uniformly random expressions for every listed identity.
inline data::Dataset regressor_training_set(const std::vector<int>& identities, std::uint64_t dataset_seed,
                                            int per_identity, std::uint64_t seed) {
  data::Dataset out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1), s(-1, 1);
  for (int id : identities) {
    const auto params = data::draw_identity(dataset_seed, id);
    for (int k = 0; k < per_identity; ++k) {
      const data::ExpressionParams ex{u(rng), s(rng), u(rng), s(rng)};
      out.push_back(data::make_sample(params, ex, id, 0));
    }
  }
  return out;
}

}  // namespace gcgan::eval
