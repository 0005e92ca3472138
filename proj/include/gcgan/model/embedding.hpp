#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/nn/adam.hpp"
#include "gcgan/nn/layers.hpp"
#include "gcgan/nn/ops.hpp"

namespace gcgan::model {

using nn::Mode;
using nn::Tensor;
using nn::Var;

constexpr int kEmbeddingDim = 32;

struct ContrastiveConfig {
  double margin = 5.0;
  double lambda_contr = 1.0;
  double lambda_gr = 1.0;

  void validate() const {
    if (!(margin > 0)) throw std::invalid_argument("contrastive margin must be positive");
    if (lambda_contr < 0 || lambda_gr < 0) throw std::invalid_argument("loss weights must be non-negative");
  }
};

/// Landmark encoder/decoder. Parameters live under `E.enc.*` and `E.dec.*`.
template <typename T = float>
class EmbeddingNet {
 public:
  explicit EmbeddingNet(std::uint64_t seed = 0) {
    using nn::LayerSpec;
    std::mt19937_64 rng(seed);
    enc_ = nn::Sequential<T>(store_, "E.enc", {data::kLandmarkDims},
                             {LayerSpec::fc(128), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::fc(64), LayerSpec::bn(),
                              LayerSpec::relu(), LayerSpec::fc(kEmbeddingDim), LayerSpec::bn(), LayerSpec::relu()},
                             rng);
    dec_ = nn::Sequential<T>(store_, "E.dec", {kEmbeddingDim},
                             {LayerSpec::fc(64), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::fc(128), LayerSpec::bn(),
                              LayerSpec::relu(), LayerSpec::fc(data::kLandmarkDims), LayerSpec::tanh()},
                             rng);
  }

  EmbeddingNet(const EmbeddingNet&) = delete;
  EmbeddingNet& operator=(const EmbeddingNet&) = delete;

  Var<T> encode(const Var<T>& g, Mode mode) const { return enc_.forward(g, mode); }
  Var<T> decode(const Var<T>& z, Mode mode) const { return dec_.forward(z, mode); }

  /// z_g for a (B,136) batch in inference mode, without recording a tape.
  Tensor<T> embed(const Tensor<T>& g) const {
    nn::require_finite(g, "landmark input");
    nn::NoGradGuard guard;
    return encode(Var<T>(g), Mode::infer).value();
  }

  Tensor<T> reconstruct(const Tensor<T>& g) const {
    nn::NoGradGuard guard;
    return decode(encode(Var<T>(g), Mode::infer), Mode::infer).value();
  }

  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  std::map<std::string, Tensor<T>> state() const { return store_.state(); }
  void load_state(const std::map<std::string, Tensor<T>>& s) { store_.load_state(s); }

 private:
  nn::ParameterStore<T> store_;
  nn::Sequential<T> enc_, dec_;
};

/// Pairwise loss averaged over the batch:
///   (alpha/2) max(0, m - d^2) + ((1 - alpha)/2) d^2,  d^2 = ||a - b||^2,
/// with alpha = 1 when the labels differ and 0 when they agree. The hinge acts on the squared
/// distance. `different` holds alpha per row, shape (B,).
template <typename T>
Var<T> contrastive_loss(const Var<T>& za, const Var<T>& zb, const Tensor<T>& different, double margin) {
  if (!(margin > 0)) throw std::invalid_argument("contrastive margin must be positive");
  if (za.shape() != zb.shape() || za.shape().size() != 2) throw nn::ShapeError("contrastive_loss: need equal (B,D) inputs");
  if (different.shape() != nn::Shape{za.dim(0)}) throw nn::ShapeError("contrastive_loss: label shape mismatch");
  const Var<T> d2 = nn::sum(nn::square(nn::sub(za, zb)), {1});
  const Var<T> alpha = nn::constant(different);
  Tensor<T> same_t = different;
  for (auto& v : same_t.values()) v = T(1) - v;
  const Var<T> hinge = nn::relu(nn::add_scalar(nn::neg(d2), static_cast<T>(margin)));
  const Var<T> per_pair = nn::add(nn::mul(alpha, hinge), nn::mul(nn::constant(same_t), d2));
  return nn::scale(nn::mean_all(per_pair), T(0.5));
}

/// Squared l2 distance summed over the 136 coordinates, averaged over the batch.
template <typename T>
Var<T> landmark_recon_loss(const Var<T>& g, const Var<T>& g_hat) {
  if (g.shape() != g_hat.shape() || g.shape().size() != 2) throw nn::ShapeError("landmark_recon_loss: shape mismatch");
  return nn::mean_all(nn::sum(nn::square(nn::sub(g, g_hat)), {1}));
}

struct EmbeddingEpoch {
  long epoch = 0;
  double contr = 0, gr = 0, total = 0;
  bool operator==(const EmbeddingEpoch&) const = default;
};

struct EmbeddingTrainOptions {
  ContrastiveConfig loss;
  nn::AdamConfig adam;
  long epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Per-epoch callback; receives the epoch record after the epoch's last update.
using EmbeddingEpochHook = std::function<void(const EmbeddingEpoch&)>;

/// Stage-1 trainer. Pairs are (target landmarks, reference landmarks) of each triplet; the encoder
/// sees both halves in one batch. Epoch e draws its shuffle from (seed, e), so training can stop and
/// resume at an epoch boundary with the optimizer state.
template <typename T = float>
class EmbeddingTrainer {
 public:
  EmbeddingTrainer(EmbeddingNet<T>& net, EmbeddingTrainOptions opt)
      : net_(net), opt_(opt), adam_(nn::Adam<T>::over(net.store(), opt.adam)) {
    opt_.loss.validate();
  }

  long epochs_done() const { return epochs_done_; }
  const std::vector<EmbeddingEpoch>& history() const { return history_; }
  nn::Adam<T>& optimizer() { return adam_; }

  void restore(long epochs_done, std::vector<EmbeddingEpoch> history, const std::map<std::string, Tensor<T>>& adam_state) {
    epochs_done_ = epochs_done;
    history_ = std::move(history);
    adam_.load_state(adam_state);
  }

  EmbeddingEpoch run_epoch(const data::Dataset& train, const std::vector<data::TrainingTriplet>& triplets) {
    if (triplets.empty()) throw std::invalid_argument("train_embedding: no triplets");
    auto rng = data::epoch_rng(opt_.seed, epochs_done_, 1);
    const auto batches = data::shuffled_batches(triplets.size(), opt_.batch_size, rng);
    EmbeddingEpoch rec;
    rec.epoch = epochs_done_;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const int B = static_cast<int>(batch.size());
      std::vector<std::size_t> both;
      Tensor<T> different(nn::Shape{B});
      for (int b = 0; b < B; ++b) both.push_back(triplets[batch[b]].target);
      for (int b = 0; b < B; ++b) {
        const auto& t = triplets[batch[b]];
        both.push_back(t.reference);
        different[b] = t.reference_label != t.target_label ? T(1) : T(0);
      }
      const Var<T> g = Var<T>(data::landmark_batch<T>(train, both));
      const Var<T> z = net_.encode(g, Mode::train);
      const Var<T> z_v = nn::slice(z, 0, 0, B), z_ref = nn::slice(z, 0, B, B);
      const Var<T> g_v = nn::slice(g, 0, 0, B);
      const Var<T> l_contr = contrastive_loss(z_v, z_ref, different, opt_.loss.margin);
      const Var<T> l_gr = landmark_recon_loss(g_v, net_.decode(z_v, Mode::train));
      const Var<T> l_e = nn::add(nn::scale(l_contr, static_cast<T>(opt_.loss.lambda_contr)),
                                 nn::scale(l_gr, static_cast<T>(opt_.loss.lambda_gr)));
      if (!std::isfinite(static_cast<double>(l_e.item()))) {
        std::ostringstream msg;
        msg << "non-finite embedding loss at epoch " << epochs_done_ << " batch " << bi << ": L_contr=" << l_contr.item()
            << " L_gr=" << l_gr.item();
        throw nn::NumericError(msg.str());
      }
      adam_.step(nn::grad(l_e, adam_.variables()));
      rec.contr += l_contr.item();
      rec.gr += l_gr.item();
      rec.total += l_e.item();
    }
    const double n = static_cast<double>(batches.size());
    rec.contr /= n, rec.gr /= n, rec.total /= n;
    history_.push_back(rec);
    ++epochs_done_;
    return rec;
  }

  void train(const data::Dataset& train, const std::vector<data::TrainingTriplet>& triplets,
             const EmbeddingEpochHook& hook = {}) {
    while (epochs_done_ < opt_.epochs) {
      const auto rec = run_epoch(train, triplets);
      if (hook) hook(rec);
    }
  }

 private:
  EmbeddingNet<T>& net_;
  EmbeddingTrainOptions opt_;
  nn::Adam<T> adam_;
  long epochs_done_ = 0;
  std::vector<EmbeddingEpoch> history_;
};

/// Convenience wrapper: fresh network trained for `opt.epochs` epochs.
template <typename T = float>
std::vector<EmbeddingEpoch> train_embedding(EmbeddingNet<T>& net, const data::Dataset& train,
                                            const std::vector<data::TrainingTriplet>& triplets,
                                            const EmbeddingTrainOptions& opt) {
  EmbeddingTrainer<T> trainer(net, opt);
  trainer.train(train, triplets);
  return trainer.history();
}

inline void write_embedding_history(std::ostream& out, const std::vector<EmbeddingEpoch>& h) {
  out << "epoch,L_contr,L_gr,L_E\n";
  for (const auto& r : h)
    out << r.epoch << ',' << nn::exact(r.contr) << ',' << nn::exact(r.gr) << ',' << nn::exact(r.total) << '\n';
}

inline std::vector<EmbeddingEpoch> read_embedding_history(std::istream& in) {
  std::vector<EmbeddingEpoch> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EmbeddingEpoch r;
    char c;
    std::istringstream s(line);
    s >> r.epoch >> c >> r.contr >> c >> r.gr >> c >> r.total;
    out.push_back(r);
  }
  return out;
}

}  // namespace gcgan::model
