#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/model/embedding.hpp"
#include "gcgan/nn/adam.hpp"
#include "gcgan/nn/layers.hpp"
#include "gcgan/nn/ops.hpp"

namespace gcgan::model {

constexpr int kIdentityDim = 128;

enum class SkipMode { concat, add };

struct GanConfig {
  double lambda_ir = 1.0;
  double lambda_adv = 1e-3;
  double lambda_gp = 10.0;
  int n_critic = 5;
  double leaky_slope = 0.2;
  int width_divisor = 1;  // divides every channel count except the 128-d identity code
  SkipMode skip = SkipMode::concat;
  bool bn_before_tanh = true;

  void validate() const {
    if (lambda_ir < 0 || lambda_adv < 0 || lambda_gp < 0) throw std::invalid_argument("gan loss weights must be >= 0");
    if (n_critic < 0) throw std::invalid_argument("n_critic must be >= 0");
    if (width_divisor < 1 || 64 % width_divisor != 0) throw std::invalid_argument("width divisor must divide 64");
  }
};

/// Encoder-decoder generator. With `landmark_channel` the network is the SPG baseline: a fourth input
/// channel carries a landmark heatmap and the decoder receives z_i only.
template <typename T = float>
class Generator {
 public:
  Generator(const GanConfig& cfg, std::uint64_t seed, bool landmark_channel = false, const std::string& prefix = "G")
      : cfg_(cfg), spg_(landmark_channel) {
    cfg.validate();
    using nn::LayerSpec;
    const int w = cfg.width_divisor;
    c1_ = 64 / w;
    const int c2 = 128 / w, c3 = 256 / w, fc = 1024 / w;
    std::mt19937_64 rng(seed);
    const int in_ch = landmark_channel ? 4 : 3;
    const int s = data::kImageSize;
    enc_in_ = nn::Sequential<T>(store_, prefix + ".enc_in", {in_ch, s, s},
                                {LayerSpec::conv(c1_, 5, 2), LayerSpec::bn(), LayerSpec::relu()}, rng);
    enc_ = nn::Sequential<T>(store_, prefix + ".enc", {c1_, s / 2, s / 2},
                             {LayerSpec::conv(c2, 5, 2), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::conv(c3, 5, 2),
                              LayerSpec::bn(), LayerSpec::relu(), LayerSpec::fc(fc), LayerSpec::bn(), LayerSpec::relu(),
                              LayerSpec::fc(kIdentityDim), LayerSpec::bn(), LayerSpec::relu()},
                             rng);
    const int z_dim = kIdentityDim + (landmark_channel ? 0 : kEmbeddingDim);
    dec_ = nn::Sequential<T>(store_, prefix + ".dec", {z_dim},
                             {LayerSpec::fc(16 * c3), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::reshape({c3, 4, 4}),
                              LayerSpec::deconv(c3, 5, 2), LayerSpec::bn(), LayerSpec::relu(),
                              LayerSpec::deconv(c2, 5, 2), LayerSpec::bn(), LayerSpec::relu(),
                              LayerSpec::deconv(c1_, 5, 2), LayerSpec::bn(), LayerSpec::relu()},
                             rng);
    std::vector<LayerSpec> tail = {LayerSpec::deconv(c1_, 5, 2), LayerSpec::bn(), LayerSpec::relu(),
                                   LayerSpec::conv(3, 5, 1)};
    if (cfg.bn_before_tanh) tail.push_back(LayerSpec::bn());
    tail.push_back(LayerSpec::tanh());
    const int tail_in = cfg.skip == SkipMode::concat ? 2 * c1_ : c1_;
    out_ = nn::Sequential<T>(store_, prefix + ".out", {tail_in, s / 2, s / 2}, tail, rng);
  }

  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  struct Encoded {
    Var<T> z_i;   // (B, 128)
    Var<T> skip;  // first convolution block output, (B, c1, 32, 32)
  };

  Encoded encode_identity(const Var<T>& image, Mode mode) const {
    Encoded e;
    e.skip = enc_in_.forward(image, mode);
    e.z_i = enc_.forward(e.skip, mode);
    return e;
  }

  /// Decodes (z_i, z_g) with the skip features; `z_g` is ignored (may be undefined) for SPG.
  Var<T> generate(const Var<T>& z_i, const Var<T>& z_g, const Var<T>& skip, Mode mode) const {
    if (z_i.shape().size() != 2 || z_i.dim(1) != kIdentityDim) throw nn::ShapeError("generate: z_i must be (B,128)");
    Var<T> z = z_i;
    if (!spg_) {
      if (!z_g.defined() || z_g.shape() != nn::Shape{z_i.dim(0), kEmbeddingDim})
        throw nn::ShapeError("generate: z_g must be (B,32)");
      z = nn::concat<T>({z_i, z_g}, 1);
    }
    const Var<T> h = dec_.forward(z, mode);
    const Var<T> joined = cfg_.skip == SkipMode::concat ? nn::concat<T>({h, skip}, 1) : nn::add(h, skip);
    return out_.forward(joined, mode);
  }

  Var<T> forward(const Var<T>& image, const Var<T>& z_g, Mode mode) const {
    const auto e = encode_identity(image, mode);
    return generate(e.z_i, z_g, e.skip, mode);
  }

  bool is_spg() const { return spg_; }
  const GanConfig& config() const { return cfg_; }
  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  std::map<std::string, Tensor<T>> state() const { return store_.state(); }
  void load_state(const std::map<std::string, Tensor<T>>& s) { store_.load_state(s); }

 private:
  GanConfig cfg_;
  bool spg_;
  int c1_ = 64;
  nn::ParameterStore<T> store_;
  nn::Sequential<T> enc_in_, enc_, dec_, out_;
};

/// Critic with a 2x2 output map; the score of an image is the mean of the map.
template <typename T = float>
class Discriminator {
 public:
  Discriminator(const GanConfig& cfg, std::uint64_t seed, const std::string& prefix = "D") {
    cfg.validate();
    using nn::LayerSpec;
    const int w = cfg.width_divisor;
    std::mt19937_64 rng(seed);
    std::vector<LayerSpec> specs;
    for (int c : {64, 128, 256, 512}) {
      specs.push_back(LayerSpec::conv(c / w, 5, 2));
      specs.push_back(LayerSpec::ln());
      specs.push_back(LayerSpec::lrelu(cfg.leaky_slope));
    }
    specs.push_back(LayerSpec::conv(1, 5, 2));
    net_ = nn::Sequential<T>(store_, prefix, {3, data::kImageSize, data::kImageSize}, specs, rng);
  }

  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// Raw (B, 1, 2, 2) output map.
  Var<T> map(const Var<T>& image) const { return net_.forward(image, Mode::train); }
  /// Per-sample scores, shape (B,).
  Var<T> score(const Var<T>& image) const { return nn::mean(map(image), {1, 2, 3}); }

  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  std::map<std::string, Tensor<T>> state() const { return store_.state(); }
  void load_state(const std::map<std::string, Tensor<T>>& s) { store_.load_state(s); }

 private:
  nn::ParameterStore<T> store_;
  nn::Sequential<T> net_;
};

/// Per-sample critic used by the loss helpers.
template <typename T>
using Critic = std::function<Var<T>(const Var<T>&)>;

template <typename T>
Critic<T> as_critic(const Discriminator<T>& d) {
  return [&d](const Var<T>& x) { return d.score(x); };
}

template <typename T>
struct CriticScores {
  Var<T> real, fake;  // batch means
};

template <typename T>
CriticScores<T> critic_scores(const Critic<T>& d, const Var<T>& real, const Var<T>& fake) {
  if (real.shape() != fake.shape()) throw nn::ShapeError("critic_scores: real and fake batches differ in shape");
  return {nn::mean_all(d(real)), nn::mean_all(d(fake))};
}

/// -E D(real) + E D(fake)
template <typename T>
Var<T> critic_loss(const CriticScores<T>& s) {
  return nn::sub(s.fake, s.real);
}

/// -E D(fake)
template <typename T>
Var<T> generator_adv_loss(const Var<T>& fake_score) {
  return nn::neg(fake_score);
}

/// Mean over the batch of (||grad_x D(x)||_2 - 1)^2 at x = eps*real + (1-eps)*fake, eps ~ U(0,1)
/// per sample. The returned value is differentiable w.r.t. the critic parameters.
template <typename T>
Var<T> gradient_penalty(const Critic<T>& d, const Tensor<T>& real, const Tensor<T>& fake, std::mt19937_64& rng) {
  if (real.shape() != fake.shape() || real.rank() < 2) throw nn::ShapeError("gradient_penalty: shape mismatch");
  const int B = real.dim(0);
  const std::size_t per = real.size() / B;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> mixed(real.shape());
  for (int b = 0; b < B; ++b) {
    const T e = static_cast<T>(u(rng));
    for (std::size_t i = 0; i < per; ++i) mixed[b * per + i] = e * real[b * per + i] + (T(1) - e) * fake[b * per + i];
  }
  const Var<T> x(std::move(mixed), true);
  const Var<T> scores = d(x);
  const Var<T> g = nn::grad(nn::sum_all(scores), std::vector<Var<T>>{x}, true)[0];
  std::vector<int> axes;
  for (int a = 1; a < static_cast<int>(real.rank()); ++a) axes.push_back(a);
  const Var<T> norm = nn::pow_scalar(nn::add_scalar(nn::sum(nn::square(g), axes), T(1e-12)), T(0.5));
  return nn::mean_all(nn::square(nn::add_scalar(norm, T(-1))));
}

/// Mean absolute pixel difference.
template <typename T>
Var<T> image_recon_loss(const Var<T>& target, const Var<T>& generated) {
  if (target.shape() != generated.shape()) throw nn::ShapeError("image_recon_loss: shape mismatch");
  return nn::mean_all(nn::abs(nn::sub(target, generated)));
}

/// Gaussian heatmap of 68 landmarks (sigma in pixels), summed, divided by its maximum and mapped to
/// [-1,1]. Shape (64, 64).
inline Tensor<float> landmark_heatmap(const data::LandmarkVector& g, double sigma = 1.5) {
  constexpr int n = data::kImageSize;
  std::vector<double> acc(n * n, 0.0);
  const double inv = 1.0 / (2 * sigma * sigma);
  const int reach = static_cast<int>(std::ceil(4 * sigma));
  for (int p = 0; p < data::kNumLandmarks; ++p) {
    const double x = data::denormalize_coordinate(g[2 * p]), y = data::denormalize_coordinate(g[2 * p + 1]);
    const int cx = static_cast<int>(x), cy = static_cast<int>(y);
    for (int py = std::max(0, cy - reach); py <= std::min(n - 1, cy + reach); ++py) {
      for (int px = std::max(0, cx - reach); px <= std::min(n - 1, cx + reach); ++px) {
        const double dx = px + 0.5 - x, dy = py + 0.5 - y;
        acc[py * n + px] += std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  const double peak = *std::max_element(acc.begin(), acc.end());
  Tensor<float> out(nn::Shape{n, n});
  for (int i = 0; i < n * n; ++i) out[i] = static_cast<float>(peak > 0 ? 2.0 * acc[i] / peak - 1.0 : -1.0);
  return out;
}

/// Appends a heatmap channel to each image: (B,3,H,W) + B heatmaps -> (B,4,H,W).
template <typename T>
Tensor<T> with_heatmaps(const Tensor<T>& images, const std::vector<data::LandmarkVector>& landmarks) {
  const int B = images.dim(0);
  if (static_cast<int>(landmarks.size()) != B) throw nn::ShapeError("with_heatmaps: one landmark vector per image");
  constexpr int n = data::kImageSize;
  constexpr std::size_t plane = static_cast<std::size_t>(n) * n;
  Tensor<T> out(nn::Shape{B, 4, n, n});
  for (int b = 0; b < B; ++b) {
    std::copy_n(images.values().begin() + b * 3 * plane, 3 * plane, out.values().begin() + b * 4 * plane);
    const auto h = landmark_heatmap(landmarks[b]);
    for (std::size_t i = 0; i < plane; ++i) out[b * 4 * plane + 3 * plane + i] = static_cast<T>(h[i]);
  }
  return out;
}

/// Expression transfer: identity features from `image`, expression from `landmarks`. Runs every
/// network in inference mode. `image` is (B,3,64,64), `landmarks` (B,136).
template <typename T>
Tensor<T> transfer(const Tensor<T>& image, const Tensor<T>& landmarks, const EmbeddingNet<T>& e, const Generator<T>& g) {
  if (g.is_spg()) throw std::invalid_argument("transfer: use spg_transfer for the SPG baseline");
  nn::NoGradGuard guard;
  const Var<T> z_g(e.embed(landmarks));
  return g.forward(Var<T>(image), z_g, Mode::infer).value();
}

template <typename T>
Tensor<T> spg_transfer(const Tensor<T>& image, const std::vector<data::LandmarkVector>& landmarks, const Generator<T>& g) {
  if (!g.is_spg()) throw std::invalid_argument("spg_transfer: generator lacks the landmark channel");
  nn::NoGradGuard guard;
  return g.forward(Var<T>(with_heatmaps(image, landmarks)), Var<T>(), Mode::infer).value();
}

struct GanEpoch {
  long epoch = 0;
  double ir = 0, discr = 0, gen = 0, gp = 0;
  bool operator==(const GanEpoch&) const = default;
};

struct GanTrainOptions {
  GanConfig gan;
  nn::AdamConfig adam;
  long epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Generator steps per epoch; 0 means one pass over the triplets.
  long steps_per_epoch = 0;
};

/// Stage-2 trainer: n_critic critic updates on L_discr + lambda_gp GP, then one generator update on
/// lambda_ir L_ir + lambda_adv L_gen. The embedding network is only queried in inference mode and
/// never updated. Epoch e draws from (seed, e), so a run can stop and resume at epoch boundaries.
template <typename T = float>
class GanTrainer {
 public:
  using StepHook = std::function<void(long step, const Generator<T>&)>;

  GanTrainer(Generator<T>& g, Discriminator<T>& d, const EmbeddingNet<T>* e, GanTrainOptions opt)
      : g_(g), d_(d), e_(e), opt_(opt), adam_g_(nn::Adam<T>::over(g.store(), opt.adam)),
        adam_d_(nn::Adam<T>::over(d.store(), opt.adam)) {
    opt_.gan.validate();
    if (!g.is_spg() && e == nullptr) throw std::invalid_argument("train_gan: embedding network required");
  }

  long epochs_done() const { return epochs_done_; }
  long generator_steps() const { return adam_g_.steps(); }
  const std::vector<GanEpoch>& history() const { return history_; }
  nn::Adam<T>& generator_optimizer() { return adam_g_; }
  nn::Adam<T>& critic_optimizer() { return adam_d_; }
  void set_step_hook(StepHook hook, long every) {
    hook_ = std::move(hook);
    hook_every_ = every;
  }

  void restore(long epochs_done, std::vector<GanEpoch> history, const std::map<std::string, Tensor<T>>& g_state,
               const std::map<std::string, Tensor<T>>& d_state) {
    epochs_done_ = epochs_done;
    history_ = std::move(history);
    adam_g_.load_state(g_state);
    adam_d_.load_state(d_state);
  }

  /// Generator input for the given triplets: images (plus heatmaps for SPG) and z_g.
  struct Conditioned {
    Var<T> input, z_g;
    Tensor<T> target;
  };

  Conditioned condition(const data::Dataset& train, const std::vector<data::TrainingTriplet>& triplets,
                        const std::vector<std::size_t>& batch) const {
    std::vector<std::size_t> in_idx, tgt_idx;
    for (auto b : batch) {
      in_idx.push_back(triplets[b].input);
      tgt_idx.push_back(triplets[b].target);
    }
    Conditioned c;
    Tensor<T> images = data::image_batch<T>(train, in_idx);
    c.target = data::image_batch<T>(train, tgt_idx);
    if (g_.is_spg()) {
      std::vector<data::LandmarkVector> lm;
      for (auto i : tgt_idx) lm.push_back(train[i].landmarks);
      c.input = Var<T>(with_heatmaps(images, lm));
    } else {
      c.input = Var<T>(std::move(images));
      c.z_g = Var<T>(e_->embed(data::landmark_batch<T>(train, tgt_idx)));
    }
    return c;
  }

  GanEpoch run_epoch(const data::Dataset& train, const std::vector<data::TrainingTriplet>& triplets) {
    if (triplets.empty()) throw std::invalid_argument("train_gan: no triplets");
    auto rng = data::epoch_rng(opt_.seed, epochs_done_, 2);
    auto batches = data::shuffled_batches(triplets.size(), opt_.batch_size, rng);
    if (opt_.steps_per_epoch > 0 && static_cast<std::size_t>(opt_.steps_per_epoch) < batches.size())
      batches.resize(opt_.steps_per_epoch);
    const auto& cfg = opt_.gan;
    const Critic<T> critic = as_critic(d_);
    std::uniform_int_distribution<std::size_t> pick(0, triplets.size() - 1);
    GanEpoch rec;
    rec.epoch = epochs_done_;
    long critic_steps = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      for (int c = 0; c < cfg.n_critic; ++c) {
        std::vector<std::size_t> cb(batches[bi].size());
        for (auto& v : cb) v = pick(rng);
        const auto cond = condition(train, triplets, cb);
        Tensor<T> fake;
        {
          nn::NoGradGuard guard;
          fake = g_.forward(cond.input, cond.z_g, Mode::train).value();
        }
        const Var<T> real = Var<T>(g_.is_spg() ? first_channels(cond.input.value()) : cond.input.value());
        const auto scores = critic_scores(critic, real, Var<T>(fake));
        const Var<T> l_discr = critic_loss(scores);
        Var<T> total = l_discr;
        double gp_value = 0;
        if (cfg.lambda_gp > 0) {
          const Var<T> gp = gradient_penalty(critic, real.value(), fake, rng);
          gp_value = gp.item();
          total = nn::add(total, nn::scale(gp, static_cast<T>(cfg.lambda_gp)));
        }
        check_finite(total.item(), "critic", bi);
        adam_d_.step(nn::grad(total, adam_d_.variables()));
        rec.discr += l_discr.item();
        rec.gp += gp_value;
        ++critic_steps;
      }
      const auto cond = condition(train, triplets, batches[bi]);
      const Var<T> fake = g_.forward(cond.input, cond.z_g, Mode::train);
      const Var<T> l_ir = image_recon_loss(Var<T>(cond.target), fake);
      const Var<T> l_gen = generator_adv_loss(nn::mean_all(critic(fake)));
      const Var<T> total =
          nn::add(nn::scale(l_ir, static_cast<T>(cfg.lambda_ir)), nn::scale(l_gen, static_cast<T>(cfg.lambda_adv)));
      check_finite(total.item(), "generator", bi);
      adam_g_.step(nn::grad(total, adam_g_.variables()));
      rec.ir += l_ir.item();
      rec.gen += l_gen.item();
      if (hook_ && hook_every_ > 0 && adam_g_.steps() % hook_every_ == 0) hook_(adam_g_.steps(), g_);
    }
    const double n = static_cast<double>(batches.size());
    rec.ir /= n, rec.gen /= n;
    if (critic_steps > 0) rec.discr /= critic_steps, rec.gp /= critic_steps;
    history_.push_back(rec);
    ++epochs_done_;
    return rec;
  }

  void train(const data::Dataset& train, const std::vector<data::TrainingTriplet>& triplets,
             const std::function<void(const GanEpoch&)>& epoch_hook = {}) {
    while (epochs_done_ < opt_.epochs) {
      const auto rec = run_epoch(train, triplets);
      if (epoch_hook) epoch_hook(rec);
    }
  }

 private:
  static Tensor<T> first_channels(const Tensor<T>& x) {
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3), C = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<T> out(nn::Shape{B, 3, H, W});
    for (int b = 0; b < B; ++b)
      std::copy_n(x.values().begin() + b * C * plane, 3 * plane, out.values().begin() + b * 3 * plane);
    return out;
  }

  void check_finite(double v, const char* which, std::size_t batch) const {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "non-finite " << which << " loss at epoch " << epochs_done_ << " batch " << batch;
      throw nn::NumericError(msg.str());
    }
  }

  Generator<T>& g_;
  Discriminator<T>& d_;
  const EmbeddingNet<T>* e_;
  GanTrainOptions opt_;
  nn::Adam<T> adam_g_, adam_d_;
  long epochs_done_ = 0;
  std::vector<GanEpoch> history_;
  StepHook hook_;
  long hook_every_ = 0;
};

inline void write_gan_history(std::ostream& out, const std::vector<GanEpoch>& h) {
  out << "epoch,L_ir,L_discr,L_gen,GP\n";
  for (const auto& r : h)
    out << r.epoch << ',' << nn::exact(r.ir) << ',' << nn::exact(r.discr) << ',' << nn::exact(r.gen) << ','
        << nn::exact(r.gp) << '\n';
}

inline std::vector<GanEpoch> read_gan_history(std::istream& in) {
  std::vector<GanEpoch> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GanEpoch r;
    char c;
    std::istringstream s(line);
    s >> r.epoch >> c >> r.ir >> c >> r.discr >> c >> r.gen >> c >> r.gp;
    out.push_back(r);
  }
  return out;
}

}  // namespace gcgan::model
