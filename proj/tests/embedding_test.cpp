#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/model/embedding.hpp"
#include "gcgan/nn/gradcheck.hpp"

namespace nn = gcgan::nn;
using namespace gcgan::model;
using gcgan::data::Dataset;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

// Two (1,32) embeddings whose squared distance is exactly d2.
std::pair<Var<double>, Var<double>> pair_at(double d2, bool requires_grad = false) {
  Tensor<double> a(Shape{1, kEmbeddingDim}, 0.0), b(Shape{1, kEmbeddingDim}, 0.0);
  a[0] = std::sqrt(d2);
  return {Var<double>(a, requires_grad), Var<double>(b)};
}

double contr(double d2, bool different, double m = 5.0) {
  auto [a, b] = pair_at(d2);
  return contrastive_loss(a, b, Tensor<double>(Shape{1}, different ? 1.0 : 0.0), m).item();
}

struct SmallProblem {
  Dataset train;
  std::vector<gcgan::data::TrainingTriplet> triplets;
  SmallProblem(int identities = 12, std::uint64_t seed = 4) {
    train = gcgan::data::make_dataset(identities, 0.1, seed);
    triplets = gcgan::data::assemble_triplets(train, seed + 1);
  }
};

EmbeddingTrainOptions small_options(long epochs) {
  EmbeddingTrainOptions o;
  o.epochs = epochs;
  o.seed = 9;
  return o;
}

}  // namespace

TEST(Contrastive, HandEvaluatedCases) {
  EXPECT_NEAR(contr(0.0, false), 0.0, 1e-6);
  EXPECT_NEAR(contr(1.0, false), 0.5, 1e-6);
  EXPECT_NEAR(contr(1.0, true), 2.0, 1e-6);
  EXPECT_NEAR(contr(9.0, true), 0.0, 1e-6);
}

TEST(Contrastive, NonNegativeAndZeroExactlyWhereExpected) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  for (int t = 0; t < 200; ++t) {
    const double d2 = u(rng);
    EXPECT_GE(contr(d2, true), 0.0);
    EXPECT_GT(contr(d2, false), 0.0);
    if (d2 >= 5.0) EXPECT_EQ(contr(d2, true), 0.0);
    else EXPECT_GT(contr(d2, true), 0.0);
  }
  EXPECT_EQ(contr(0.0, false), 0.0);
}

TEST(Contrastive, BatchIsAveraged) {
  Tensor<double> a(Shape{2, kEmbeddingDim}, 0.0), b(Shape{2, kEmbeddingDim}, 0.0);
  a[0] = 1.0;
  a[kEmbeddingDim] = 1.0;
  Tensor<double> alpha(Shape{2}, std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(contrastive_loss(Var<double>(a), Var<double>(b), alpha, 5.0).item(), (0.5 + 2.0) / 2, 1e-12);
}

TEST(Contrastive, RejectsBadInputs) {
  auto [a, b] = pair_at(1.0);
  EXPECT_THROW(contrastive_loss(a, b, Tensor<double>(Shape{1}, 1.0), 0.0), std::invalid_argument);
  EXPECT_THROW(contrastive_loss(a, b, Tensor<double>(Shape{2}, 1.0), 5.0), nn::ShapeError);
  Var<double> c(Tensor<double>(Shape{1, 16}, 0.0));
  EXPECT_THROW(contrastive_loss(a, c, Tensor<double>(Shape{1}, 1.0), 5.0), nn::ShapeError);
}

TEST(Contrastive, GradientMatchesFiniteDifferencesAroundHinge) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (double target : {5.0 - 1e-2, 5.0 + 1e-2, 2.0, 7.0}) {
    for (double alpha : {0.0, 1.0}) {
      Tensor<double> dir(Shape{1, kEmbeddingDim});
      for (auto& v : dir.values()) v = n(rng);
      double norm = 0;
      for (double v : dir.values()) norm += v * v;
      for (auto& v : dir.values()) v *= std::sqrt(target / norm);
      Var<double> a(dir, true);
      Var<double> b(Tensor<double>(Shape{1, kEmbeddingDim}, 0.0));
      const Tensor<double> lbl(Shape{1}, alpha);
      auto res = nn::gradient_check<double>([&] { return contrastive_loss(a, b, lbl, 5.0); }, {a}, 1e-6);
      EXPECT_LE(res.relative_error, 1e-4) << "d2=" << target << " alpha=" << alpha;
    }
  }
}

TEST(Contrastive, SubgradientIsZeroExactlyAtMargin) {
  // d2 = m exactly with a representable coordinate: 4 + 1 = 5.
  Tensor<double> a(Shape{1, kEmbeddingDim}, 0.0);
  a[0] = 2.0;
  a[1] = 1.0;
  Var<double> va(a, true);
  Var<double> vb(Tensor<double>(Shape{1, kEmbeddingDim}, 0.0));
  const auto loss = contrastive_loss(va, vb, Tensor<double>(Shape{1}, 1.0), 5.0);
  EXPECT_EQ(loss.item(), 0.0);
  const auto g = nn::grad(loss, {va});
  for (double v : g[0].value().values()) EXPECT_EQ(v, 0.0);
}

TEST(LandmarkRecon, DirectArithmetic) {
  Var<double> g(Tensor<double>(Shape{1, 136}, 0.0)), h(Tensor<double>(Shape{1, 136}, 0.1));
  EXPECT_NEAR(landmark_recon_loss(g, h).item(), 1.36, 1e-6);
  EXPECT_NEAR(landmark_recon_loss(h, g).item(), 1.36, 1e-6);
  EXPECT_EQ(landmark_recon_loss(h, h).item(), 0.0);
  Var<double> bad(Tensor<double>(Shape{1, 68}, 0.0));
  EXPECT_THROW(landmark_recon_loss(g, bad), nn::ShapeError);
}

TEST(LandmarkRecon, AveragesPerSampleSumsOverBatch) {
  Tensor<double> a(Shape{2, 136}, 0.0), b(Shape{2, 136}, 0.0);
  for (int i = 0; i < 136; ++i) b[136 + i] = 0.2;  // second row: 136 * 0.04
  EXPECT_NEAR(landmark_recon_loss(Var<double>(a), Var<double>(b)).item(), 136 * 0.04 / 2, 1e-12);
}

TEST(EmbeddingNet, ShapesAndParameterNames) {
  EmbeddingNet<float> e(3);
  SmallProblem p(11);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto g = gcgan::data::landmark_batch<float>(p.train, idx);
  const auto z = e.embed(g);
  EXPECT_EQ(z.shape(), (Shape{64, kEmbeddingDim}));
  EXPECT_EQ(e.reconstruct(g).shape(), (Shape{64, 136}));
  for (const auto& [name, t] : e.state()) EXPECT_EQ(name.rfind("E.", 0), 0u) << name;
}

TEST(EmbeddingNet, EmbedIsInferModeAndDeterministic) {
  EmbeddingNet<float> e(3);
  SmallProblem p(4);
  const auto g = gcgan::data::landmark_batch<float>(p.train, {0, 1, 2});
  const auto before = e.state();
  const auto z1 = e.embed(g);
  EXPECT_EQ(z1, e.embed(g));
  EXPECT_EQ(before, e.state());  // running statistics untouched
  // Row independence: embedding one sample alone gives the same row (up to GEMM blocking).
  const auto z0 = e.embed(gcgan::data::landmark_batch<float>(p.train, {0}));
  for (int k = 0; k < kEmbeddingDim; ++k) EXPECT_NEAR(z0[k], z1[k], 1e-6);
}

TEST(EmbeddingTraining, SeedFixedRerunIsBitIdentical) {
  SmallProblem p;
  EmbeddingNet<float> a(5), b(5);
  const auto ha = train_embedding(a, p.train, p.triplets, small_options(2));
  const auto hb = train_embedding(b, p.train, p.triplets, small_options(2));
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(a.state(), b.state());
}

TEST(EmbeddingTraining, ResumeAtEpochBoundaryMatchesUninterruptedRun) {
  SmallProblem p;
  EmbeddingNet<float> full(5);
  EmbeddingTrainer<float> tf(full, small_options(3));
  tf.train(p.train, p.triplets);

  EmbeddingNet<float> first(5);
  EmbeddingTrainer<float> t1(first, small_options(3));
  t1.run_epoch(p.train, p.triplets);
  EmbeddingNet<float> resumed(0);
  resumed.load_state(first.state());
  EmbeddingTrainer<float> t2(resumed, small_options(3));
  t2.restore(t1.epochs_done(), t1.history(), t1.optimizer().state());
  t2.train(p.train, p.triplets);
  EXPECT_EQ(t2.history(), tf.history());
  EXPECT_EQ(resumed.state(), full.state());
}

TEST(EmbeddingTraining, AutoencoderAblationReducesReconstruction) {
  SmallProblem p;
  EmbeddingNet<float> e(6);
  auto opt = small_options(6);
  opt.loss.lambda_contr = 0.0;
  const auto h = train_embedding(e, p.train, p.triplets, opt);
  EXPECT_LT(h.back().gr, h.front().gr);
  EXPECT_EQ(h.back().total, h.back().gr);
}

TEST(EmbeddingTraining, ClassesSeparateAfterTraining) {
  SmallProblem p(30, 8);
  EmbeddingNet<float> e(7);
  train_embedding(e, p.train, p.triplets, small_options(15));
  std::vector<std::size_t> idx(p.train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto z = e.embed(gcgan::data::landmark_batch<float>(p.train, idx));
  double intra = 0, inter = 0;
  long ni = 0, nx = 0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      double d2 = 0;
      for (int k = 0; k < kEmbeddingDim; ++k) {
        const double d = z[i * kEmbeddingDim + k] - z[j * kEmbeddingDim + k];
        d2 += d * d;
      }
      if (p.train[i].emotion == p.train[j].emotion) intra += d2, ++ni;
      else inter += d2, ++nx;
    }
  EXPECT_GT(inter / nx, intra / ni);
  // Reconstruction error per coordinate after stage 1.
  const auto g = gcgan::data::landmark_batch<float>(p.train, idx);
  const auto r = e.reconstruct(g);
  double mae = 0;
  for (std::size_t i = 0; i < g.size(); ++i) mae += std::abs(g[i] - r[i]);
  EXPECT_LT(mae / g.size(), 0.05);
}

TEST(EmbeddingTraining, EmptyTripletsAreRejected) {
  SmallProblem p(3);
  EmbeddingNet<float> e(1);
  EmbeddingTrainer<float> t(e, small_options(1));
  EXPECT_THROW(t.run_epoch(p.train, {}), std::invalid_argument);
}

TEST(EmbeddingTraining, HistoryCsvRoundTrip) {
  std::vector<EmbeddingEpoch> h{{0, 0.5, 1.25, 1.75}, {1, 0.25, 0.5, 0.75}};
  std::stringstream s;
  write_embedding_history(s, h);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "epoch,L_contr,L_gr,L_E");
  EXPECT_EQ(read_embedding_history(s), h);
}
