#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gcgan/data/dataset.hpp"
#include "gcgan/eval/manifold.hpp"
#include "gcgan/eval/metrics.hpp"
#include "gcgan/eval/protocol.hpp"
#include "gcgan/eval/regressor.hpp"

namespace nn = gcgan::nn;
namespace data = gcgan::data;
using namespace gcgan::eval;
using gcgan::model::EmbeddingNet;
using gcgan::model::GanConfig;
using gcgan::model::Generator;
using nn::Shape;
using nn::Tensor;

namespace {

// Smooth test patterns shared with the reference computation.
Tensor<float> pattern(int kind, int h = 32, int w = 40) {
  Tensor<float> t(Shape{3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t[(c * h + y) * w + x] = static_cast<float>(kind == 0 ? std::sin(0.3 * x + 0.2 * y + c)
                                                              : 0.8 * std::cos(0.25 * x - 0.15 * y + 0.5 * c));
  return t;
}

GanConfig slim() {
  GanConfig c;
  c.width_divisor = 8;
  return c;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(Ssim, IdentitySymmetryAndRange) {
  const auto a = pattern(0), b = pattern(1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
  EXPECT_GE(ssim(a, b), -1.0);
  EXPECT_LE(ssim(a, b), 1.0);
}

TEST(Ssim, MatchesReferenceImplementation) {
  // Values from scikit-image structural_similarity (gaussian_weights, sigma 1.5, population covariance).
  EXPECT_NEAR(ssim(pattern(0), pattern(1)), 0.016528893680, 1e-9);
  const Tensor<float> lo(Shape{3, 64, 64}, -1.0f), hi(Shape{3, 64, 64}, 1.0f);
  EXPECT_NEAR(ssim(lo, hi), -0.999600079984, 1e-9);
  EXPECT_NEAR(ssim(lo, hi), (-2 + 4e-4) / (2 + 4e-4), 1e-12);
}

TEST(Ssim, RejectsMismatchedOrTinyImages) {
  EXPECT_THROW(ssim(pattern(0), pattern(0, 32, 32)), nn::ShapeError);
  const Tensor<float> small(Shape{3, 8, 8}, 0.f);
  EXPECT_THROW(ssim(small, small), nn::ShapeError);
}

TEST(Psnr, ExtremesAndReference) {
  const Tensor<float> lo(Shape{3, 64, 64}, -1.0f), hi(Shape{3, 64, 64}, 1.0f);
  EXPECT_NEAR(psnr(lo, hi), 0.0, 1e-12);
  EXPECT_EQ(psnr(hi, hi), 100.0);
  EXPECT_NEAR(psnr(pattern(0), pattern(1)), 6.607508507742, 1e-6);
  EXPECT_DOUBLE_EQ(psnr(pattern(0), pattern(1)), psnr(pattern(1), pattern(0)));
  EXPECT_THROW(psnr(lo, pattern(0)), nn::ShapeError);
}

TEST(Cosine, ValuesAndZeroNorm) {
  EXPECT_NEAR(cosine_similarity({1, 0}, {0, 2}), 0.0, 1e-15);
  EXPECT_NEAR(cosine_similarity({1, 2}, {2, 4}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity({1, 2}, {-1, -2}), -1.0, 1e-15);
  EXPECT_THROW(cosine_similarity({0, 0}, {1, 2}), nn::NumericError);
}

TEST(Pca, RankTwoDataIsReproducedUpToRotation) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> u(8), v(8);
  for (auto& x : u) x = n(rng);
  for (auto& x : v) x = n(rng);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 30; ++i) {
    const double a = 3 * n(rng), b = n(rng);
    std::vector<double> r(8);
    for (int k = 0; k < 8; ++k) r[k] = 1.5 + a * u[k] + b * v[k];
    rows.push_back(r);
  }
  const auto p = fit_pca2(rows);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const auto pi = p.project(rows[i]), pj = p.project(rows[j]);
      EXPECT_NEAR((pi - pj).norm(), dist(rows[i], rows[j]), 1e-9);
    }
  EXPECT_GE(p.variance(0), p.variance(1));
  EXPECT_THROW(fit_pca2({{1, 2}, {3, 4}}), std::invalid_argument);
}

TEST(Silhouette, MatchesReferenceImplementation) {
  // scikit-learn silhouette_score on the same points.
  const std::vector<std::vector<double>> pts{{0, 0}, {0.5, 0.2}, {0.1, 0.6}, {3, 3},
                                             {3.4, 2.9}, {2.8, 3.5}, {6, 0}, {6.3, 0.4}};
  EXPECT_NEAR(silhouette_score(pts, {0, 0, 0, 1, 1, 1, 2, 2}), 0.861589657004, 1e-9);
  EXPECT_THROW(silhouette_score(pts, std::vector<int>(8, 0)), std::invalid_argument);
}

TEST(Manifold, RowCountsAndCsv) {
  std::vector<ManifoldRow> samples;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 10; ++i) {
    ManifoldRow r;
    r.z.resize(32);
    for (auto& x : r.z) x = n(rng);
    r.label = i % 3;
    r.identity = i / 3;
    samples.push_back(r);
  }
  const std::vector<std::vector<double>> path(4, samples[0].z);
  const auto d = manifold_dump(samples, path);
  EXPECT_EQ(d.rows.size(), 14u);
  EXPECT_EQ(d.rows[10].path_step, 0);
  EXPECT_EQ(d.rows[10].pc1, d.rows[0].pc1);
  std::ostringstream s;
  write_manifold_csv(s, d);
  const auto text = s.str();
  EXPECT_EQ(text.substr(0, text.find('\n')).rfind("identity,label,path_step,pc1,pc2,z0,", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 15);
  EXPECT_THROW(manifold_dump({samples[0], samples[1]}), std::invalid_argument);
}

TEST(Interpolation, EndpointsAreExactEmbeddings) {
  const auto ds = data::make_dataset(2, 0.1, 3);
  EmbeddingNet<float> e(1);
  Generator<float> g(slim(), 2);
  const int N = 5;
  const auto path = interpolate_expression(ds[1].landmarks, ds[2].landmarks, N, ds[0].image, e, g);
  ASSERT_EQ(path.images.size(), 6u);
  Tensor<float> pair(Shape{2, 136});
  std::copy(ds[1].landmarks.begin(), ds[1].landmarks.end(), pair.values().begin());
  std::copy(ds[2].landmarks.begin(), ds[2].landmarks.end(), pair.values().begin() + 136);
  const auto z = e.embed(pair);
  for (int k = 0; k < 32; ++k) {
    EXPECT_EQ(path.z_g[N][k], z[k]);       // t = N -> E(g_u)
    EXPECT_EQ(path.z_g[0][k], z[32 + k]);  // t = 0 -> E(g_v)
  }
  EXPECT_THROW(interpolate_expression(ds[1].landmarks, ds[2].landmarks, 0, ds[0].image, e, g), std::invalid_argument);
}

TEST(Interpolation, ConstantPathGivesIdenticalImages) {
  const auto ds = data::make_dataset(2, 0.1, 3);
  EmbeddingNet<float> e(1);
  Generator<float> g(slim(), 2);
  const auto path = interpolate_expression(ds[1].landmarks, ds[1].landmarks, 4, ds[0].image, e, g);
  for (const auto& img : path.images) EXPECT_EQ(img, path.images.front());
}

TEST(Lipschitz, FiniteReportOverEveryPair) {
  const auto ds = data::make_dataset(2, 0.1, 5);
  EmbeddingNet<float> e(1);
  Generator<float> g(slim(), 2);
  const auto r = lipschitz_report(ds, e, g, 3);
  EXPECT_EQ(r.pairs, 60u);
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_TRUE(r.all_finite);
  ASSERT_EQ(r.steps.size(), 3u);
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.count, 60u);
    EXPECT_LE(s.median, s.max);
    EXPECT_GE(s.mean, 0.0);
    EXPECT_LE(s.max, r.global_max);
  }
  std::ostringstream csv;
  write_lipschitz_csv(csv, r);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "step,mean,median,max,count");
  const auto again = lipschitz_report(ds, e, g, 3);
  EXPECT_EQ(again.samples, r.samples);
  const auto l1 = lipschitz_report(ds, e, g, 3, ImageNorm::l1);
  EXPECT_GT(l1.steps[0].mean, r.steps[0].mean);  // l1 >= l2 for every nonzero difference
}

TEST(Lipschitz, ZeroEmbeddingDistanceIsSkipped) {
  // Two emotions with identical landmarks: every step has a zero denominator.
  data::Dataset ds;
  const auto id = data::draw_identity(0, 0);
  const auto ex = data::prototype(0);
  ds.push_back(data::make_sample(id, ex, 0, 0));
  ds.push_back(data::make_sample(id, ex, 0, 1));
  EmbeddingNet<float> e(1);
  Generator<float> g(slim(), 2);
  EXPECT_THROW(lipschitz_report(ds, e, g, 2), nn::NumericError);
}

TEST(BoxPlot, ShapeAndRange) {
  const auto img = box_plot({{1, 2, 3}, {2, 5}, {}});
  EXPECT_EQ(img.dim(0), 3);
  EXPECT_EQ(img.dim(2), 20 + 3 * 24);
  for (float v : img.values()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(IdentityPreservation, AnalyticRenderIsVerified) {
  const auto id = data::draw_identity(1, 4);
  const auto ex = data::prototype(2);
  const auto s = identity_preservation(data::render_face(id, ex), id, ex);
  EXPECT_NEAR(s.score, 1.0, 1e-12);
  EXPECT_TRUE(s.verified);
  const auto other = identity_preservation(Tensor<float>(Shape{3, 64, 64}, -1.0f), id, ex);
  EXPECT_FALSE(other.verified);
}

TEST(CrossSubject, PairsCrossIdentities) {
  const auto ds = data::make_dataset(3, 0.1, 5);
  const auto pairs = cross_subject_pairs(ds, 50, 7);
  EXPECT_EQ(pairs.size(), 50u);
  for (const auto& p : pairs) EXPECT_NE(ds[p.input].identity, ds[p.driving].identity);
  const data::Dataset one(ds.begin(), ds.begin() + 6);
  EXPECT_THROW(cross_subject_pairs(one, 5, 7), std::invalid_argument);
}

TEST(Regressor, ShapesRangeAndDeterminism) {
  const auto train = regressor_training_set({0, 1}, 3, 20, 4);
  EXPECT_EQ(train.size(), 40u);
  RegressorTrainOptions opt;
  opt.epochs = 2;
  opt.seed = 5;
  LandmarkRegressor a(6, 4), b(6, 4);
  const auto ha = train_regressor(a, train, opt);
  const auto hb = train_regressor(b, train, opt);
  EXPECT_EQ(ha, hb);
  EXPECT_LT(ha.back(), ha.front());
  const auto out = a.regress(data::image_batch<float>(train, {0, 1, 2}));
  EXPECT_EQ(out.shape(), (Shape{3, 136}));
  for (float v : out.values()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  for (const auto& [name, _] : a.state()) EXPECT_EQ(name.rfind("R.", 0), 0u);
  EXPECT_GT(regressor_mae(a, train), 0.0);
}

TEST(Grid, ThreeRows) {
  const Tensor<float> img(Shape{3, 64, 64}, 0.f);
  const auto g = comparison_grid({img, img}, {img, img}, {img, img});
  EXPECT_EQ(g.dim(1), 3 * 64 + 4 * 2);
  EXPECT_EQ(g.dim(2), 2 * 64 + 3 * 2);
}
