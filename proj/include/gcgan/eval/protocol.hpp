#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/data/image_io.hpp"
#include "gcgan/data/render.hpp"
#include "gcgan/eval/metrics.hpp"
#include "gcgan/eval/regressor.hpp"
#include "gcgan/model/embedding.hpp"
#include "gcgan/model/gan.hpp"

namespace gcgan::eval {

using model::EmbeddingNet;
using model::Generator;

enum class ImageNorm { l2, l1 };

inline std::vector<double> to_doubles(const Tensor<float>& t, std::size_t row = 0, std::size_t width = 0) {
  if (width == 0) width = t.size();
  return {t.values().begin() + row * width, t.values().begin() + (row + 1) * width};
}

struct Interpolation {
  std::vector<Tensor<float>> images;        // N+1 images, (3,64,64)
  std::vector<std::vector<float>> z_g;      // N+1 embeddings
};

/// z_g(t) = (t/N) E(g_u) + (1 - t/N) E(g_v), t = 0..N, decoded with z_i of `input`.
inline Interpolation interpolate_expression(const data::LandmarkVector& g_u, const data::LandmarkVector& g_v, int steps,
                                            const Tensor<float>& input, const EmbeddingNet<float>& e,
                                            const Generator<float>& g) {
  if (steps < 1) throw std::invalid_argument("interpolation needs at least one step");
  Tensor<float> pair(nn::Shape{2, data::kLandmarkDims});
  std::copy(g_u.begin(), g_u.end(), pair.values().begin());
  std::copy(g_v.begin(), g_v.end(), pair.values().begin() + data::kLandmarkDims);
  const auto z = e.embed(pair);
  const int d = model::kEmbeddingDim;
  Tensor<float> zs(nn::Shape{steps + 1, d});
  Interpolation out;
  for (int t = 0; t <= steps; ++t) {
    const float a = static_cast<float>(t) / static_cast<float>(steps), b = 1.0f - a;
    std::vector<float> row(d);
    for (int k = 0; k < d; ++k) row[k] = a * z[k] + b * z[d + k];
    std::copy(row.begin(), row.end(), zs.values().begin() + t * d);
    out.z_g.push_back(std::move(row));
  }
  nn::NoGradGuard guard;
  Tensor<float> batch(nn::Shape{steps + 1, 3, data::kImageSize, data::kImageSize});
  for (int t = 0; t <= steps; ++t) std::copy(input.values().begin(), input.values().end(), batch.values().begin() + t * input.size());
  const auto enc = g.encode_identity(Var<float>(batch), Mode::infer);
  const auto imgs = g.generate(enc.z_i, Var<float>(zs), enc.skip, Mode::infer).value();
  for (int t = 0; t <= steps; ++t) out.images.push_back(nn::take_sample(imgs, t));
  return out;
}

struct StepStats {
  int step = 0;
  double mean = 0, median = 0, max = 0;
  std::size_t count = 0;
};

struct LipschitzReport {
  std::vector<std::vector<double>> samples;  // samples[s-1]: rho' between frames s-1 and s
  std::vector<StepStats> steps;
  double global_max = 0;
  std::size_t pairs = 0, skipped = 0;
  bool all_finite = true;
};

inline double image_distance(const Tensor<float>& a, const Tensor<float>& b, ImageNorm norm) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += norm == ImageNorm::l2 ? d * d : std::abs(d);
  }
  return norm == ImageNorm::l2 ? std::sqrt(acc) : acc;
}

/// rho' = |G(z_i, z_g) - G(z_i, z_g')| / ||z_g - z_g'|| between adjacent interpolation frames, for every
/// same-identity ordered emotion pair of the test set. Adjacent frames with identical embeddings are
/// skipped and counted.
inline LipschitzReport lipschitz_report(const data::Dataset& test, const EmbeddingNet<float>& e, const Generator<float>& g,
                                        int steps, ImageNorm norm = ImageNorm::l2) {
  if (test.empty()) throw std::invalid_argument("lipschitz_report: empty test set");
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < test.size(); ++i) by_id[test[i].identity].push_back(i);
  LipschitzReport r;
  r.samples.resize(steps);
  for (const auto& [id, idx] : by_id) {
    for (auto u : idx) {
      for (auto v : idx) {
        if (test[u].emotion == test[v].emotion) continue;
        ++r.pairs;
        const auto path = interpolate_expression(test[u].landmarks, test[v].landmarks, steps, test[u].image, e, g);
        for (int t = 1; t <= steps; ++t) {
          double dz = 0;
          for (std::size_t k = 0; k < path.z_g[t].size(); ++k) {
            const double d = static_cast<double>(path.z_g[t][k]) - path.z_g[t - 1][k];
            dz += d * d;
          }
          dz = std::sqrt(dz);
          if (dz == 0) {
            ++r.skipped;
            continue;
          }
          const double rho = image_distance(path.images[t], path.images[t - 1], norm) / dz;
          if (!std::isfinite(rho)) r.all_finite = false;
          r.samples[t - 1].push_back(rho);
        }
      }
    }
  }
  std::size_t kept = 0;
  for (int s = 0; s < steps; ++s) {
    auto v = r.samples[s];
    StepStats st;
    st.step = s + 1;
    st.count = v.size();
    kept += v.size();
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      double sum = 0;
      for (double x : v) sum += x;
      st.mean = sum / static_cast<double>(v.size());
      st.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
      st.max = v.back();
      r.global_max = std::max(r.global_max, st.max);
    }
    r.steps.push_back(st);
  }
  if (kept == 0) throw nn::NumericError("lipschitz_report: every adjacent pair had a zero embedding distance");
  return r;
}

inline void write_lipschitz_csv(std::ostream& out, const LipschitzReport& r) {
  out << "step,mean,median,max,count\n";
  out.precision(9);
  for (const auto& s : r.steps) out << s.step << ',' << s.mean << ',' << s.median << ',' << s.max << ',' << s.count << '\n';
}

/// Per-step box plot (quartile box, min-max whiskers, median line) as a (3,H,W) image in [-1,1].
inline Tensor<float> box_plot(const std::vector<std::vector<double>>& samples, int height = 240, int column = 24) {
  const int n = static_cast<int>(samples.size());
  const int margin = 10, width = 2 * margin + n * column;
  Tensor<float> img(nn::Shape{3, height, width}, 1.0f);
  double hi = 0;
  for (const auto& s : samples)
    for (double v : s) hi = std::max(hi, v);
  if (hi <= 0) hi = 1;
  auto ypix = [&](double v) { return height - margin - static_cast<int>(std::lround(v / hi * (height - 2 * margin))); };
  auto put = [&](int x, int y, float r, float g, float b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    img[0 * plane + y * width + x] = r, img[plane + y * width + x] = g, img[2 * plane + y * width + x] = b;
  };
  for (int x = margin; x < width - margin; ++x) put(x, height - margin, -1, -1, -1);
  for (int y = margin; y <= height - margin; ++y) put(margin - 1, y, -1, -1, -1);
  for (int s = 0; s < n; ++s) {
    auto v = samples[s];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) { return v[static_cast<std::size_t>(std::lround(p * (v.size() - 1)))]; };
    const int x0 = margin + s * column + 4, x1 = margin + (s + 1) * column - 4, xc = (x0 + x1) / 2;
    for (int y = ypix(v.back()); y <= ypix(v.front()); ++y) put(xc, y, -0.6f, -0.6f, -0.6f);
    for (int y = ypix(q(0.75)); y <= ypix(q(0.25)); ++y)
      for (int x = x0; x <= x1; ++x) put(x, y, -0.2f, 0.2f, 0.8f);
    for (int x = x0; x <= x1; ++x) put(x, ypix(q(0.5)), 0.9f, -0.8f, -0.8f);
  }
  return img;
}

struct ReconstructionMetrics {
  double ssim = 0, psnr = 0;
  std::size_t count = 0;
};

/// Mean SSIM/PSNR of G(I_j^u, g_j^v) against I_j^v over all same-identity ordered emotion pairs.
inline ReconstructionMetrics reconstruction_metrics(const data::Dataset& test, const EmbeddingNet<float>* e,
                                                    const Generator<float>& g, std::size_t batch = 64) {
  const auto triplets = data::assemble_triplets(test, 0);
  ReconstructionMetrics m;
  for (std::size_t s = 0; s < triplets.size(); s += batch) {
    std::vector<std::size_t> in, tgt;
    for (std::size_t i = s; i < std::min(triplets.size(), s + batch); ++i) {
      in.push_back(triplets[i].input);
      tgt.push_back(triplets[i].target);
    }
    const auto images = data::image_batch<float>(test, in);
    Tensor<float> out;
    if (g.is_spg()) {
      std::vector<data::LandmarkVector> lm;
      for (auto t : tgt) lm.push_back(test[t].landmarks);
      out = model::spg_transfer(images, lm, g);
    } else {
      out = model::transfer(images, data::landmark_batch<float>(test, tgt), *e, g);
    }
    for (std::size_t b = 0; b < tgt.size(); ++b) {
      const auto o = nn::take_sample(out, static_cast<int>(b));
      m.ssim += ssim(o, test[tgt[b]].image);
      m.psnr += psnr(o, test[tgt[b]].image);
      ++m.count;
    }
  }
  m.ssim /= static_cast<double>(m.count);
  m.psnr /= static_cast<double>(m.count);
  return m;
}

struct CrossTransfer {
  std::size_t input = 0;    // test-set index of I_j^u
  std::size_t driving = 0;  // test-set index of the driving face (identity k != j)
};

/// `count` random cross-subject pairs (different identities) from the test set.
inline std::vector<CrossTransfer> cross_subject_pairs(const data::Dataset& test, std::size_t count, std::uint64_t seed) {
  if (data::identities_of(test).size() < 2) throw std::invalid_argument("cross-subject transfer needs 2 test identities");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, test.size() - 1);
  std::vector<CrossTransfer> out;
  while (out.size() < count) {
    const std::size_t a = pick(rng), b = pick(rng);
    if (test[a].identity != test[b].identity) out.push_back({a, b});
  }
  return out;
}

/// Cosine similarity of E(regress(generated)) and E(g_driving).
inline double expression_similarity(const Tensor<float>& generated, const data::LandmarkVector& driving,
                                    const EmbeddingNet<float>& e, const LandmarkRegressor& r) {
  Tensor<float> img = generated;
  if (img.rank() == 3) img = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  const auto g_hat = r.regress(img);
  Tensor<float> pair(nn::Shape{2, data::kLandmarkDims});
  std::copy(g_hat.values().begin(), g_hat.values().end(), pair.values().begin());
  std::copy(driving.begin(), driving.end(), pair.values().begin() + data::kLandmarkDims);
  const auto z = e.embed(pair);
  const std::size_t d = model::kEmbeddingDim;
  return cosine_similarity(to_doubles(z, 0, d), to_doubles(z, 1, d));
}

struct IdentityScore {
  double score = 0;
  bool verified = false;
};

/// SSIM against the analytic render of identity `id` wearing the driving expression.
inline IdentityScore identity_preservation(const Tensor<float>& generated, const data::IdentityParams& id,
                                           const data::ExpressionParams& driving, double tau = 0.6) {
  IdentityScore s;
  s.score = ssim(generated, data::render_face(id, driving));
  s.verified = s.score >= tau;
  return s;
}

struct TransferMetrics {
  double identity_rate = 0, identity_ssim = 0, expression_similarity = 0;
  std::size_t count = 0, zero_norm = 0;  // zero-norm embeddings count as similarity 0
};

/// Cross-subject transfer metrics. `e_metric` is the common embedding yardstick for expression
/// similarity; `e_model` conditions the generator (ignored for SPG).
inline TransferMetrics transfer_metrics(const data::Dataset& test, const std::vector<CrossTransfer>& pairs,
                                        const EmbeddingNet<float>* e_model, const Generator<float>& g,
                                        const EmbeddingNet<float>& e_metric, const LandmarkRegressor& r, double tau) {
  TransferMetrics m;
  for (const auto& p : pairs) {
    const auto& src = test.at(p.input);
    const auto& drv = test.at(p.driving);
    if (!src.identity_params || !drv.expression_params) throw std::invalid_argument("transfer_metrics: synthetic samples required");
    const auto image = data::image_batch<float>(test, {p.input});
    const auto out = g.is_spg() ? model::spg_transfer(image, {drv.landmarks}, g)
                                : model::transfer(image, data::landmark_tensor(drv.landmarks), *e_model, g);
    const auto gen = nn::take_sample(out, 0);
    const auto id = identity_preservation(gen, *src.identity_params, *drv.expression_params, tau);
    m.identity_ssim += id.score;
    m.identity_rate += id.verified ? 1 : 0;
    try {
      m.expression_similarity += expression_similarity(gen, drv.landmarks, e_metric, r);
    } catch (const nn::NumericError&) {
      ++m.zero_norm;
    }
    ++m.count;
  }
  m.identity_rate /= static_cast<double>(m.count);
  m.identity_ssim /= static_cast<double>(m.count);
  m.expression_similarity /= static_cast<double>(m.count);
  return m;
}

/// Three-row grid per column: input, generated, ground truth.
inline Tensor<float> comparison_grid(const std::vector<Tensor<float>>& inputs, const std::vector<Tensor<float>>& generated,
                                     const std::vector<Tensor<float>>& truth) {
  std::vector<Tensor<float>> cells;
  for (const auto* row : {&inputs, &generated, &truth}) cells.insert(cells.end(), row->begin(), row->end());
  return data::image_grid(cells, static_cast<int>(inputs.size()));
}

}  // namespace gcgan::eval
