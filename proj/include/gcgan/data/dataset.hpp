#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gcgan/data/face_model.hpp"
#include "gcgan/data/render.hpp"

namespace gcgan::data {

constexpr int kNumEmotions = 6;

enum class Emotion : int { neutral = 0, smile, surprise, disgust, squint, scream };

inline constexpr std::array<const char*, kNumEmotions> kEmotionNames = {"neutral", "smile",  "surprise",
                                                                         "disgust", "squint", "scream"};

/// Fixed expression prototypes, indexed by emotion label.
inline constexpr std::array<std::array<double, 4>, kNumEmotions> kPrototypes = {{
    // openness, curvature, eye openness, brow raise
    {0.00, 0.00, 0.60, 0.00},    // neutral
    {0.15, 0.90, 0.45, 0.20},    // smile
    {0.70, 0.00, 1.00, 1.00},    // surprise
    {0.10, -0.50, 0.30, -0.70},  // disgust
    {0.00, -0.20, 0.15, -0.50},  // squint
    {1.00, -0.60, 0.70, 0.60},   // scream
}};

inline ExpressionParams prototype(int label) {
  if (label < 0 || label >= kNumEmotions) throw ParamError("emotion label out of range: " + std::to_string(label));
  return ExpressionParams::from_array(kPrototypes[label]);
}

struct FaceSample {
  nn::Tensor<float> image;  // (3, 64, 64) in [-1,1]
  LandmarkVector landmarks{};
  int identity = 0;
  int emotion = 0;
  std::optional<IdentityParams> identity_params;
  std::optional<ExpressionParams> expression_params;
};

using Dataset = std::vector<FaceSample>;

/// Identity parameters drawn from a generator seeded by (seed, identity).
inline IdentityParams draw_identity(std::uint64_t seed, int identity) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(identity), 0x1d3u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 8> a{};
  for (auto& v : a) v = u(rng);
  return IdentityParams::from_array(a);
}

inline FaceSample make_sample(const IdentityParams& id, const ExpressionParams& ex, int identity, int emotion) {
  FaceSample s;
  s.image = render_face(id, ex);
  s.landmarks = landmarks_of(id, ex);
  s.identity = identity;
  s.emotion = emotion;
  s.identity_params = id;
  s.expression_params = ex;
  return s;
}

/// Six samples per identity, one per emotion prototype with uniform jitter in [-jitter, jitter]
/// added to every expression component (then clamped to range).
inline Dataset make_dataset(int n_identities, double jitter, std::uint64_t seed) {
  if (n_identities < 2) throw std::invalid_argument("make_dataset: need at least 2 identities");
  if (jitter < 0) throw std::invalid_argument("make_dataset: jitter must be non-negative");
  Dataset out;
  out.reserve(static_cast<std::size_t>(n_identities) * kNumEmotions);
  for (int i = 0; i < n_identities; ++i) {
    const IdentityParams id = draw_identity(seed, i);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), 0x7e1u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int e = 0; e < kNumEmotions; ++e) {
      auto a = kPrototypes[e];
      for (auto& v : a) v += jitter * u(rng);
      out.push_back(make_sample(id, ExpressionParams::from_array(a).clamped(), i, e));
    }
  }
  return out;
}

inline std::vector<int> identities_of(const Dataset& d) {
  std::set<int> ids;
  for (const auto& s : d) ids.insert(s.identity);
  return {ids.begin(), ids.end()};
}

struct Split {
  Dataset train, test;
  std::vector<int> train_ids, test_ids;  // sorted
};

/// Number of train identities: round(fraction * n), kept within [1, n-1].
inline int train_identity_count(int n, double train_fraction) {
  const long r = std::lround(train_fraction * n);
  return static_cast<int>(std::clamp<long>(r, 1, n - 1));
}

/// Person-independent split: identities are shuffled under `seed` and partitioned.
inline Split split_by_identity(const Dataset& d, double train_fraction, std::uint64_t seed) {
  auto ids = identities_of(d);
  if (ids.size() < 2) throw std::invalid_argument("split_by_identity: need at least 2 identities");
  if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("split_by_identity: fraction must be in (0,1)");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int n_train = train_identity_count(static_cast<int>(ids.size()), train_fraction);
  Split s;
  s.train_ids.assign(ids.begin(), ids.begin() + n_train);
  s.test_ids.assign(ids.begin() + n_train, ids.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  const std::set<int> train_set(s.train_ids.begin(), s.train_ids.end());
  for (const auto& sample : d) (train_set.count(sample.identity) ? s.train : s.test).push_back(sample);
  return s;
}

/// Indices into the training set. Input and target always share an identity.
struct TrainingTriplet {
  std::size_t input = 0;      // I_j^u
  std::size_t target = 0;     // g_j^v and the ground-truth image I_j^v
  std::size_t reference = 0;  // g_ref, any training sample
  int target_label = 0;
  int reference_label = 0;
};

/// For every identity and every ordered pair of its samples with different emotions, one triplet
/// with a reference drawn uniformly from the whole set. With `balanced`, the reference shares the
/// target's label with probability 1/2.
inline std::vector<TrainingTriplet> assemble_triplets(const Dataset& train, std::uint64_t seed, bool balanced = false) {
  std::map<int, std::vector<std::size_t>> by_identity;
  std::vector<std::vector<std::size_t>> by_label(kNumEmotions);
  for (std::size_t i = 0; i < train.size(); ++i) {
    by_identity[train[i].identity].push_back(i);
    const int e = train[i].emotion;
    if (e < 0 || e >= kNumEmotions) throw std::invalid_argument("assemble_triplets: invalid emotion label");
    by_label[e].push_back(i);
  }
  for (const auto& [id, idx] : by_identity) {
    std::set<int> labels;
    for (auto i : idx) labels.insert(train[i].emotion);
    if (labels.size() < 2)
      throw std::invalid_argument("assemble_triplets: identity " + std::to_string(id) + " has fewer than 2 emotions");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> any(0, train.size() - 1);
  std::bernoulli_distribution coin(0.5);
  auto draw_reference = [&](int target_label) -> std::size_t {
    if (!balanced) return any(rng);
    const bool same = coin(rng);
    for (;;) {
      const std::size_t r = any(rng);
      if ((train[r].emotion == target_label) == same) return r;
      if (same && by_label[target_label].empty()) return r;
    }
  };
  std::vector<TrainingTriplet> out;
  for (const auto& [id, idx] : by_identity) {
    for (auto u : idx) {
      for (auto v : idx) {
        if (train[u].emotion == train[v].emotion) continue;
        const std::size_t r = draw_reference(train[v].emotion);
        out.push_back({u, v, r, train[v].emotion, train[r].emotion});
      }
    }
  }
  return out;
}

}  // namespace gcgan::data
