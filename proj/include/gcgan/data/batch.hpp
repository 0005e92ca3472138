#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gcgan/data/dataset.hpp"

namespace gcgan::data {

/// Stacks landmark vectors of the selected samples into (B, 136).
template <typename T = float>
nn::Tensor<T> landmark_batch(const Dataset& d, const std::vector<std::size_t>& idx) {
  nn::Tensor<T> out(nn::Shape{static_cast<int>(idx.size()), kLandmarkDims});
  for (std::size_t b = 0; b < idx.size(); ++b)
    for (int i = 0; i < kLandmarkDims; ++i) out[b * kLandmarkDims + i] = static_cast<T>(d.at(idx[b]).landmarks[i]);
  return out;
}

inline nn::Tensor<float> landmark_tensor(const LandmarkVector& g) {
  return nn::Tensor<float>(nn::Shape{1, kLandmarkDims}, std::vector<float>(g.begin(), g.end()));
}

/// Stacks images of the selected samples into (B, 3, 64, 64).
template <typename T = float>
nn::Tensor<T> image_batch(const Dataset& d, const std::vector<std::size_t>& idx) {
  const std::size_t per = static_cast<std::size_t>(3) * kImageSize * kImageSize;
  nn::Tensor<T> out(nn::Shape{static_cast<int>(idx.size()), 3, kImageSize, kImageSize});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& img = d.at(idx[b]).image;
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] = static_cast<T>(img[i]);
  }
  return out;
}

/// Generator for epoch `epoch` of a run seeded with `seed`; independent of earlier epochs so a
/// resumed run draws the same numbers.
inline std::mt19937_64 epoch_rng(std::uint64_t seed, long epoch, std::uint32_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), stream};
  return std::mt19937_64(seq);
}

/// Consecutive batches of a permutation of 0..n-1. Batches smaller than `min_batch` are dropped.
inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, std::mt19937_64& rng,
                                                              std::size_t min_batch = 2) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    const std::size_t e = std::min(n, s + batch);
    if (e - s >= min_batch) out.emplace_back(order.begin() + s, order.begin() + e);
  }
  return out;
}

}  // namespace gcgan::data
