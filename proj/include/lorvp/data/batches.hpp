#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "lorvp/errors.hpp"
#include "lorvp/tensor/tensor.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

/// Index batches over n samples. With shuffle, each epoch draws its own
/// seeded permutation; the last partial batch is kept.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     bool shuffle, std::size_t epoch = 0) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  if (shuffle) {
    Rng rng(mix_seed(seed, epoch));
    order = rng.permutation(n);
  } else {
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  return out;
}

/// Copies the selected leading-axis rows of `source` into a new tensor.
template <Real T, Real S>
Tensor<T> take_rows(const Tensor<S>& source, std::span<const std::size_t> rows) {
  const std::size_t row = source.numel() / std::max<std::size_t>(1, source.dim(0));
  std::vector<T> out(rows.size() * row);
  const auto x = source.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.begin() + static_cast<long>(rows[i] * row), x.begin() + static_cast<long>((rows[i] + 1) * row),
              out.begin() + static_cast<long>(i * row));
  }
  Shape shape = source.shape();
  shape[0] = rows.size();
  return Tensor<T>(std::move(shape), std::move(out));
}

inline std::vector<int> take_labels(const std::vector<int>& labels, std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

/// Mirrors each image of a [B, c, h, w] tensor left-right with probability
/// 1/2, drawing from `rng`.
template <Real T>
void random_horizontal_flip(Tensor<T>& images, Rng& rng) {
  const std::size_t B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  auto x = images.mutable_data();
  for (std::size_t b = 0; b < B; ++b) {
    if (rng.uniform() >= 0.5) continue;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y) {
        auto row = x.subspan(((b * C + c) * H + y) * W, W);
        std::reverse(row.begin(), row.end());
      }
  }
}

}  // namespace lorvp
