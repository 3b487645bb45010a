#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lorvp/tensor/ops.hpp"

namespace lorvp {

/// Mean negative log-likelihood of `labels` under softmax(logits),
/// logits [B, K]. Fused with log-softmax for stability.
template <Real T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [batch, classes] logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) throw ShapeError("cross_entropy: label count differs from batch size");
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw DataError("label " + std::to_string(labels[b]) + " outside [0," + std::to_string(K) + ")");
    }
  }
  const auto x = logits.data();
  std::vector<T> probs(B * K);
  T total = T(0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = x.data() + b * K;
    const T mx = *std::max_element(row, row + K);
    T z = T(0);
    for (std::size_t j = 0; j < K; ++j) {
      probs[b * K + j] = std::exp(row[j] - mx);
      z += probs[b * K + j];
    }
    for (std::size_t j = 0; j < K; ++j) probs[b * K + j] /= z;
    total += mx + std::log(z) - row[labels[b]];
  }
  const T loss = B == 0 ? T(0) : total / static_cast<T>(B);
  auto pl = logits.impl();
  std::vector<int> y(labels.begin(), labels.end());
  return detail::finish<T>("cross_entropy", Shape{}, {loss}, {pl}, [&](const ImplPtr<T>&) {
    return [pl, probs = std::move(probs), y = std::move(y), B, K](const std::vector<T>& g) {
      auto& gl = detail::grad_buffer(*pl);
      const T s = g[0] / static_cast<T>(B);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < K; ++j) {
          const T onehot = static_cast<int>(j) == y[b] ? T(1) : T(0);
          gl[b * K + j] += s * (probs[b * K + j] - onehot);
        }
      }
    };
  });
}

/// Number of rows whose argmax equals the label (first max wins ties).
template <Real T>
std::size_t count_correct(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t K = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = logits.data().subspan(b * K, K);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[b]) ++correct;
  }
  return correct;
}

}  // namespace lorvp
