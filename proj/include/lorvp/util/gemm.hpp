#pragma once

#include <cstddef>

namespace lorvp::kernel {

// C[M,N] (+)= op(A) * op(B), row-major, op = optional transpose.
// A is [M,K] (or [K,M] when trans_a); B is [K,N] (or [N,K] when trans_b).
// Loop orders keep the innermost access contiguous for each layout.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A,
          const T* B, T* C, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < M * N; ++i) C[i] = T(0);
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < M; ++i) {
      T* c = C + i * N;
      for (std::size_t p = 0; p < K; ++p) {
        const T a = A[i * K + p];
        if (a == T(0)) continue;
        const T* b = B + p * N;
        for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < M; ++i) {
      const T* a = A + i * K;
      for (std::size_t j = 0; j < N; ++j) {
        const T* b = B + j * K;
        T acc = T(0);
        for (std::size_t p = 0; p < K; ++p) acc += a[p] * b[p];
        C[i * N + j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < K; ++p) {
      const T* b = B + p * N;
      for (std::size_t i = 0; i < M; ++i) {
        const T a = A[p * M + i];
        if (a == T(0)) continue;
        T* c = C + i * N;
        for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        T acc = T(0);
        for (std::size_t p = 0; p < K; ++p) acc += A[p * M + i] * B[j * K + p];
        C[i * N + j] += acc;
      }
    }
  }
}

}  // namespace lorvp::kernel
