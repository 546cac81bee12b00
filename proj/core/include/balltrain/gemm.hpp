#pragma once

#include <cstddef>
#include <vector>

namespace balltrain {

// C[m x n] = A[m x k] * B[k x n], row-major. ikj loop order: the inner j
// loop vectorizes and the reduction over p stays in a fixed order per
// output element, so results are bit-stable run to run.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
             T* c, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[n x m] = transpose of a[m x n]
template <typename T>
std::vector<T> transpose(std::size_t m, std::size_t n, const T* a) {
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

// C[m x n] = A^T * B where A is [k x m]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
             T* c, bool accumulate = false) {
  auto at = transpose(k, m, a);
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

// C[m x n] = A * B^T where B is [n x k]
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
             T* c, bool accumulate = false) {
  auto bt = transpose(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace balltrain
