#include "kernels_impl.hpp"

namespace cofi::kernels::scalar {
namespace {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    }
    const T* arow = a + static_cast<std::size_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

// C = A·Bᵀ with B stored n×k.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * lda;
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * ldb;
      T s = 0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void gemm_nn_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate) {
  gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nn_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate) {
  gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate) {
  gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate) {
  gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void axpy_f32(std::size_t n, float alpha, const float* x, float* y) { axpy(n, alpha, x, y); }
void axpy_f64(std::size_t n, double alpha, const double* x, double* y) { axpy(n, alpha, x, y); }
void mul_f32(std::size_t n, const float* a, const float* b, float* out) { mul(n, a, b, out); }
void mul_f64(std::size_t n, const double* a, const double* b, double* out) { mul(n, a, b, out); }
void add_f32(std::size_t n, const float* a, const float* b, float* out) { add(n, a, b, out); }
void add_f64(std::size_t n, const double* a, const double* b, double* out) { add(n, a, b, out); }
float dot_f32(std::size_t n, const float* a, const float* b) { return dot(n, a, b); }
double dot_f64(std::size_t n, const double* a, const double* b) { return dot(n, a, b); }

}  // namespace cofi::kernels::scalar
