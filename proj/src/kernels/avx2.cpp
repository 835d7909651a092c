// Compiled with -mavx2 -mfma. Only reached through the dispatcher after a
// CPUID check, so nothing here may leak into code that runs unconditionally:
// keep to intrinsics, raw pointers and internal-linkage helpers.
#include <immintrin.h>

#include "kernels_impl.hpp"

namespace cofi::kernels::avx2 {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  using M = __m256i;
  static constexpr int kWidth = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static M mask(int count) {
    return _mm256_cmpgt_epi32(_mm256_set1_epi32(count), _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7));
  }
  static V mload(const T* p, M m) { return _mm256_maskload_ps(p, m); }
  static void mstore(T* p, M m, V v) { _mm256_maskstore_ps(p, m, v); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  using M = __m256i;
  static constexpr int kWidth = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static M mask(int count) {
    return _mm256_cmpgt_epi64(_mm256_set1_epi64x(count), _mm256_setr_epi64x(0, 1, 2, 3));
  }
  static V mload(const T* p, M m) { return _mm256_maskload_pd(p, m); }
  static void mstore(T* p, M m, V v) { _mm256_maskstore_pd(p, m, v); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// R rows × (2·width) columns register tile. When kFull is false only `cols`
// leading columns are touched.
template <class Tr, int R, bool kFull>
inline void tile(int k, const typename Tr::T* a, int lda, const typename Tr::T* b, int ldb,
                 typename Tr::T* c, int ldc, bool accumulate, int cols) {
  using V = typename Tr::V;
  constexpr int W = Tr::kWidth;
  V s0[R];
  V s1[R];
  for (int r = 0; r < R; ++r) {
    s0[r] = Tr::zero();
    s1[r] = Tr::zero();
  }
  typename Tr::M m0{};
  typename Tr::M m1{};
  if constexpr (!kFull) {
    m0 = Tr::mask(cols < W ? cols : W);
    m1 = Tr::mask(cols - W);
  }
  for (int p = 0; p < k; ++p) {
    const typename Tr::T* bp = b + static_cast<long>(p) * ldb;
    V b0;
    V b1;
    if constexpr (kFull) {
      b0 = Tr::load(bp);
      b1 = Tr::load(bp + W);
    } else {
      b0 = Tr::mload(bp, m0);
      b1 = Tr::mload(bp + W, m1);
    }
    for (int r = 0; r < R; ++r) {
      const V av = Tr::set1(a[static_cast<long>(r) * lda + p]);
      s0[r] = Tr::fma(av, b0, s0[r]);
      s1[r] = Tr::fma(av, b1, s1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    typename Tr::T* cp = c + static_cast<long>(r) * ldc;
    if constexpr (kFull) {
      if (accumulate) {
        s0[r] = Tr::add(s0[r], Tr::load(cp));
        s1[r] = Tr::add(s1[r], Tr::load(cp + W));
      }
      Tr::store(cp, s0[r]);
      Tr::store(cp + W, s1[r]);
    } else {
      if (accumulate) {
        s0[r] = Tr::add(s0[r], Tr::mload(cp, m0));
        s1[r] = Tr::add(s1[r], Tr::mload(cp + W, m1));
      }
      Tr::mstore(cp, m0, s0[r]);
      Tr::mstore(cp + W, m1, s1[r]);
    }
  }
}

template <class Tr, int R>
inline void row_block(int n, int k, const typename Tr::T* a, int lda, const typename Tr::T* b,
                      int ldb, typename Tr::T* c, int ldc, bool accumulate) {
  constexpr int kPanel = 2 * Tr::kWidth;
  int j = 0;
  for (; j + kPanel <= n; j += kPanel) {
    tile<Tr, R, true>(k, a, lda, b + j, ldb, c + j, ldc, accumulate, kPanel);
  }
  if (j < n) tile<Tr, R, false>(k, a, lda, b + j, ldb, c + j, ldc, accumulate, n - j);
}

template <class Tr>
void gemm_nn(int m, int n, int k, const typename Tr::T* a, int lda, const typename Tr::T* b,
             int ldb, typename Tr::T* c, int ldc, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    row_block<Tr, 4>(n, k, a + static_cast<long>(i) * lda, lda, b, ldb,
                     c + static_cast<long>(i) * ldc, ldc, accumulate);
  }
  for (; i < m; ++i) {
    row_block<Tr, 1>(n, k, a + static_cast<long>(i) * lda, lda, b, ldb,
                     c + static_cast<long>(i) * ldc, ldc, accumulate);
  }
}

template <class Tr>
void axpy(std::size_t n, typename Tr::T alpha, const typename Tr::T* x, typename Tr::T* y) {
  constexpr std::size_t W = Tr::kWidth;
  const auto av = Tr::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) Tr::store(y + i, Tr::fma(av, Tr::load(x + i), Tr::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class Tr>
void mul(std::size_t n, const typename Tr::T* a, const typename Tr::T* b, typename Tr::T* out) {
  constexpr std::size_t W = Tr::kWidth;
  std::size_t i = 0;
  for (; i + W <= n; i += W) Tr::store(out + i, Tr::mul(Tr::load(a + i), Tr::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <class Tr>
void add(std::size_t n, const typename Tr::T* a, const typename Tr::T* b, typename Tr::T* out) {
  constexpr std::size_t W = Tr::kWidth;
  std::size_t i = 0;
  for (; i + W <= n; i += W) Tr::store(out + i, Tr::add(Tr::load(a + i), Tr::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

// C = A·Bᵀ with B stored n×k: four dot products per pass over a row of A.
template <class Tr>
void gemm_nt(int m, int n, int k, const typename Tr::T* a, int lda, const typename Tr::T* b, int ldb,
             typename Tr::T* c, int ldc, bool accumulate) {
  using T = typename Tr::T;
  using V = typename Tr::V;
  constexpr int W = Tr::kWidth;
  const int kfull = k - k % W;
  const typename Tr::M tail = Tr::mask(k - kfull);
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * lda;
    T* ci = c + static_cast<std::size_t>(i) * ldc;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + static_cast<std::size_t>(j) * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      V s0 = Tr::zero();
      V s1 = Tr::zero();
      V s2 = Tr::zero();
      V s3 = Tr::zero();
      for (int p = 0; p < kfull; p += W) {
        const V av = Tr::load(ai + p);
        s0 = Tr::fma(av, Tr::load(b0 + p), s0);
        s1 = Tr::fma(av, Tr::load(b1 + p), s1);
        s2 = Tr::fma(av, Tr::load(b2 + p), s2);
        s3 = Tr::fma(av, Tr::load(b3 + p), s3);
      }
      if (kfull < k) {
        const V av = Tr::mload(ai + kfull, tail);
        s0 = Tr::fma(av, Tr::mload(b0 + kfull, tail), s0);
        s1 = Tr::fma(av, Tr::mload(b1 + kfull, tail), s1);
        s2 = Tr::fma(av, Tr::mload(b2 + kfull, tail), s2);
        s3 = Tr::fma(av, Tr::mload(b3 + kfull, tail), s3);
      }
      const T r[4] = {Tr::hsum(s0), Tr::hsum(s1), Tr::hsum(s2), Tr::hsum(s3)};
      for (int q = 0; q < 4; ++q) ci[j + q] = accumulate ? ci[j + q] + r[q] : r[q];
    }
    for (; j < n; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * ldb;
      V s = Tr::zero();
      for (int p = 0; p < kfull; p += W) s = Tr::fma(Tr::load(ai + p), Tr::load(bj + p), s);
      if (kfull < k) s = Tr::fma(Tr::mload(ai + kfull, tail), Tr::mload(bj + kfull, tail), s);
      const T r = Tr::hsum(s);
      ci[j] = accumulate ? ci[j] + r : r;
    }
  }
}

template <class Tr>
typename Tr::T dot(std::size_t n, const typename Tr::T* a, const typename Tr::T* b) {
  constexpr std::size_t W = Tr::kWidth;
  auto acc = Tr::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc = Tr::fma(Tr::load(a + i), Tr::load(b + i), acc);
  typename Tr::T s = Tr::hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void gemm_nn_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate) {
  gemm_nn<F32>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nn_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate) {
  gemm_nn<F64>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate) {
  gemm_nt<F32>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate) {
  gemm_nt<F64>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void axpy_f32(std::size_t n, float alpha, const float* x, float* y) { axpy<F32>(n, alpha, x, y); }
void axpy_f64(std::size_t n, double alpha, const double* x, double* y) { axpy<F64>(n, alpha, x, y); }
void mul_f32(std::size_t n, const float* a, const float* b, float* out) { mul<F32>(n, a, b, out); }
void mul_f64(std::size_t n, const double* a, const double* b, double* out) { mul<F64>(n, a, b, out); }
void add_f32(std::size_t n, const float* a, const float* b, float* out) { add<F32>(n, a, b, out); }
void add_f64(std::size_t n, const double* a, const double* b, double* out) { add<F64>(n, a, b, out); }
float dot_f32(std::size_t n, const float* a, const float* b) { return dot<F32>(n, a, b); }
double dot_f64(std::size_t n, const double* a, const double* b) { return dot<F64>(n, a, b); }

}  // namespace cofi::kernels::avx2
