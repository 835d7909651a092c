#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "cofinet/error.hpp"
#include "cofinet/kernels.hpp"
#include "kernels_impl.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <xmmintrin.h>
#define COFI_HAVE_MXCSR 1
#endif

namespace cofi::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const char* env = std::getenv("COFINET_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return detected_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

template <typename T>
void transpose_into(std::vector<T>& out, const T* src, int rows, int cols, int ld) {
  // src is rows×cols with leading dimension ld; out becomes cols×rows.
  // 32×32 blocks keep both sides in cache.
  constexpr int kBlock = 32;
  out.resize(static_cast<std::size_t>(rows) * cols);
  for (int r0 = 0; r0 < rows; r0 += kBlock) {
    const int r1 = r0 + kBlock < rows ? r0 + kBlock : rows;
    for (int c0 = 0; c0 < cols; c0 += kBlock) {
      const int c1 = c0 + kBlock < cols ? c0 + kBlock : cols;
      for (int r = r0; r < r1; ++r) {
        const T* s = src + static_cast<std::size_t>(r) * ld;
        for (int c = c0; c < c1; ++c) out[static_cast<std::size_t>(c) * rows + r] = s[c];
      }
    }
  }
}

// Below this depth a transposed copy of B plus the NN kernel beats dot products.
constexpr int kNtMinDepth = 16;

template <typename T, auto Core, auto CoreNt>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T* c, int ldc, bool accumulate) {
  thread_local std::vector<T> pack_a;
  thread_local std::vector<T> pack_b;
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::memset(c + static_cast<std::size_t>(i) * ldc, 0, sizeof(T) * n);
    }
    return;
  }
  if (trans_a) {
    // A is stored k×m.
    transpose_into(pack_a, a, k, m, lda);
    a = pack_a.data();
    lda = k;
  }
  if (trans_b && k >= kNtMinDepth) {
    CoreNt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    return;
  }
  if (trans_b) {
    // B is stored n×k.
    transpose_into(pack_b, b, n, k, ldb);
    b = pack_b.data();
    ldb = n;
  }
  Core(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

const Table<float> kScalarF32{&gemm<float, scalar::gemm_nn_f32, scalar::gemm_nt_f32>, scalar::axpy_f32, scalar::mul_f32,
                              scalar::add_f32, scalar::dot_f32};
const Table<double> kScalarF64{&gemm<double, scalar::gemm_nn_f64, scalar::gemm_nt_f64>, scalar::axpy_f64,
                               scalar::mul_f64, scalar::add_f64, scalar::dot_f64};
const Table<float> kAvx2F32{&gemm<float, avx2::gemm_nn_f32, avx2::gemm_nt_f32>, avx2::axpy_f32, avx2::mul_f32,
                            avx2::add_f32, avx2::dot_f32};
const Table<double> kAvx2F64{&gemm<double, avx2::gemm_nn_f64, avx2::gemm_nt_f64>, avx2::axpy_f64, avx2::mul_f64,
                             avx2::add_f64, avx2::dot_f64};

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const bool has_avx2 = cpu_has_avx2();
  return has_avx2 ? Isa::kAvx2 : Isa::kScalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) {
    throw ConfigError("kernels: CPU does not support avx2+fma");
  }
  current().store(isa, std::memory_order_relaxed);
}

template <>
const Table<float>& table<float>(Isa isa) {
  return isa == Isa::kAvx2 ? kAvx2F32 : kScalarF32;
}

template <>
const Table<double>& table<double>(Isa isa) {
  return isa == Isa::kAvx2 ? kAvx2F64 : kScalarF64;
}

ScopedFlushDenormals::ScopedFlushDenormals() {
#ifdef COFI_HAVE_MXCSR
  previous_ = _mm_getcsr();
  _mm_setcsr(previous_ | 0x8040u);  // FTZ | DAZ
#endif
}

ScopedFlushDenormals::~ScopedFlushDenormals() {
#ifdef COFI_HAVE_MXCSR
  _mm_setcsr(previous_);
#endif
}

}  // namespace cofi::kernels
