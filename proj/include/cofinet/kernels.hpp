#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops used by the tensor ops. Every kernel exists as a portable
// scalar reference and, where the CPU allows it, an AVX2/FMA variant. The
// variant is picked once at startup (override with COFINET_SIMD=scalar) and
// can be switched at runtime for equivalence testing.
namespace cofi::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Best ISA the running CPU supports.
Isa detected_isa();
Isa active_isa();
// Throws ConfigError if the CPU lacks the requested ISA.
void set_isa(Isa isa);

template <typename T>
struct Table {
  // C(m×n) = [C +] op(A)·op(B); op(A) is m×k, op(B) is k×n, all row-major.
  void (*gemm)(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
               int ldb, T* c, int ldc, bool accumulate);
  // y += alpha·x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // out = a·b, out = a + b (elementwise)
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  T (*dot)(std::size_t n, const T* a, const T* b);
};

template <typename T>
const Table<T>& table(Isa isa);

template <typename T>
const Table<T>& table() {
  return table<T>(active_isa());
}

// RAII switch used by tests and benchmarks.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// Flush subnormal floats to zero (FTZ/DAZ) for the lifetime of the guard.
// Late in training many gradients sink into the subnormal range, where x86
// arithmetic is an order of magnitude slower. No-op off x86.
class ScopedFlushDenormals {
 public:
  ScopedFlushDenormals();
  ~ScopedFlushDenormals();
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
  unsigned previous_ = 0;
};

}  // namespace cofi::kernels
