#pragma once

// Raw-pointer entry points shared between the dispatcher and the per-ISA
// translation units. The AVX2 unit is compiled with -mavx2 -mfma and must not
// instantiate any inline/template code from the standard library, so only
// plain declarations live here.

#include <cstddef>

namespace cofi::kernels::scalar {
void gemm_nn_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate);
void gemm_nn_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate);
// B stored n×k (C = A·Bᵀ).
void gemm_nt_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate);
void gemm_nt_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate);
void axpy_f32(std::size_t n, float alpha, const float* x, float* y);
void axpy_f64(std::size_t n, double alpha, const double* x, double* y);
void mul_f32(std::size_t n, const float* a, const float* b, float* out);
void mul_f64(std::size_t n, const double* a, const double* b, double* out);
void add_f32(std::size_t n, const float* a, const float* b, float* out);
void add_f64(std::size_t n, const double* a, const double* b, double* out);
float dot_f32(std::size_t n, const float* a, const float* b);
double dot_f64(std::size_t n, const double* a, const double* b);
}  // namespace cofi::kernels::scalar

namespace cofi::kernels::avx2 {
void gemm_nn_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate);
void gemm_nn_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate);
// B stored n×k (C = A·Bᵀ).
void gemm_nt_f32(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate);
void gemm_nt_f64(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc, bool accumulate);
void axpy_f32(std::size_t n, float alpha, const float* x, float* y);
void axpy_f64(std::size_t n, double alpha, const double* x, double* y);
void mul_f32(std::size_t n, const float* a, const float* b, float* out);
void mul_f64(std::size_t n, const double* a, const double* b, double* out);
void add_f32(std::size_t n, const float* a, const float* b, float* out);
void add_f64(std::size_t n, const double* a, const double* b, double* out);
float dot_f32(std::size_t n, const float* a, const float* b);
double dot_f64(std::size_t n, const double* a, const double* b);
}  // namespace cofi::kernels::avx2
