#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cofinet/kernels.hpp"
#include "cofinet/ops.hpp"
#include "support.hpp"

using namespace cofi;
using kernels::Isa;

namespace {

bool have_avx2() { return kernels::detected_isa() == Isa::kAvx2; }

template <typename T>
std::vector<T> rand_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

template <typename T>
double rel_gap(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(double(a[i]) - double(b[i]));
    worst = std::max(worst, d / (1.0 + std::abs(double(b[i]))));
  }
  return worst;
}

template <typename T>
void check_gemm(bool ta, bool tb, int m, int n, int k, bool acc, double tol) {
  const int lda = ta ? m : k;
  const int ldb = tb ? k : n;
  const auto a = rand_vec<T>(static_cast<std::size_t>(m) * k, 1 + m);
  const auto b = rand_vec<T>(static_cast<std::size_t>(k) * n, 2 + n);
  auto c0 = rand_vec<T>(static_cast<std::size_t>(m) * n, 3 + k);
  auto c1 = c0;
  kernels::table<T>(Isa::kScalar).gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c0.data(), n, acc);
  kernels::table<T>(Isa::kAvx2).gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c1.data(), n, acc);

  // Plain triple loop as the ground truth for the scalar table.
  auto c2 = rand_vec<T>(static_cast<std::size_t>(m) * n, 3 + k);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = acc ? double(c2[i * n + j]) : 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[p * lda + i] : a[i * lda + p];
        const double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c2[i * n + j] = static_cast<T>(s);
    }
  INFO("ta=" << ta << " tb=" << tb << " m=" << m << " n=" << n << " k=" << k << " acc=" << acc);
  CHECK(rel_gap(c0, c2) < tol);
  CHECK(rel_gap(c1, c0) < tol);
}

}  // namespace

TEST_CASE("gemm: scalar and avx2 agree for every transpose combination") {
  if (!have_avx2()) {
    MESSAGE("CPU lacks AVX2; equivalence not exercised");
    return;
  }
  // k = 7 and 9 stay below the dedicated NT depth, 16 and 75 use it.
  const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 16}, {33, 31, 75}, {64, 40, 130}};
  for (bool ta : {false, true})
    for (bool tb : {false, true})
      for (bool acc : {false, true})
        for (const auto& s : shapes) {
          check_gemm<float>(ta, tb, s[0], s[1], s[2], acc, 1e-5);
          check_gemm<double>(ta, tb, s[0], s[1], s[2], acc, 1e-12);
        }
}

TEST_CASE("vector kernels: scalar and avx2 agree") {
  if (!have_avx2()) return;
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u}) {
    const auto a = rand_vec<float>(n, 11);
    const auto b = rand_vec<float>(n, 12);
    const auto& s = kernels::table<float>(Isa::kScalar);
    const auto& v = kernels::table<float>(Isa::kAvx2);
    std::vector<float> o0(n), o1(n);
    s.mul(n, a.data(), b.data(), o0.data());
    v.mul(n, a.data(), b.data(), o1.data());
    CHECK(o0 == o1);
    s.add(n, a.data(), b.data(), o0.data());
    v.add(n, a.data(), b.data(), o1.data());
    CHECK(o0 == o1);
    std::vector<float> y0 = b, y1 = b;
    s.axpy(n, 0.37f, a.data(), y0.data());
    v.axpy(n, 0.37f, a.data(), y1.data());
    CHECK(rel_gap(y1, y0) < 1e-6);
    CHECK(std::abs(s.dot(n, a.data(), b.data()) - v.dot(n, a.data(), b.data())) < 1e-4);

    const auto ad = rand_vec<double>(n, 13);
    const auto bd = rand_vec<double>(n, 14);
    CHECK(std::abs(kernels::table<double>(Isa::kScalar).dot(n, ad.data(), bd.data()) -
                   kernels::table<double>(Isa::kAvx2).dot(n, ad.data(), bd.data())) < 1e-12);
  }
}

TEST_CASE("conv2d forward and backward match across ISAs") {
  if (!have_avx2()) return;
  for (auto g : {ConvGeometry{1, 1, 1}, ConvGeometry{2, 2, 2}, ConvGeometry{1, 0, 1}}) {
    const int k = g.padding == 0 ? 1 : 3;
    auto run = [&](Isa isa) {
      kernels::ScopedIsa scope(isa);
      auto x = testing::random_tensor<float>({3, 5, 9, 9}, 1);
      auto w = testing::random_tensor<float>({6, 5, k, k}, 2);
      auto b = testing::random_tensor<float>({1, 6, 1, 1}, 3);
      x.set_requires_grad();
      w.set_requires_grad();
      b.set_requires_grad();
      auto y = conv2d(x, w, &b, g);
      mean(mul(y, y)).backward();
      std::vector<float> all(y.data().begin(), y.data().end());
      for (auto* t : {&x, &w, &b}) all.insert(all.end(), t->grad().begin(), t->grad().end());
      return all;
    };
    const auto s = run(Isa::kScalar);
    const auto v = run(Isa::kAvx2);
    CHECK(rel_gap(v, s) < 1e-5);
  }
}

TEST_CASE("isa override is honoured and reversible") {
  const Isa before = kernels::active_isa();
  {
    kernels::ScopedIsa scope(Isa::kScalar);
    CHECK(kernels::active_isa() == Isa::kScalar);
  }
  CHECK(kernels::active_isa() == before);
  CHECK(kernels::isa_name(Isa::kScalar) == "scalar");
}

TEST_CASE("denormal guard flushes subnormals and restores the mode") {
  volatile float tiny = std::numeric_limits<float>::min();
  volatile float half = 0.5f;
  const float before = tiny * half;
  CHECK(before > 0.0f);
  {
    const kernels::ScopedFlushDenormals ftz;
    const float flushed = tiny * half;
#if defined(__x86_64__) || defined(__i386__)
    CHECK(flushed == 0.0f);
#else
    CHECK(flushed >= 0.0f);
#endif
  }
  CHECK(tiny * half == before);
}
