#include <doctest.h>

#include <cmath>

#include "cofinet/error.hpp"
#include "cofinet/mskm.hpp"
#include "reference/naive.hpp"
#include "support.hpp"

using namespace cofi;
using testing::random_tensor;

namespace {

void fill(Tensor<double>& t, double v) {
  for (double& x : t.mutable_data()) x = v;
}

// Width of the columns (and rows) where `a` and `b` differ.
std::pair<int, int> support_width(const TensorD& a, const TensorD& b) {
  const Shape s = a.shape();
  int r0 = s.h, r1 = -1, c0 = s.w, c1 = -1;
  for (int c = 0; c < s.c; ++c)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j)
        if (a.at(0, c, i, j) != b.at(0, c, i, j)) {
          r0 = std::min(r0, i);
          r1 = std::max(r1, i);
          c0 = std::min(c0, j);
          c1 = std::max(c1, j);
        }
  return {r1 - r0 + 1, c1 - c0 + 1};
}

}  // namespace

TEST_CASE("mac: shape preserved over a configuration grid") {
  int configs = 0;
  for (int c : {4, 8, 12})
    for (int n : {1, 2, 4})
      for (int k : {1, 3, 7})
        for (int d : {1, 2}) {
          if (c % n != 0) continue;
          const auto all = default_mac_kinds();
          const std::vector<Act> kinds(all.begin(), all.begin() + n);
          ParamStore<double> store(configs);
          Mac<double> mac(store, "mac", c, kinds, k, d);
          const auto z = random_tensor<double>({2, c, 9, 7}, configs);
          CHECK(mac(z).shape() == z.shape());
          ++configs;
        }
  CHECK(configs >= 12);
}

TEST_CASE("mac: channel count must divide by the activation count") {
  ParamStore<double> store(0);
  CHECK_THROWS_AS(Mac<double>(store, "mac", 6, default_mac_kinds(), 7, 1), ConfigError);
}

TEST_CASE("mac: zero alphas give zeros") {
  ParamStore<double> store(1);
  Mac<double> mac(store, "mac", 8, default_mac_kinds(), 3, 1);
  fill(mac.alphas, 0.0);
  for (double v : testing::values(mac(random_tensor<double>({1, 8, 6, 6}, 2)))) CHECK(v == 0.0);
}

TEST_CASE("mac: single identity branch is the shared conv") {
  ParamStore<double> store(2);
  Mac<double> mac(store, "mac", 3, {Act::kIdentity}, 3, 1);
  for (double v : mac.alphas.data()) CHECK(v == 1.0);
  const auto z = random_tensor<double>({1, 3, 5, 5}, 3);
  CHECK(testing::values(mac(z)) == testing::values(mac.conv(z)));
  CHECK(ref::max_abs_diff(mac(z), ref::conv(ref::from(z), mac.conv)) < 1e-12);
}

TEST_CASE("mac: blockwise oracle, 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore<double> store(seed);
    Mac<double> mac(store, "mac", 8, default_mac_kinds(), 7, 1 + static_cast<int>(seed % 2));
    auto a = mac.alphas.mutable_data();
    Rng rng(seed);
    for (double& v : a) v = rng.uniform(-2, 2);
    const auto z = random_tensor<double>({2, 8, 9, 9}, seed + 50);
    CHECK(ref::max_abs_diff(mac(z), ref::mac(mac, ref::from(z))) < 1e-5);
  }
}

TEST_CASE("mskm: straight-line composition oracle, 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore<double> store(seed + 100);
    Mskm<double> m(store, "mskm", 8);
    const auto z = random_tensor<double>({1, 8, 8, 8}, seed);
    const auto t = m.trace(z);
    const auto r = ref::mskm(m, ref::from(z));
    CHECK(ref::max_abs_diff(t.g1, r.g1) < 1e-5);
    CHECK(ref::max_abs_diff(t.g2, r.g2) < 1e-5);
    CHECK(ref::max_abs_diff(t.g3, r.g3) < 1e-5);
    CHECK(ref::max_abs_diff(t.selection, r.selection) < 1e-5);
    CHECK(ref::max_abs_diff(t.out, r.out) < 1e-5);
    CHECK(t.out.shape() == z.shape());
  }
}

TEST_CASE("mskm: trace invariants") {
  ParamStore<double> store(3);
  Mskm<double> m(store, "mskm", 8);
  const auto t = m.trace(random_tensor<double>({2, 8, 6, 6}, 4));
  CHECK(t.selection.shape() == Shape{2, 3, 6, 6});
  for (double v : t.selection.data()) CHECK((v > 0.0 && v < 1.0));
  CHECK(ref::max_abs_diff(slice_channels(t.g, 0, 8), ref::from(t.g1)) == 0.0);
  CHECK(ref::max_abs_diff(slice_channels(t.g, 8, 8), ref::from(t.g2)) == 0.0);
  CHECK(ref::max_abs_diff(slice_channels(t.g, 16, 8), ref::from(t.g3)) == 0.0);
  CHECK_THROWS_AS(m(TensorD({1, 4, 6, 6})), DimensionError);
}

TEST_CASE("mskm: saturated and suppressed selection") {
  ParamStore<double> store(5);
  Mskm<double> m(store, "mskm", 4);
  const auto z = random_tensor<double>({1, 4, 7, 7}, 6);
  fill(m.select.weight, 0.0);

  fill(m.select.bias, 40.0);
  auto t = m.trace(z);
  const auto manual = ref::conv(ref::mul(ref::conv(ref::from(z), m.gate),
                                         ref::concat({ref::from(t.g1), ref::from(t.g2), ref::from(t.g3)})),
                                m.project);
  CHECK(ref::max_abs_diff(t.out, manual) < 1e-12);

  fill(m.select.bias, -20.0);
  fill(m.project.bias, 0.0);
  t = m.trace(z);
  for (double v : t.out.data()) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("mskm: raising one selection logit never shrinks that branch") {
  ParamStore<double> store(7);
  Mskm<double> m(store, "mskm", 4);
  const auto z = random_tensor<double>({1, 4, 6, 6}, 8);
  for (int branch = 0; branch < 3; ++branch) {
    const auto before = m.trace(z);
    m.select.bias.mutable_data()[branch] += 0.5;
    const auto after = m.trace(z);
    m.select.bias.mutable_data()[branch] -= 0.5;
    const auto b0 = slice_channels(before.gp, 4 * branch, 4);
    const auto b1 = slice_channels(after.gp, 4 * branch, 4);
    for (std::size_t i = 0; i < b0.numel(); ++i) CHECK(std::abs(b1.data()[i]) >= std::abs(b0.data()[i]));
  }
}

TEST_CASE("mskm: impulse response widths 13 (dilated) and 7 (normal)") {
  ParamStore<double> store(9);
  Mskm<double> m(store, "mskm", 4);
  for (Mac<double>* mac : {&m.dilated, &m.normal}) {
    fill(mac->conv.weight, 1.0);
    fill(mac->conv.bias, 0.0);
  }
  TensorD delta({1, 4, 31, 31});
  for (int c = 0; c < 4; ++c) delta.at(0, c, 15, 15) = 1.0;
  const auto hit = m.trace(delta);
  const auto base = m.trace(TensorD({1, 4, 31, 31}));
  CHECK(support_width(hit.g1, base.g1) == std::pair{13, 13});
  CHECK(support_width(hit.g3, base.g3) == std::pair{7, 7});
  CHECK(support_width(hit.g2, base.g2) == std::pair{1, 1});
}

TEST_CASE("extract stack: residual identity, composition, gradient reach") {
  const std::array<int, 4> w{4, 4, 8, 8};
  SkipStack<double> s;
  s.z1 = random_tensor<double>({1, 4, 16, 16}, 1);
  s.z2 = random_tensor<double>({1, 4, 8, 8}, 2);
  s.z3 = random_tensor<double>({1, 8, 4, 4}, 3);
  s.z4 = random_tensor<double>({1, 8, 2, 2}, 4);

  ParamStore<double> zero_store(1);
  ExtractStack<double> zero(zero_store, "mskm", w, 1, true);
  for (auto& p : zero_store.params()) fill(p.tensor, 0.0);
  const auto id = zero(s);
  CHECK(ref::max_abs_diff(id[0], ref::from(s.z1)) == 0.0);
  CHECK(ref::max_abs_diff(id[3], ref::from(s.z4)) == 0.0);

  ParamStore<double> store(2);
  ExtractStack<double> two(store, "mskm", w, 2, true);
  const auto m = two(s);
  const auto once = add(two.mskm[1][0](s.z2), s.z2);
  const auto twice = add(two.mskm[1][1](once), once);
  CHECK(ref::max_abs_diff(m[1], ref::from(twice)) == 0.0);
  for (int l = 0; l < 4; ++l) CHECK(m[l].shape() == std::array{s.z1, s.z2, s.z3, s.z4}[l].shape());

  sum(two.level(1, s.z2)).backward();
  for (const auto& p : store.params()) {
    if (p.name.rfind("mskm.2.", 0) != 0) continue;
    INFO(p.name);
    REQUIRE(p.tensor.has_grad());
    bool nonzero = false;
    for (double g : p.tensor.grad()) nonzero |= g != 0.0;
    CHECK(nonzero);
  }
  ParamStore<double> bad(3);
  CHECK_THROWS_AS(ExtractStack<double>(bad, "mskm", w, 0, true), ConfigError);
}

TEST_CASE("plain blocks replace mskm with the same contract") {
  ParamStore<double> store(4);
  ExtractStack<double> plain(store, "mskm", {4, 4, 8, 8}, 2, false);
  CHECK(plain.plain[2].size() == 2);
  const auto z = random_tensor<double>({1, 8, 4, 4}, 5);
  CHECK(plain.level(2, z).shape() == z.shape());
}
