#include <doctest.h>

#include "cofinet/encoder.hpp"
#include "cofinet/error.hpp"
#include "support.hpp"

using namespace cofi;

namespace {

struct Fixture {
  ParamStore<float> store{3};
  Encoder<float> enc{store, "encoder", 8, {8, 8, 16, 16}, 12};
};

}  // namespace

TEST_CASE("encoder: strides 4/8/16/32 and latent shape") {
  Fixture f;
  for (int size : {64, 96, 128}) {
    const auto p = f.enc(testing::random_tensor<float>({2, 3, size, size}, 1, 0, 1));
    CHECK(p.f1.shape() == Shape{2, 8, size / 4, size / 4});
    CHECK(p.f2.shape() == Shape{2, 8, size / 8, size / 8});
    CHECK(p.f3.shape() == Shape{2, 16, size / 16, size / 16});
    CHECK(p.f4.shape() == Shape{2, 16, size / 32, size / 32});
    CHECK(p.fx.shape() == Shape{2, 12, 1, 1});
  }
  // Non-square inputs follow the same arithmetic per axis.
  const auto r = f.enc(testing::random_tensor<float>({1, 3, 64, 96}, 1, 0, 1));
  CHECK(r.f4.shape() == Shape{1, 16, 2, 3});
}

TEST_CASE("encoder: default widths at 384") {
  ParamStore<float> store(0);
  Encoder<float> enc(store, "encoder", 16, {32, 64, 128, 256}, 256);
  NoGradGuard ng;
  const auto p = enc(TensorF({1, 3, 384, 384}, 0.5f));
  CHECK(p.f1.shape() == Shape{1, 32, 96, 96});
  CHECK(p.f2.shape() == Shape{1, 64, 48, 48});
  CHECK(p.f3.shape() == Shape{1, 128, 24, 24});
  CHECK(p.f4.shape() == Shape{1, 256, 12, 12});
  CHECK(p.fx.shape() == Shape{1, 256, 1, 1});
}

TEST_CASE("encoder: indivisible input is rejected before compute") {
  Fixture f;
  CHECK_THROWS_AS(f.enc(TensorF({1, 3, 48, 64})), ConfigError);
  CHECK_THROWS_AS(f.enc(TensorF({1, 3, 64, 70})), ConfigError);
  CHECK_THROWS_AS(f.enc(TensorF({1, 4, 64, 64})), DimensionError);
}

TEST_CASE("encoder: bit-identical replay under a fixed seed") {
  Fixture a, b;
  const auto x = testing::random_tensor<float>({1, 3, 64, 64}, 5, 0, 1);
  const auto pa = a.enc(x);
  const auto pb = b.enc(x);
  for (auto [u, v] : {std::pair{pa.f1, pb.f1}, {pa.f2, pb.f2}, {pa.f3, pb.f3}, {pa.f4, pb.f4}, {pa.fx, pb.fx}}) {
    CHECK(testing::values(u) == testing::values(v));
  }
}

TEST_CASE("encoder: every parameter receives gradient") {
  Fixture f;
  const auto p = f.enc(testing::random_tensor<float>({2, 3, 64, 64}, 2, 0, 1));
  const auto loss = add(add(add(mean(p.f1), mean(p.f2)), add(mean(p.f3), mean(p.f4))), mean(mul(p.fx, p.fx)));
  loss.backward();
  for (const auto& prm : f.store.params()) {
    INFO(prm.name);
    REQUIRE(prm.tensor.has_grad());
    bool nonzero = false;
    for (float g : prm.tensor.grad()) nonzero |= g != 0.0f;
    CHECK(nonzero);
  }
}

TEST_CASE("encoder: no latent head when the latent width is zero") {
  ParamStore<float> store(1);
  Encoder<float> enc(store, "encoder", 8, {8, 8, 16, 16}, 0);
  for (const auto& p : store.params()) CHECK(p.name.find("latent") == std::string::npos);
  CHECK_FALSE(enc(TensorF({1, 3, 64, 64})).fx.defined());
}
