#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "cofinet/ops.hpp"
#include "cofinet/rng.hpp"
#include "cofinet/tensor.hpp"

namespace cofi {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

enum class Init { kHeUniform, kZeros, kOnes };

// Owns every trainable tensor of a model in registration order. Names are
// unique and double as checkpoint keys.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  // kHeUniform draws from U(-sqrt(6/fan_in), sqrt(6/fan_in)) where
  // fan_in = c·h·w of the shape.
  Tensor<T> add(const std::string& name, Shape shape, Init init);

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_set<std::string> names_;
  Rng rng_;
};

// Square-kernel convolution with optional bias.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
         int kernel, ConvGeometry geometry = {}, bool with_bias = true);

  // Geometry that keeps H and W unchanged at stride 1.
  static ConvGeometry same(int kernel, int dilation = 1) {
    return ConvGeometry{1, dilation * (kernel - 1) / 2, dilation};
  }

  Tensor<T> operator()(const Tensor<T>& x) const;

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }

  Tensor<T> weight;
  Tensor<T> bias;  // undefined when built without bias
  ConvGeometry geometry;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;

}  // namespace cofi
