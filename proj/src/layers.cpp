#include "cofinet/layers.hpp"

#include <cmath>

#include "cofinet/error.hpp"

namespace cofi {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, Init init) {
  if (!names_.insert(name).second) throw ConfigError("duplicate parameter name: " + name);
  Tensor<T> t(shape);
  switch (init) {
    case Init::kHeUniform: {
      const double bound = std::sqrt(6.0 / (static_cast<double>(shape.c) * shape.h * shape.w));
      for (T& v : t.mutable_data()) v = static_cast<T>(rng_.uniform(-bound, bound));
      break;
    }
    case Init::kZeros:
      break;
    case Init::kOnes:
      for (T& v : t.mutable_data()) v = T(1);
      break;
  }
  t.set_requires_grad(true);
  params_.push_back(Parameter<T>{name, t});
  return t;
}

template <typename T>
const Parameter<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int in_channels,
                  int out_channels, int kernel, ConvGeometry g, bool with_bias)
    : geometry(g) {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError(name + ": channel counts must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError(name + ": kernel size must be odd");
  weight = store.add(name + ".weight", Shape{out_channels, in_channels, kernel, kernel},
                     Init::kHeUniform);
  if (with_bias) bias = store.add(name + ".bias", Shape{1, out_channels, 1, 1}, Init::kZeros);
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias.defined() ? &bias : nullptr, geometry);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace cofi
