#pragma once

#include <array>
#include <string>

#include "cofinet/layers.hpp"

namespace cofi {

template <typename T>
struct PyramidFeatures {
  Tensor<T> f1;  // stride 4
  Tensor<T> f2;  // stride 8
  Tensor<T> f3;  // stride 16
  Tensor<T> f4;  // stride 32
  Tensor<T> fx;  // global latent, (N, L, 1, 1)
};

// Small convolutional pyramid used in place of a pretrained transformer
// backbone: a stride-2 stem, then four stages of
// (3×3 stride 2 -> GELU -> 3×3 -> GELU), and a pooled latent projection.
template <typename T>
class Encoder {
 public:
  // latent <= 0 builds no latent head and leaves fx undefined.
  Encoder(ParamStore<T>& store, const std::string& prefix, int stem_width,
          const std::array<int, 4>& widths, int latent);

  PyramidFeatures<T> operator()(const Tensor<T>& image) const;

 private:
  Conv2d<T> stem_;
  std::array<Conv2d<T>, 4> down_;
  std::array<Conv2d<T>, 4> refine_;
  Tensor<T> latent_weight_;
  Tensor<T> latent_bias_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace cofi
