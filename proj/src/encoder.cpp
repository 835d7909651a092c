#include "cofinet/encoder.hpp"

#include "cofinet/error.hpp"

namespace cofi {

template <typename T>
Encoder<T>::Encoder(ParamStore<T>& store, const std::string& prefix, int stem_width,
                    const std::array<int, 4>& widths, int latent) {
  const ConvGeometry down{2, 1, 1};
  stem_ = Conv2d<T>(store, prefix + ".stem", 3, stem_width, 3, down);
  int in = stem_width;
  for (int s = 0; s < 4; ++s) {
    const std::string stage = prefix + ".stage" + std::to_string(s + 1);
    down_[s] = Conv2d<T>(store, stage + ".down", in, widths[s], 3, down);
    refine_[s] = Conv2d<T>(store, stage + ".conv", widths[s], widths[s], 3, Conv2d<T>::same(3));
    in = widths[s];
  }
  if (latent > 0) {
    latent_weight_ = store.add(prefix + ".latent.weight", Shape{latent, widths[3], 1, 1},
                               Init::kHeUniform);
    latent_bias_ = store.add(prefix + ".latent.bias", Shape{1, latent, 1, 1}, Init::kZeros);
  }
}

template <typename T>
PyramidFeatures<T> Encoder<T>::operator()(const Tensor<T>& image) const {
  const Shape s = image.shape();
  if (s.c != 3) throw DimensionError("encode: expected 3 image channels, got " + s.str());
  if (s.h % 32 != 0 || s.w % 32 != 0) {
    throw ConfigError("encode: image height and width must be divisible by 32, got " + s.str());
  }
  Tensor<T> x = activation(stem_(image), Act::kGelu);
  std::array<Tensor<T>, 4> f;
  for (int i = 0; i < 4; ++i) {
    x = activation(down_[i](x), Act::kGelu);
    x = activation(refine_[i](x), Act::kGelu);
    f[i] = x;
  }
  PyramidFeatures<T> out{f[0], f[1], f[2], f[3], {}};
  if (latent_weight_.defined()) out.fx = global_pool_project(f[3], latent_weight_, latent_bias_);
  return out;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace cofi
