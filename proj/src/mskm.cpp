#include "cofinet/mskm.hpp"

#include "cofinet/error.hpp"

namespace cofi {

std::vector<Act> default_mac_kinds() { return {Act::kRelu, Act::kGelu, Act::kTanh, Act::kSigmoid}; }

template <typename T>
Mac<T>::Mac(ParamStore<T>& store, const std::string& name, int channels, std::vector<Act> kinds,
            int kernel, int dilation)
    : kinds_(std::move(kinds)) {
  const int branches = static_cast<int>(kinds_.size());
  if (branches < 1) throw ConfigError(name + ": needs at least one activation");
  if (channels % branches != 0) {
    throw ConfigError(name + ": channels (" + std::to_string(channels) +
                      ") not divisible by the number of activations (" + std::to_string(branches) +
                      ")");
  }
  conv = Conv2d<T>(store, name + ".conv", channels, channels / branches, kernel,
                   Conv2d<T>::same(kernel, dilation));
  alphas = store.add(name + ".alpha", Shape{1, branches, 1, 1}, Init::kOnes);
}

template <typename T>
Tensor<T> Mac<T>::operator()(const Tensor<T>& z) const {
  const Tensor<T> shared = conv(z);
  std::vector<Tensor<T>> branches;
  branches.reserve(kinds_.size());
  for (std::size_t n = 0; n < kinds_.size(); ++n) {
    branches.push_back(
        mul(activation(shared, kinds_[n]), slice_channels(alphas, static_cast<int>(n), 1)));
  }
  return concat_channels(branches);
}

template <typename T>
Mskm<T>::Mskm(ParamStore<T>& store, const std::string& name, int channels, int kernel,
              int dilation, std::vector<Act> kinds)
    : dilated(store, name + ".mac_a", channels, kinds, kernel, dilation),
      pointwise(store, name + ".pw", channels, channels, 1),
      normal(store, name + ".mac_n", channels, kinds, kernel, 1),
      select(store, name + ".select", 2, 3, 3, Conv2d<T>::same(3)),
      gate(store, name + ".gate", channels, 3 * channels, 1),
      project(store, name + ".project", 3 * channels, channels, 1) {}

template <typename T>
MskmTrace<T> Mskm<T>::trace(const Tensor<T>& z) const {
  if (z.shape().c != dilated.channels()) {
    throw DimensionError("mskm: input has " + std::to_string(z.shape().c) +
                         " channels (axis C), block expects " + std::to_string(dilated.channels()));
  }
  MskmTrace<T> t;
  t.g1 = dilated(z);
  t.g2 = pointwise(z);
  t.g3 = normal(z);
  t.g = concat_channels<T>({t.g1, t.g2, t.g3});
  t.selection = sigmoid(
      select(concat_channels<T>({channel_reduce(t.g, Reduce::kMax), channel_reduce(t.g, Reduce::kMean)})));
  t.gp = concat_channels<T>({mul(t.g1, slice_channels(t.selection, 0, 1)),
                             mul(t.g2, slice_channels(t.selection, 1, 1)),
                             mul(t.g3, slice_channels(t.selection, 2, 1))});
  t.gated = mul(gate(z), t.gp);
  t.out = project(t.gated);
  return t;
}

template <typename T>
PlainBlock<T>::PlainBlock(ParamStore<T>& store, const std::string& name, int channels)
    : conv(store, name + ".conv", channels, channels, 3, Conv2d<T>::same(3)) {}

template <typename T>
Tensor<T> PlainBlock<T>::operator()(const Tensor<T>& z) const {
  return activation(conv(z), Act::kGelu);
}

template <typename T>
ExtractStack<T>::ExtractStack(ParamStore<T>& store, const std::string& prefix,
                              const std::array<int, 4>& widths, int depth, bool use_mskm)
    : depth_(depth), use_mskm_(use_mskm) {
  if (depth < 1) throw ConfigError("extract_stack: depth must be >= 1");
  mskm.resize(4);
  plain.resize(4);
  for (int level = 0; level < 4; ++level) {
    for (int d = 0; d < depth; ++d) {
      const std::string name =
          prefix + "." + std::to_string(level + 1) + "." + std::to_string(d);
      if (use_mskm) {
        mskm[level].emplace_back(store, name, widths[level]);
      } else {
        plain[level].emplace_back(store, name, widths[level]);
      }
    }
  }
}

template <typename T>
Tensor<T> ExtractStack<T>::level(int index, const Tensor<T>& z) const {
  Tensor<T> x = z;
  for (int d = 0; d < depth_; ++d) {
    x = add(use_mskm_ ? mskm[index][d](x) : plain[index][d](x), x);
  }
  return x;
}

template <typename T>
std::array<Tensor<T>, 4> ExtractStack<T>::operator()(const SkipStack<T>& s) const {
  return {level(0, s.z1), level(1, s.z2), level(2, s.z3), level(3, s.z4)};
}

template class Mac<float>;
template class Mac<double>;
template class Mskm<float>;
template class Mskm<double>;
template class PlainBlock<float>;
template class PlainBlock<double>;
template class ExtractStack<float>;
template class ExtractStack<double>;

}  // namespace cofi
