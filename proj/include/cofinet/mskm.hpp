#pragma once

#include <array>
#include <string>
#include <vector>

#include "cofinet/layers.hpp"
#include "cofinet/msfi.hpp"

namespace cofi {

// Multi-activation convolution: one shared k×k conv C -> C/N, fanned out
// through N activations, each scaled by a trainable scalar, then
// concatenated back to C channels. Shape preserving.
template <typename T>
class Mac {
 public:
  Mac() = default;
  Mac(ParamStore<T>& store, const std::string& name, int channels, std::vector<Act> kinds,
      int kernel, int dilation);

  Tensor<T> operator()(const Tensor<T>& z) const;

  int channels() const { return conv.in_channels(); }
  const std::vector<Act>& kinds() const { return kinds_; }

  Conv2d<T> conv;
  Tensor<T> alphas;  // (1, N, 1, 1), initialised to 1

 private:
  std::vector<Act> kinds_;
};

// relu, gelu, tanh, sigmoid
std::vector<Act> default_mac_kinds();

template <typename T>
struct MskmTrace {
  Tensor<T> g1, g2, g3;  // dilated MAC, 1×1 conv, normal MAC
  Tensor<T> g;           // [g1, g2, g3]
  Tensor<T> selection;   // (N, 3, H, W), sigmoid
  Tensor<T> gp;          // [S1·g1, S2·g2, S3·g3]
  Tensor<T> gated;       // 1×1(z) ⊙ gp, 3C channels
  Tensor<T> out;         // 1×1 projection back to C
};

// Selective-kernel block with three receptive fields (13, 1 and 7 pixels)
// weighted per pixel by sigmoid selection maps computed from the channel max
// and mean of their concatenation.
template <typename T>
class Mskm {
 public:
  Mskm(ParamStore<T>& store, const std::string& name, int channels, int kernel = 7,
       int dilation = 2, std::vector<Act> kinds = default_mac_kinds());

  Tensor<T> operator()(const Tensor<T>& z) const { return trace(z).out; }
  MskmTrace<T> trace(const Tensor<T>& z) const;

  Mac<T> dilated;
  Conv2d<T> pointwise;
  Mac<T> normal;
  Conv2d<T> select;   // 2 -> 3, 3×3
  Conv2d<T> gate;     // C -> 3C, 1×1
  Conv2d<T> project;  // 3C -> C, 1×1
};

// Ablation stand-in: 3×3 conv C -> C followed by GELU.
template <typename T>
class PlainBlock {
 public:
  PlainBlock(ParamStore<T>& store, const std::string& name, int channels);
  Tensor<T> operator()(const Tensor<T>& z) const;

  Conv2d<T> conv;
};

// `depth` residual blocks per pyramid level: x <- block(x) + x.
template <typename T>
class ExtractStack {
 public:
  ExtractStack(ParamStore<T>& store, const std::string& prefix, const std::array<int, 4>& widths,
               int depth, bool use_mskm);

  std::array<Tensor<T>, 4> operator()(const SkipStack<T>& skips) const;
  Tensor<T> level(int index, const Tensor<T>& z) const;

  int depth() const { return depth_; }
  std::vector<std::vector<Mskm<T>>> mskm;
  std::vector<std::vector<PlainBlock<T>>> plain;

 private:
  int depth_;
  bool use_mskm_;
};

extern template class Mac<float>;
extern template class Mac<double>;
extern template class Mskm<float>;
extern template class Mskm<double>;
extern template class PlainBlock<float>;
extern template class PlainBlock<double>;
extern template class ExtractStack<float>;
extern template class ExtractStack<double>;

}  // namespace cofi
