#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cofinet/layers.hpp"

namespace cofi {

template <typename T>
struct MaskTriple {
  Tensor<T> coarse;  // logits
  Tensor<T> fine;    // sigmoid output in (0,1); undefined without the SBD path
  Tensor<T> final;   // logits
};

// Spatial sizes and skip-concat widths seen during one U-Net pass.
struct UNetTrace {
  std::vector<int> sizes;           // H after each stage: input, 4 pools, 4 ups
  std::vector<int> concat_channels;  // per up level, deepest first
  std::vector<int> up_channels;
  std::vector<int> skip_channels;
};

// Mini U-Net:
//   down:       ((Conv)² -> MaxPool)⁴
//   bottleneck: (Conv)³
//   up:         (UpConv -> Concat -> Conv)⁴
// then a 1×1 head. Conv is 3×3 + GELU; UpConv is 2× bilinear + Conv.
// Widths double per level from `base`.
template <typename T>
class UNet {
 public:
  UNet() = default;
  UNet(ParamStore<T>& store, const std::string& name, int in_channels, int base, int out_channels);

  // H and W must be divisible by 16.
  Tensor<T> operator()(const Tensor<T>& x, UNetTrace* trace = nullptr) const;

 private:
  std::array<std::array<Conv2d<T>, 2>, 4> down_;
  std::array<Conv2d<T>, 3> bottleneck_;
  std::array<Conv2d<T>, 4> up_conv_;
  std::array<Conv2d<T>, 4> up_fuse_;
  Conv2d<T> head_;
};

// Runs `unet` on a stride-4 map and brings the logits to image resolution.
// Maps whose side is not a multiple of 16 are bilinearly resized to the next
// multiple first.
template <typename T>
Tensor<T> decode_to_image(const UNet<T>& unet, const Tensor<T>& x, int image_h, int image_w);

template <typename T>
class CoarseDecoder {
 public:
  CoarseDecoder(ParamStore<T>& store, const std::string& name, int in_channels, int base);
  // f2pp_up: f2'' upsampled to stride 4.
  Tensor<T> operator()(const Tensor<T>& f2pp_up, int image_h, int image_w) const;

  UNet<T> unet;
};

// Tiles fx (N,L,1,1) over h×w and appends the x/y coordinate channels:
// result (N, L+2, h, w).
template <typename T>
Tensor<T> sbd_broadcast(const Tensor<T>& fx, int h, int w);

// Spatial broadcast decoder: broadcast, 1×1 conv + GELU per pixel, 3×3 conv
// over neighbours, sigmoid.
template <typename T>
class SpatialBroadcastDecoder {
 public:
  SpatialBroadcastDecoder(ParamStore<T>& store, const std::string& name, int latent, int hidden);
  Tensor<T> operator()(const Tensor<T>& fx, int h, int w) const;

  Conv2d<T> pixel;
  Conv2d<T> fuse;
};

// Resizes m1..m4 to stride 4, appends the fine mask pooled to stride 4 when
// present, fuses with a 1×1 conv and decodes with a U-Net.
template <typename T>
class FinalDecoder {
 public:
  FinalDecoder(ParamStore<T>& store, const std::string& name, const std::array<int, 4>& widths,
               bool with_fine, int fusion_width, int base);

  Tensor<T> operator()(const std::array<Tensor<T>, 4>& m, const Tensor<T>* fine, int image_h,
                       int image_w, Tensor<T>* fused_input = nullptr) const;

  Conv2d<T> fusion;
  UNet<T> unet;

 private:
  bool with_fine_;
};

extern template class UNet<float>;
extern template class UNet<double>;
extern template class CoarseDecoder<float>;
extern template class CoarseDecoder<double>;
extern template class SpatialBroadcastDecoder<float>;
extern template class SpatialBroadcastDecoder<double>;
extern template class FinalDecoder<float>;
extern template class FinalDecoder<double>;

}  // namespace cofi
