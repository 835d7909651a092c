#include "cofinet/decoders.hpp"

#include "cofinet/error.hpp"

namespace cofi {
namespace {

template <typename T>
Tensor<T> conv_act(const Conv2d<T>& conv, const Tensor<T>& x) {
  return activation(conv(x), Act::kGelu);
}

int round_up16(int v) { return (v + 15) / 16 * 16; }

}  // namespace

template <typename T>
UNet<T>::UNet(ParamStore<T>& store, const std::string& name, int in_channels, int base,
              int out_channels) {
  const ConvGeometry same = Conv2d<T>::same(3);
  int in = in_channels;
  for (int l = 0; l < 4; ++l) {
    const int width = base << l;
    const std::string lvl = name + ".down" + std::to_string(l);
    down_[l][0] = Conv2d<T>(store, lvl + ".0", in, width, 3, same);
    down_[l][1] = Conv2d<T>(store, lvl + ".1", width, width, 3, same);
    in = width;
  }
  const int bottom = base << 4;
  for (int i = 0; i < 3; ++i) {
    bottleneck_[i] = Conv2d<T>(store, name + ".mid" + std::to_string(i), i == 0 ? in : bottom,
                               bottom, 3, same);
  }
  in = bottom;
  for (int l = 3; l >= 0; --l) {
    const int width = base << l;
    const std::string lvl = name + ".up" + std::to_string(l);
    up_conv_[l] = Conv2d<T>(store, lvl + ".upconv", in, width, 3, same);
    up_fuse_[l] = Conv2d<T>(store, lvl + ".fuse", 2 * width, width, 3, same);
    in = width;
  }
  head_ = Conv2d<T>(store, name + ".head", base, out_channels, 1);
}

template <typename T>
Tensor<T> UNet<T>::operator()(const Tensor<T>& x, UNetTrace* trace) const {
  const Shape s = x.shape();
  if (s.h % 16 != 0 || s.w % 16 != 0) {
    throw DimensionError("unet: H and W must be divisible by 16, got " + s.str());
  }
  if (trace != nullptr) *trace = UNetTrace{{s.h}, {}, {}, {}};
  std::array<Tensor<T>, 4> skips;
  Tensor<T> h = x;
  for (int l = 0; l < 4; ++l) {
    h = conv_act(down_[l][0], h);
    h = conv_act(down_[l][1], h);
    skips[l] = h;
    h = maxpool2(h);
    if (trace != nullptr) trace->sizes.push_back(h.shape().h);
  }
  for (const auto& conv : bottleneck_) h = conv_act(conv, h);
  for (int l = 3; l >= 0; --l) {
    const Tensor<T> up = conv_act(up_conv_[l], resize2(h, ResizeDir::kUp));
    const Tensor<T> cat = concat_channels<T>({up, skips[l]});
    if (trace != nullptr) {
      trace->up_channels.push_back(up.shape().c);
      trace->skip_channels.push_back(skips[l].shape().c);
      trace->concat_channels.push_back(cat.shape().c);
    }
    h = conv_act(up_fuse_[l], cat);
    if (trace != nullptr) trace->sizes.push_back(h.shape().h);
  }
  return head_(h);
}

template <typename T>
Tensor<T> decode_to_image(const UNet<T>& unet, const Tensor<T>& x, int image_h, int image_w) {
  const Shape s = x.shape();
  const int h = round_up16(s.h);
  const int w = round_up16(s.w);
  const Tensor<T> input = (h == s.h && w == s.w) ? x : resize_bilinear(x, h, w);
  return resize_bilinear(unet(input), image_h, image_w);
}

template <typename T>
CoarseDecoder<T>::CoarseDecoder(ParamStore<T>& store, const std::string& name, int in_channels,
                                int base)
    : unet(store, name + ".unet", in_channels, base, 1) {}

template <typename T>
Tensor<T> CoarseDecoder<T>::operator()(const Tensor<T>& f2pp_up, int image_h, int image_w) const {
  return decode_to_image(unet, f2pp_up, image_h, image_w);
}

template <typename T>
Tensor<T> sbd_broadcast(const Tensor<T>& fx, int h, int w) {
  const Shape s = fx.shape();
  if (s.h != 1 || s.w != 1) throw DimensionError("sbd: latent must be (N,L,1,1), got " + s.str());
  const Tensor<T> tiled = broadcast_to(fx, Shape{s.n, s.c, h, w});
  const Tensor<T> coords = broadcast_to(coord_grid<T>(h, w), Shape{s.n, 2, h, w});
  return concat_channels<T>({tiled, coords});
}

template <typename T>
SpatialBroadcastDecoder<T>::SpatialBroadcastDecoder(ParamStore<T>& store, const std::string& name,
                                                    int latent, int hidden)
    : pixel(store, name + ".pixel", latent + 2, hidden, 1),
      fuse(store, name + ".fuse", hidden, 1, 3, Conv2d<T>::same(3)) {}

template <typename T>
Tensor<T> SpatialBroadcastDecoder<T>::operator()(const Tensor<T>& fx, int h, int w) const {
  if (h < 1 || w < 1) throw DimensionError("sbd: target size must be positive");
  const Shape s = fx.shape();
  if (s.h != 1 || s.w != 1) throw DimensionError("sbd: latent must be (N,L,1,1), got " + s.str());
  // The 1×1 conv over [tile(fx); x; y] splits into a per-image term and a
  // per-pixel coordinate term; same result as pixel(sbd_broadcast(fx, h, w)).
  const int latent = pixel.in_channels() - 2;
  const Tensor<T> w_lat = slice_channels(pixel.weight, 0, latent);
  const Tensor<T> w_xy = slice_channels(pixel.weight, latent, 2);
  const Tensor<T> per_image = conv2d(fx, w_lat, &pixel.bias, ConvGeometry{});
  const Tensor<T> per_pixel = conv2d<T>(coord_grid<T>(h, w), w_xy, nullptr, ConvGeometry{});
  return sigmoid(fuse(activation(add(per_image, per_pixel), Act::kGelu)));
}

template <typename T>
FinalDecoder<T>::FinalDecoder(ParamStore<T>& store, const std::string& name,
                              const std::array<int, 4>& widths, bool with_fine, int fusion_width,
                              int base)
    : with_fine_(with_fine) {
  const int in = widths[0] + widths[1] + widths[2] + widths[3] + (with_fine ? 1 : 0);
  fusion = Conv2d<T>(store, name + ".fusion", in, fusion_width, 1);
  unet = UNet<T>(store, name + ".unet", fusion_width, base, 1);
}

template <typename T>
Tensor<T> FinalDecoder<T>::operator()(const std::array<Tensor<T>, 4>& m, const Tensor<T>* fine,
                                      int image_h, int image_w, Tensor<T>* fused_input) const {
  if (with_fine_ != (fine != nullptr)) {
    throw DimensionError(with_fine_ ? "final_decode: fine mask operand missing"
                                    : "final_decode: fine mask given to a decoder built without it");
  }
  if (image_h % 4 != 0 || image_w % 4 != 0) {
    throw DimensionError("final_decode: image size must be divisible by 4");
  }
  const int h4 = image_h / 4;
  const int w4 = image_w / 4;
  std::vector<Tensor<T>> parts;
  for (int i = 0; i < 4; ++i) {
    const Shape s = m[i].shape();
    const int stride = 4 << i;
    if (s.h * stride != image_h || s.w * stride != image_w) {
      throw DimensionError("final_decode: operand m" + std::to_string(i + 1) + " " + s.str() +
                           " is not at stride " + std::to_string(stride));
    }
    parts.push_back(i == 0 ? m[0] : resize_bilinear(m[i], h4, w4));
  }
  if (fine != nullptr) {
    const Shape s = fine->shape();
    if (s.h != image_h || s.w != image_w || s.c != 1) {
      throw DimensionError("final_decode: operand fine " + s.str() + " is not a full-size mask");
    }
    parts.push_back(resize2(resize2(*fine, ResizeDir::kDown), ResizeDir::kDown));
  }
  const Tensor<T> cat = concat_channels(parts);
  if (fused_input != nullptr) *fused_input = cat;
  return decode_to_image(unet, fusion(cat), image_h, image_w);
}

template Tensor<float> decode_to_image(const UNet<float>&, const Tensor<float>&, int, int);
template Tensor<double> decode_to_image(const UNet<double>&, const Tensor<double>&, int, int);
template Tensor<float> sbd_broadcast(const Tensor<float>&, int, int);
template Tensor<double> sbd_broadcast(const Tensor<double>&, int, int);
template class UNet<float>;
template class UNet<double>;
template class CoarseDecoder<float>;
template class CoarseDecoder<double>;
template class SpatialBroadcastDecoder<float>;
template class SpatialBroadcastDecoder<double>;
template class FinalDecoder<float>;
template class FinalDecoder<double>;

}  // namespace cofi
