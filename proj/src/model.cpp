#include "cofinet/model.hpp"

#include "cofinet/error.hpp"

namespace cofi {
namespace detail {

template <typename T>
StoreHolder<T>::StoreHolder(const Config& cfg) : cfg_(cfg), store_(cfg.seed) {
  cfg_.validate();
}

}  // namespace detail

template <typename T>
CofiNet<T>::CofiNet(const Config& cfg)
    : detail::StoreHolder<T>(cfg),
      // fx only feeds the broadcast decoder.
      encoder(this->store_, "encoder", cfg.stem_width, cfg.widths,
              cfg.ablation.use_sbd ? cfg.latent : 0),
      fusion(this->store_, "msfi", {cfg.widths[1], cfg.widths[2], cfg.widths[3]},
             cfg.ablation.use_msfi),
      skip(this->store_, "skip", cfg.widths),
      extract(this->store_, cfg.ablation.use_mskm ? "mskm" : "plain", cfg.widths, cfg.mskm_depth,
              cfg.ablation.use_mskm),
      coarse(this->store_, "coarse", cfg.widths[1], cfg.unet_base),
      final(this->store_, "final", cfg.widths, cfg.ablation.use_sbd, cfg.fusion_width,
            cfg.unet_base),
      aux3(this->store_, "aux3", cfg.widths[2], 1, 1),
      aux4(this->store_, "aux4", cfg.widths[3], 1, 1) {
  if (cfg.ablation.use_sbd) sbd.emplace(this->store_, "sbd", cfg.latent, cfg.sbd_hidden);
}

template <typename T>
ModelOutput<T> CofiNet<T>::forward(const Tensor<T>& image) const {
  const Shape s = image.shape();
  ModelOutput<T> out;
  out.pyramid = encoder(image);
  const auto& p = out.pyramid;
  out.fused = fusion(p.f2, p.f3, p.f4);
  out.skips = skip(p, out.fused);
  out.extracted = extract(out.skips);

  out.masks.coarse = coarse(resize2(out.fused.f2pp, ResizeDir::kUp), s.h, s.w);
  if (sbd) {
    out.masks.fine = (*sbd)(p.fx, s.h, s.w);
    out.masks.final = final(out.extracted, &out.masks.fine, s.h, s.w);
  } else {
    out.masks.final = final(out.extracted, nullptr, s.h, s.w);
  }
  out.aux.push_back(AuxLogits<T>{aux3(out.fused.f3pp), 16});
  out.aux.push_back(AuxLogits<T>{aux4(out.fused.f4pp), 32});
  return out;
}

template struct detail::StoreHolder<float>;
template struct detail::StoreHolder<double>;
template class CofiNet<float>;
template class CofiNet<double>;

}  // namespace cofi
