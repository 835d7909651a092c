#pragma once

#include <optional>
#include <vector>

#include "cofinet/config.hpp"
#include "cofinet/decoders.hpp"
#include "cofinet/encoder.hpp"
#include "cofinet/losses.hpp"
#include "cofinet/mskm.hpp"
#include "cofinet/msfi.hpp"

namespace cofi {

template <typename T>
struct ModelOutput {
  MaskTriple<T> masks;
  std::vector<AuxLogits<T>> aux;
  // Intermediates, kept for tests and the gradient checker.
  PyramidFeatures<T> pyramid;
  FusedFeatures<T> fused;
  SkipStack<T> skips;
  std::array<Tensor<T>, 4> extracted;
};

// encoder -> fusion -> skip stack -> per-level extraction -> three decoders.
// Ablation flags swap the fusion for plain 1×1 convs, MSKM for plain 3×3
// blocks, and drop the broadcast (fine mask) decoder.
namespace detail {
template <typename T>
struct StoreHolder {
  explicit StoreHolder(const Config& cfg);
  Config cfg_;
  ParamStore<T> store_;
};
}  // namespace detail

template <typename T>
class CofiNet : private detail::StoreHolder<T> {
 public:
  // Validates the config (ConfigError names the bad field) and builds every
  // parameter deterministically from cfg.seed.
  explicit CofiNet(const Config& cfg);
  CofiNet(const CofiNet&) = delete;
  CofiNet& operator=(const CofiNet&) = delete;

  ModelOutput<T> forward(const Tensor<T>& image) const;

  const Config& config() const { return this->cfg_; }
  ParamStore<T>& store() { return this->store_; }
  const ParamStore<T>& store() const { return this->store_; }
  std::vector<Parameter<T>>& params() { return this->store_.params(); }

  // Number of supervised mask outputs (coarse, final and optionally fine).
  int supervised_outputs() const { return this->cfg_.ablation.use_sbd ? 3 : 2; }

  // Sub-modules, public for targeted testing.
  Encoder<T> encoder;
  Msfi<T> fusion;
  SkipProjector<T> skip;
  ExtractStack<T> extract;
  CoarseDecoder<T> coarse;
  std::optional<SpatialBroadcastDecoder<T>> sbd;
  FinalDecoder<T> final;
  Conv2d<T> aux3, aux4;
};

extern template class CofiNet<float>;
extern template class CofiNet<double>;

}  // namespace cofi
