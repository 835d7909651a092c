#pragma once

#include <array>
#include <optional>
#include <string>

#include "cofinet/encoder.hpp"
#include "cofinet/layers.hpp"

namespace cofi {

// Multi-scale fusion outputs. The primed intermediates of the multiplicative
// stage are kept for inspection.
template <typename T>
struct FusedFeatures {
  Tensor<T> f2p, f3p, f4p;
  Tensor<T> f2pp, f3pp, f4pp;
};

template <typename T>
struct SkipStack {
  Tensor<T> z1, z2, z3, z4;
  // Channel concats before the 1×1 projections.
  Tensor<T> z2_cat, z3_cat, z4_cat;
};

// Two-stage fusion of f2/f3/f4.
//
// Stage 1 (multiplicative):
//   f4' = f4 ⊗ down(f3)
//   f3' = f3 ⊗ down(f2) ⊗ up(f4')
//   f2' = f2 ⊗ up(f3')
// Stage 2 (concatenative, each followed by 3×3 conv + GELU back to the level
// width):
//   f4'' = [f4', down(f3')]
//   f3'' = [f3', down(f2'), up(f4'')]
//   f2'' = [f2', up(f3'')]
// A resized operand whose width differs from the level it multiplies into
// passes through a learned 1×1 aligner first.
//
// With multiplicative=false stage 1 is replaced by a plain per-level 1×1 conv
// (the fusion ablation); stage 2 is unchanged.
template <typename T>
class Msfi {
 public:
  // widths = {C2, C3, C4}
  Msfi(ParamStore<T>& store, const std::string& prefix, const std::array<int, 3>& widths,
       bool multiplicative = true);

  FusedFeatures<T> operator()(const Tensor<T>& f2, const Tensor<T>& f3, const Tensor<T>& f4) const;

  bool multiplicative() const { return multiplicative_; }

  // Exposed so tests can pin weights.
  std::optional<Conv2d<T>> align_f3_to_f4, align_f2_to_f3, align_f4_to_f3, align_f3_to_f2;
  std::array<Conv2d<T>, 3> plain;  // f2, f3, f4 substitutes when !multiplicative
  Conv2d<T> proj2, proj3, proj4;

 private:
  bool multiplicative_;
};

// z4 = P4[f4'', f4]; z3 = P3[f3'', f3, up(z4)]; z2 = P2[f2'', f2, up(z3)];
// z1 = f1. P_i are 1×1 convs back to the level width.
template <typename T>
class SkipProjector {
 public:
  SkipProjector(ParamStore<T>& store, const std::string& prefix, const std::array<int, 4>& widths);

  SkipStack<T> operator()(const PyramidFeatures<T>& pyramid, const FusedFeatures<T>& fused) const;

  Conv2d<T> proj2, proj3, proj4;
};

extern template class Msfi<float>;
extern template class Msfi<double>;
extern template class SkipProjector<float>;
extern template class SkipProjector<double>;

}  // namespace cofi
