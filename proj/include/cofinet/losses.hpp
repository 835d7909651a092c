#pragma once

#include <vector>

#include "cofinet/decoders.hpp"
#include "cofinet/tensor.hpp"

namespace cofi {

// Per image: weighted BCE-with-logits plus (1 - weighted soft IoU),
//   bce = Σ w·bce_i / Σ w
//   iou = (Σ w·p·t + 1) / (Σ w·p + Σ w·t - Σ w·p·t + 1),  p = sigmoid(logit)
// averaged over the batch. Differentiable in `logits` only.
template <typename T>
Tensor<T> weighted_structure_loss(const Tensor<T>& logits, const Tensor<T>& target,
                                  const Tensor<T>& weight);

// Unweighted form (w ≡ 1).
template <typename T>
Tensor<T> structure_loss(const Tensor<T>& logits, const Tensor<T>& target);

// 1 + 5·|meanpool_k(target) - target| with k = 31, or the largest odd size
// not above min(H, W) for small maps. The pool averages only in-bounds pixels.
template <typename T>
Tensor<T> difficulty_weights(const Tensor<T>& target);

// Boundary-weighted structure loss used for the three decoder masks.
template <typename T>
Tensor<T> dda_loss(const Tensor<T>& logits, const Tensor<T>& target);

// |gt - sigmoid(coarse_logits)|, cut from the tape.
template <typename T>
Tensor<T> residual_target(const Tensor<T>& gt, const Tensor<T>& coarse_logits);

template <typename T>
struct AuxLogits {
  Tensor<T> logits;
  int stride = 1;  // relative to the image
};

template <typename T>
struct LossReport {
  Tensor<T> total;  // differentiable
  double coarse_loss = 0;
  double fine_loss = 0;
  double final_loss = 0;
  double aux_loss = 0;
  double total_value = 0;
  double aux_weight = 0.5;
  // Component tensors, for callers that need their gradients separately.
  Tensor<T> coarse, fine, final, aux;
};

// total = final + coarse + fine + 0.5·aux where fine supervises
// logit(fine mask) with the coarse residual and aux sums structure losses of
// each head against the ground truth subsampled (nearest) to its stride.
template <typename T>
LossReport<T> deep_supervision_loss(const MaskTriple<T>& masks, const std::vector<AuxLogits<T>>& aux,
                                    const Tensor<T>& gt);

}  // namespace cofi
