#pragma once

#include <span>
#include <vector>

#include "cofinet/layers.hpp"

namespace cofi {

// Adam with decoupled weight decay: every step applies p -= lr·wd·p next to
// the bias-corrected moment update. Gradients are read, never cleared.
template <typename T>
struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// Throws StateError naming the first parameter without a gradient.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state);

}  // namespace cofi
