#include "cofinet/adam.hpp"

#include <cmath>

#include "cofinet/error.hpp"

namespace cofi {

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw StateError("adam_step: parameter " + p.name + " has no gradient");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw StateError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double decay = state.lr * state.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].tensor.mutable_data();
    auto grad = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != data.size()) {
      throw StateError("adam_step: moment shape mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      double p = data[j];
      p -= decay * p;
      p -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
      data[j] = static_cast<T>(p);
    }
  }
}

template void adam_step(std::span<Parameter<float>>, AdamState<float>&);
template void adam_step(std::span<Parameter<double>>, AdamState<double>&);

}  // namespace cofi
