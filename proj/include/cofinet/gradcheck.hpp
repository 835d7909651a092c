#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cofinet/tensor.hpp"

namespace cofi {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Elements left out because x ± eps crossed a kink (ReLU sign, max
  // selection, clamp), where a central difference is not a derivative.
  std::size_t skipped = 0;
  // Location of the worst element, for diagnostics.
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

// Central differences of a scalar-valued f against reverse mode, for the
// listed flat indices of x (all of them when `indices` is empty). Elements
// whose ±eps evaluations take a different branch of a non-smooth op than the
// unperturbed one are counted as skipped instead of compared.
GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                           double eps, const std::vector<std::size_t>& indices = {});

struct NamedTensorD {
  std::string name;
  TensorD tensor;
};

// Same check over trainable tensors perturbed in place. At most
// `max_per_tensor` elements per tensor are sampled (0 = all), chosen by `seed`;
// a skipped element is replaced by the next candidate, up to 4·max_per_tensor
// candidates per tensor.
GradCheckResult grad_check_params(const std::function<TensorD()>& f,
                                  const std::vector<NamedTensorD>& params, double eps,
                                  std::size_t max_per_tensor, std::uint64_t seed);

}  // namespace cofi
