#include "cofinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "cofinet/error.hpp"
#include "cofinet/ops.hpp"
#include "cofinet/rng.hpp"

namespace cofi {
namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

Evaluation eval_scalar(const std::function<TensorD()>& f) {
  NoGradGuard no_grad;
  debug::BranchRecorder recorder;
  const TensorD y = f();
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
  return {v, recorder.fingerprint()};
}

void record(GradCheckResult& r, const std::string& name, std::size_t index, double a, double n) {
  const double err = relative_error(a, n);
  ++r.checked;
  if (err > r.max_rel_error || r.checked == 1) {
    r.max_rel_error = std::max(r.max_rel_error, err);
    r.worst_name = name;
    r.worst_index = index;
    r.worst_analytic = a;
    r.worst_numeric = n;
  }
}

// Empty when the perturbation leaves the smooth piece of the base point.
std::optional<double> central_difference(const std::function<TensorD()>& f, TensorD& t, std::size_t i,
                                         double eps, std::uint64_t base_branches) {
  auto data = t.mutable_data();
  const double orig = data[i];
  data[i] = orig + eps;
  const Evaluation plus = eval_scalar(f);
  data[i] = orig - eps;
  const Evaluation minus = eval_scalar(f);
  data[i] = orig;
  if (plus.branches != base_branches || minus.branches != base_branches) return std::nullopt;
  return (plus.value - minus.value) / (2.0 * eps);
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                           double eps, const std::vector<std::size_t>& indices) {
  TensorD input = x.detach();
  input.set_requires_grad(true);
  const TensorD y = f(input);
  if (!std::isfinite(y.item())) throw NumericError("grad_check: objective is not finite");
  y.backward();
  std::vector<double> analytic(input.numel(), 0.0);
  if (input.has_grad()) std::copy(input.grad().begin(), input.grad().end(), analytic.begin());

  std::vector<std::size_t> which = indices;
  if (which.empty()) {
    which.resize(input.numel());
    std::iota(which.begin(), which.end(), std::size_t{0});
  }
  GradCheckResult result;
  auto objective = [&] { return f(input); };
  const std::uint64_t base = eval_scalar(objective).branches;
  for (std::size_t i : which) {
    if (i >= input.numel()) throw DimensionError("grad_check: index out of range");
    if (const auto numeric = central_difference(objective, input, i, eps, base)) {
      record(result, "x", i, analytic[i], *numeric);
    } else {
      ++result.skipped;
    }
  }
  return result;
}

GradCheckResult grad_check_params(const std::function<TensorD()>& f,
                                  const std::vector<NamedTensorD>& params, double eps,
                                  std::size_t max_per_tensor, std::uint64_t seed) {
  std::vector<TensorD> handles;
  for (const auto& p : params) {
    handles.push_back(p.tensor);
    handles.back().zero_grad();
  }
  const TensorD y = f();
  if (!std::isfinite(y.item())) throw NumericError("grad_check: objective is not finite");
  y.backward();

  Rng rng(seed);
  GradCheckResult result;
  const std::uint64_t base = eval_scalar(f).branches;
  for (std::size_t t = 0; t < handles.size(); ++t) {
    TensorD& h = handles[t];
    std::vector<std::size_t> candidates(h.numel());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    std::size_t want = candidates.size();
    if (max_per_tensor != 0 && candidates.size() > max_per_tensor) {
      rng.shuffle(candidates);
      candidates.resize(std::min(candidates.size(), 4 * max_per_tensor));
      want = max_per_tensor;
    }
    std::vector<double> analytic(h.numel(), 0.0);
    if (h.has_grad()) std::copy(h.grad().begin(), h.grad().end(), analytic.begin());
    std::size_t taken = 0;
    for (std::size_t k = 0; k < candidates.size() && taken < want; ++k) {
      const std::size_t i = candidates[k];
      if (const auto numeric = central_difference(f, h, i, eps, base)) {
        record(result, params[t].name, i, analytic[i], *numeric);
        ++taken;
      } else {
        ++result.skipped;
      }
    }
  }
  for (auto& h : handles) h.zero_grad();
  return result;
}

}  // namespace cofi
