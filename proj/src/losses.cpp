#include "cofinet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cofinet/error.hpp"
#include "cofinet/ops.hpp"

namespace cofi {
namespace {

template <typename T>
void check_pair(const Tensor<T>& logits, const Tensor<T>& target, const char* who) {
  if (!(logits.shape() == target.shape())) {
    throw DimensionError(std::string(who) + ": logits " + logits.shape().str() + " vs target " +
                         target.shape().str());
  }
  for (T v : target.data()) {
    if (std::isnan(v)) throw NumericError(std::string(who) + ": target is NaN");
    if (!(v >= T(0) && v <= T(1))) throw ValueError(std::string(who) + ": target outside [0,1]");
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Mean of in-bounds values over a k×k window, via a summed-area table.
std::vector<double> box_mean(const double* src, int h, int w, int k) {
  const int r = k / 2;
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int i = 0; i < h; ++i) {
    double row = 0;
    for (int j = 0; j < w; ++j) {
      row += src[static_cast<std::size_t>(i) * w + j];
      sat[static_cast<std::size_t>(i + 1) * (w + 1) + j + 1] =
          sat[static_cast<std::size_t>(i) * (w + 1) + j + 1] + row;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    const int i0 = std::max(0, i - r);
    const int i1 = std::min(h, i + r + 1);
    for (int j = 0; j < w; ++j) {
      const int j0 = std::max(0, j - r);
      const int j1 = std::min(w, j + r + 1);
      const double s = sat[static_cast<std::size_t>(i1) * (w + 1) + j1] -
                       sat[static_cast<std::size_t>(i0) * (w + 1) + j1] -
                       sat[static_cast<std::size_t>(i1) * (w + 1) + j0] +
                       sat[static_cast<std::size_t>(i0) * (w + 1) + j0];
      out[static_cast<std::size_t>(i) * w + j] = s / ((i1 - i0) * (j1 - j0));
    }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> weighted_structure_loss(const Tensor<T>& logits, const Tensor<T>& target,
                                  const Tensor<T>& weight) {
  check_pair(logits, target, "structure_loss");
  if (!(weight.shape() == target.shape())) {
    throw DimensionError("structure_loss: weight " + weight.shape().str() + " vs target " +
                         target.shape().str());
  }
  const Shape s = logits.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  const T* x = logits.data().data();
  const T* t = target.data().data();
  const T* w = weight.data().data();

  // Per-image sums kept for the backward pass.
  struct Sums {
    double wsum, inter, psum, tsum;
  };
  std::vector<Sums> sums(s.n);
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    Sums acc{0, 0, 0, 0};
    double bce = 0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const double xi = x[i];
      const double ti = t[i];
      const double wi = w[i];
      const double pi = stable_sigmoid(xi);
      bce += wi * (std::max(xi, 0.0) - xi * ti + std::log1p(std::exp(-std::abs(xi))));
      acc.wsum += wi;
      acc.inter += wi * pi * ti;
      acc.psum += wi * pi;
      acc.tsum += wi * ti;
    }
    const double iou = (acc.inter + 1.0) / (acc.psum + acc.tsum - acc.inter + 1.0);
    total += bce / acc.wsum + (1.0 - iou);
    sums[n] = acc;
  }
  total /= s.n;

  return Tensor<T>::make_result(Shape{}, {static_cast<T>(total)}, {&logits},
                                [s, per, sums, target, weight](detail::Node<T>& self) {
    detail::Node<T>& ln = *self.parents[0];
    ln.ensure_grad();
    const double g = self.grad[0] / s.n;
    const T* t = target.data().data();
    const T* w = weight.data().data();
    for (int n = 0; n < s.n; ++n) {
      const Sums& a = sums[n];
      const double u = a.psum + a.tsum - a.inter + 1.0;
      const double i1 = a.inter + 1.0;
      for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
        const double pi = stable_sigmoid(ln.data[i]);
        const double ti = t[i];
        const double wi = w[i];
        const double dbce = wi * (pi - ti) / a.wsum;
        // d iou / d p_i
        const double diou = (wi * ti * u - i1 * wi * (1.0 - ti)) / (u * u);
        ln.grad[i] += static_cast<T>(g * (dbce - diou * pi * (1.0 - pi)));
      }
    }
  });
}

template <typename T>
Tensor<T> structure_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  return weighted_structure_loss(logits, target, Tensor<T>(target.shape(), T(1)));
}

template <typename T>
Tensor<T> difficulty_weights(const Tensor<T>& target) {
  const Shape s = target.shape();
  int k = 31;
  if (s.h < 31 || s.w < 31) {
    k = std::min(s.h, s.w);
    if (k % 2 == 0) --k;
  }
  Tensor<T> out(s);
  std::vector<double> plane(s.plane());
  for (int p = 0; p < s.n * s.c; ++p) {
    const T* src = target.data().data() + static_cast<std::size_t>(p) * s.plane();
    std::copy(src, src + s.plane(), plane.begin());
    const auto pooled = box_mean(plane.data(), s.h, s.w, k);
    T* dst = out.mutable_data().data() + static_cast<std::size_t>(p) * s.plane();
    for (std::size_t i = 0; i < s.plane(); ++i) {
      dst[i] = static_cast<T>(1.0 + 5.0 * std::abs(pooled[i] - plane[i]));
    }
  }
  return out;
}

template <typename T>
Tensor<T> dda_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_pair(logits, target, "dda_loss");
  return weighted_structure_loss(logits, target, difficulty_weights(target));
}

template <typename T>
Tensor<T> residual_target(const Tensor<T>& gt, const Tensor<T>& coarse_logits) {
  if (!(gt.shape() == coarse_logits.shape())) {
    throw DimensionError("residual_target: gt " + gt.shape().str() + " vs coarse " +
                         coarse_logits.shape().str());
  }
  Tensor<T> out(gt.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<T>(std::abs(static_cast<double>(gt.data()[i]) -
                                     stable_sigmoid(coarse_logits.data()[i])));
  }
  return out;
}

// Nearest-neighbour subsampling (source index i·stride + stride/2) keeps a
// binary mask binary, like mask resizing at load time.
template <typename T>
Tensor<T> nearest_downsample(const Tensor<T>& gt, int stride) {
  const Shape s = gt.shape();
  if (stride < 1 || s.h % stride != 0 || s.w % stride != 0) {
    throw DimensionError("deep_supervision_loss: gt " + s.str() + " not divisible by aux stride " +
                         std::to_string(stride));
  }
  const Shape o{s.n, s.c, s.h / stride, s.w / stride};
  Tensor<T> out(o);
  auto dst = out.mutable_data();
  const int half = stride / 2;
  std::size_t k = 0;
  for (int n = 0; n < o.n; ++n)
    for (int c = 0; c < o.c; ++c)
      for (int i = 0; i < o.h; ++i)
        for (int j = 0; j < o.w; ++j) dst[k++] = gt.at(n, c, i * stride + half, j * stride + half);
  return out;
}

template <typename T>
LossReport<T> deep_supervision_loss(const MaskTriple<T>& masks, const std::vector<AuxLogits<T>>& aux,
                                    const Tensor<T>& gt) {
  LossReport<T> r;
  r.final = dda_loss(masks.final, gt);
  r.coarse = dda_loss(masks.coarse, gt);
  if (masks.fine.defined()) {
    const T eps = std::is_same_v<T, float> ? T(1e-6) : T(1e-12);
    r.fine = dda_loss(logit(masks.fine, eps), residual_target(gt, masks.coarse));
  } else {
    r.fine = Tensor<T>::scalar(T(0));
  }
  r.aux = Tensor<T>::scalar(T(0));
  for (const auto& head : aux) {
    r.aux = add(r.aux, structure_loss(head.logits, nearest_downsample(gt, head.stride)));
  }
  r.total = add(add(add(r.final, r.coarse), r.fine), scale(r.aux, static_cast<T>(r.aux_weight)));
  r.final_loss = r.final.item();
  r.coarse_loss = r.coarse.item();
  r.fine_loss = r.fine.item();
  r.aux_loss = r.aux.item();
  r.total_value = r.total.item();
  for (double v : {r.final_loss, r.coarse_loss, r.fine_loss, r.aux_loss}) {
    if (!std::isfinite(v)) throw NumericError("deep_supervision_loss: non-finite component");
  }
  return r;
}

#define COFI_INSTANTIATE_LOSSES(T)                                                               \
  template Tensor<T> weighted_structure_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> structure_loss(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> difficulty_weights(const Tensor<T>&);                                         \
  template Tensor<T> dda_loss(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> residual_target(const Tensor<T>&, const Tensor<T>&);                          \
  template LossReport<T> deep_supervision_loss(const MaskTriple<T>&,                               \
                                               const std::vector<AuxLogits<T>>&, const Tensor<T>&);

COFI_INSTANTIATE_LOSSES(float)
COFI_INSTANTIATE_LOSSES(double)

}  // namespace cofi
