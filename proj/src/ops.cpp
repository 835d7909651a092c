#include "cofinet/ops.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "cofinet/error.hpp"
#include "cofinet/kernels.hpp"

namespace cofi {
namespace {

std::atomic<bool> g_corrupt_conv_backward{false};

template <typename T>
using Node = detail::Node<T>;

const char* axis_name(int axis) {
  static const char* const kNames[] = {"N", "C", "H", "W"};
  return kNames[axis];
}

int extent(const Shape& s, int axis) {
  switch (axis) {
    case 0:
      return s.n;
    case 1:
      return s.c;
    case 2:
      return s.h;
    default:
      return s.w;
  }
}

template <typename T>
void im2col(const T* x, int channels, int height, int width, int k, const ConvGeometry& g,
            int out_h, int out_w, T* col, std::size_t ld) {
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ld;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki * g.dilation;
          T* drow = dst + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(drow, drow + out_w, T(0));
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj * g.dilation;
            drow[ow] = (iw >= 0 && iw < width) ? xrow[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int k, const ConvGeometry& g,
            int out_h, int out_w, T* x, std::size_t ld) {
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* src = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ld;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki * g.dilation;
          if (ih < 0 || ih >= height) continue;
          T* xrow = xc + static_cast<std::size_t>(ih) * width;
          const T* srow = src + static_cast<std::size_t>(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj * g.dilation;
            if (iw >= 0 && iw < width) xrow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

// Samples per conv GEMM: enough columns to fill vector lanes, bounded so
// the im2col buffer stays under ~4M elements.
inline int conv_group(int batch, int kk, int plane) {
  constexpr std::size_t kMaxCol = std::size_t{1} << 22;
  constexpr int kWideEnough = 256;
  if (plane >= kWideEnough) return 1;
  const int want = (kWideEnough + plane - 1) / plane;
  const std::size_t cap = std::max<std::size_t>(1, kMaxCol / (static_cast<std::size_t>(kk) * plane));
  return std::max(1, std::min({batch, want, static_cast<int>(std::min<std::size_t>(cap, 1 << 20))}));
}

// Per-axis bilinear taps for half-pixel-center resampling.
struct Taps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

Taps bilinear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    t.lo[i] = i0;
    t.hi[i] = std::min(i0 + 1, in - 1);
    t.frac[i] = src - i0;
  }
  return t;
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
  return cdf + x * pdf;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

namespace {

// Packs one decision bit per element into 64-bit words for the recorder.
class BitFolder {
 public:
  explicit BitFolder(debug::BranchRecorder* r) : r_(r) {}
  ~BitFolder();
  void push(bool bit) {
    word_ |= static_cast<std::uint64_t>(bit) << count_;
    if (++count_ == 64) flush();
  }

 private:
  void flush();
  debug::BranchRecorder* r_;
  std::uint64_t word_ = 0;
  int count_ = 0;
};

}  // namespace

namespace debug {
void set_corrupt_conv_backward(bool on) { g_corrupt_conv_backward.store(on); }
bool corrupt_conv_backward() { return g_corrupt_conv_backward.load(); }

namespace {
thread_local BranchRecorder* t_recorder = nullptr;
}  // namespace

BranchRecorder::BranchRecorder() : previous_(t_recorder) { t_recorder = this; }
BranchRecorder::~BranchRecorder() { t_recorder = previous_; }
BranchRecorder* BranchRecorder::active() { return t_recorder; }

void BranchRecorder::fold(std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    hash_ ^= (word >> (8 * b)) & 0xffu;
    hash_ *= 0x100000001b3ULL;
  }
}
}  // namespace debug

namespace {
BitFolder::~BitFolder() {
  if (count_ > 0) flush();
}
void BitFolder::flush() {
  if (r_ != nullptr) r_->fold(word_);
  word_ = 0;
  count_ = 0;
}
}  // namespace

const char* act_name(Act kind) {
  switch (kind) {
    case Act::kRelu:
      return "relu";
    case Act::kGelu:
      return "gelu";
    case Act::kTanh:
      return "tanh";
    case Act::kSigmoid:
      return "sigmoid";
    case Act::kIdentity:
      return "identity";
  }
  return "?";
}

int conv_out_size(int in, int kernel, const ConvGeometry& g) {
  const int num = in + 2 * g.padding - g.dilation * (kernel - 1) - 1;
  if (num < 0) return 0;
  return num / g.stride + 1;
}

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvGeometry& g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c) {
    throw DimensionError("conv2d: input has " + std::to_string(xs.c) +
                         " channels (axis C) but kernel expects " + std::to_string(ws.c));
  }
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ConfigError("conv2d: kernel must be square with odd size, got " + ws.str());
  }
  if (g.stride < 1 || g.dilation < 1 || g.padding < 0) {
    throw ConfigError("conv2d: stride and dilation must be >= 1 and padding >= 0");
  }
  const int k = ws.h;
  const int cout = ws.n;
  const int out_h = conv_out_size(xs.h, k, g);
  const int out_w = conv_out_size(xs.w, k, g);
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("conv2d: non-positive output size for input " + xs.str() + " and kernel " +
                      std::to_string(k) + " (dilation " + std::to_string(g.dilation) + ")");
  }
  if (bias != nullptr && bias->numel() != static_cast<std::size_t>(cout)) {
    throw DimensionError("conv2d: bias has " + std::to_string(bias->numel()) +
                         " entries (axis C), expected " + std::to_string(cout));
  }

  const int kk = xs.c * k * k;
  const int plane = out_h * out_w;
  const bool direct = k == 1 && g.stride == 1 && g.padding == 0;
  const int group = conv_group(xs.n, kk, plane);
  const auto& kern = kernels::table<T>();
  const Shape out_shape{xs.n, cout, out_h, out_w};
  std::vector<T> out(out_shape.numel());
  const T* wd = weight.data().data();
  if (group == 1 && direct) {
    for (int n = 0; n < xs.n; ++n) {
      const T* xn = x.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
      T* yn = out.data() + static_cast<std::size_t>(n) * cout * plane;
      kern.gemm(false, false, cout, plane, kk, wd, kk, xn, plane, yn, plane, false);
    }
  } else {
    // Several samples share one GEMM: col is kk × (group·plane).
    std::vector<T> col(static_cast<std::size_t>(kk) * group * plane);
    std::vector<T> y(static_cast<std::size_t>(cout) * group * plane);
    for (int n0 = 0; n0 < xs.n; n0 += group) {
      const int gn = std::min(group, xs.n - n0);
      const std::size_t ld = static_cast<std::size_t>(gn) * plane;
      for (int s = 0; s < gn; ++s) {
        const T* xn = x.data().data() + static_cast<std::size_t>(n0 + s) * xs.c * xs.plane();
        im2col(xn, xs.c, xs.h, xs.w, k, g, out_h, out_w, col.data() + s * plane, ld);
      }
      if (gn == 1) {
        kern.gemm(false, false, cout, plane, kk, wd, kk, col.data(), plane,
                  out.data() + static_cast<std::size_t>(n0) * cout * plane, plane, false);
        continue;
      }
      kern.gemm(false, false, cout, static_cast<int>(ld), kk, wd, kk, col.data(), static_cast<int>(ld),
                y.data(), static_cast<int>(ld), false);
      for (int s = 0; s < gn; ++s) {
        T* yn = out.data() + static_cast<std::size_t>(n0 + s) * cout * plane;
        for (int co = 0; co < cout; ++co) {
          const T* src = y.data() + co * ld + s * plane;
          std::copy(src, src + plane, yn + static_cast<std::size_t>(co) * plane);
        }
      }
    }
  }
  if (bias != nullptr) {
    const T* bd = bias->data().data();
    for (int n = 0; n < xs.n; ++n) {
      for (int co = 0; co < cout; ++co) {
        T* row = out.data() + (static_cast<std::size_t>(n) * cout + co) * plane;
        const T b = bd[co];
        for (int i = 0; i < plane; ++i) row[i] += b;
      }
    }
  }

  const bool has_bias = bias != nullptr;
  auto backward = [xs, g, k, cout, out_h, out_w, kk, plane, direct, group,
                   has_bias](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& wn = *self.parents[1];
    const auto& kern = kernels::table<T>();
    const T* dy = self.grad.data();
    std::vector<T> dw;
    if (wn.requires_grad) dw.assign(wn.data.size(), T(0));
    if (xn.requires_grad) xn.ensure_grad();
    if (group == 1 && direct) {
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t xoff = static_cast<std::size_t>(n) * xs.c * xs.plane();
        const T* dyn = dy + static_cast<std::size_t>(n) * cout * plane;
        if (wn.requires_grad) {
          kern.gemm(false, true, cout, kk, plane, dyn, plane, xn.data.data() + xoff, plane,
                    dw.data(), kk, true);
        }
        if (xn.requires_grad) {
          kern.gemm(true, false, kk, plane, cout, wn.data.data(), kk, dyn, plane,
                    xn.grad.data() + xoff, plane, true);
        }
      }
    } else {
      const std::size_t width = static_cast<std::size_t>(group) * plane;
      std::vector<T> col(wn.requires_grad ? kk * width : 0);
      std::vector<T> dcol(xn.requires_grad ? kk * width : 0);
      std::vector<T> dyg(group > 1 ? cout * width : 0);
      for (int n0 = 0; n0 < xs.n; n0 += group) {
        const int gn = std::min(group, xs.n - n0);
        const std::size_t ld = static_cast<std::size_t>(gn) * plane;
        const int ldi = static_cast<int>(ld);
        const T* dyp = dy + static_cast<std::size_t>(n0) * cout * plane;
        if (gn > 1) {
          for (int s = 0; s < gn; ++s) {
            const T* dyn = dyp + static_cast<std::size_t>(s) * cout * plane;
            for (int co = 0; co < cout; ++co) {
              const T* src = dyn + static_cast<std::size_t>(co) * plane;
              std::copy(src, src + plane, dyg.data() + co * ld + s * plane);
            }
          }
          dyp = dyg.data();
        }
        if (wn.requires_grad) {
          for (int s = 0; s < gn; ++s) {
            const T* xs_n = xn.data.data() + static_cast<std::size_t>(n0 + s) * xs.c * xs.plane();
            im2col(xs_n, xs.c, xs.h, xs.w, k, g, out_h, out_w, col.data() + s * plane, ld);
          }
          kern.gemm(false, true, cout, kk, ldi, dyp, ldi, col.data(), ldi, dw.data(), kk, true);
        }
        if (xn.requires_grad) {
          kern.gemm(true, false, kk, ldi, cout, wn.data.data(), kk, dyp, ldi, dcol.data(), ldi,
                    false);
          for (int s = 0; s < gn; ++s) {
            T* gx = xn.grad.data() + static_cast<std::size_t>(n0 + s) * xs.c * xs.plane();
            col2im(dcol.data() + s * plane, xs.c, xs.h, xs.w, k, g, out_h, out_w, gx, ld);
          }
        }
      }
    }
    if (wn.requires_grad) {
      wn.ensure_grad();
      const T factor = debug::corrupt_conv_backward() ? T(1.05) : T(1);
      kern.axpy(dw.size(), factor, dw.data(), wn.grad.data());
    }
    if (has_bias && self.parents[2]->requires_grad) {
      Node<T>& bn = *self.parents[2];
      bn.ensure_grad();
      for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < cout; ++co) {
          const T* row = dy + (static_cast<std::size_t>(n) * cout + co) * plane;
          T s = 0;
          for (int i = 0; i < plane; ++i) s += row[i];
          bn.grad[co] += s;
        }
      }
    }
  };
  if (has_bias) return Tensor<T>::make_result(out_shape, std::move(out), {&x, &weight, bias}, backward);
  return Tensor<T>::make_result(out_shape, std::move(out), {&x, &weight}, backward);
}

// ---------------------------------------------------------------- resizing

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  const Shape xs = x.shape();
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: non-positive target size");
  const Taps ty = bilinear_taps(xs.h, out_h);
  const Taps tx = bilinear_taps(xs.w, out_w);
  const Shape os{xs.n, xs.c, out_h, out_w};
  std::vector<T> out(os.numel());
  const T* xd = x.data().data();
  for (int p = 0; p < xs.n * xs.c; ++p) {
    const T* src = xd + static_cast<std::size_t>(p) * xs.plane();
    T* dst = out.data() + static_cast<std::size_t>(p) * os.plane();
    for (int i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ty.frac[i]);
      const T* r0 = src + static_cast<std::size_t>(ty.lo[i]) * xs.w;
      const T* r1 = src + static_cast<std::size_t>(ty.hi[i]) * xs.w;
      for (int j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(tx.frac[j]);
        const T top = (T(1) - fx) * r0[tx.lo[j]] + fx * r0[tx.hi[j]];
        const T bot = (T(1) - fx) * r1[tx.lo[j]] + fx * r1[tx.hi[j]];
        dst[static_cast<std::size_t>(i) * out_w + j] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [xs, os, ty, tx](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (int p = 0; p < xs.n * xs.c; ++p) {
      T* dsrc = xn.grad.data() + static_cast<std::size_t>(p) * xs.plane();
      const T* dy = self.grad.data() + static_cast<std::size_t>(p) * os.plane();
      for (int i = 0; i < os.h; ++i) {
        const T fy = static_cast<T>(ty.frac[i]);
        T* r0 = dsrc + static_cast<std::size_t>(ty.lo[i]) * xs.w;
        T* r1 = dsrc + static_cast<std::size_t>(ty.hi[i]) * xs.w;
        for (int j = 0; j < os.w; ++j) {
          const T fx = static_cast<T>(tx.frac[j]);
          const T g = dy[static_cast<std::size_t>(i) * os.w + j];
          r0[tx.lo[j]] += (T(1) - fy) * (T(1) - fx) * g;
          r0[tx.hi[j]] += (T(1) - fy) * fx * g;
          r1[tx.lo[j]] += fy * (T(1) - fx) * g;
          r1[tx.hi[j]] += fy * fx * g;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> resize2(const Tensor<T>& x, ResizeDir dir) {
  const Shape xs = x.shape();
  if (dir == ResizeDir::kUp) return resize_bilinear(x, 2 * xs.h, 2 * xs.w);
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw DimensionError("resize2 down: H and W must be even, got " + xs.str());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  std::vector<T> out(os.numel());
  const T* xd = x.data().data();
  for (int p = 0; p < xs.n * xs.c; ++p) {
    const T* src = xd + static_cast<std::size_t>(p) * xs.plane();
    T* dst = out.data() + static_cast<std::size_t>(p) * os.plane();
    for (int i = 0; i < os.h; ++i) {
      const T* r0 = src + static_cast<std::size_t>(2 * i) * xs.w;
      const T* r1 = r0 + xs.w;
      for (int j = 0; j < os.w; ++j) {
        dst[static_cast<std::size_t>(i) * os.w + j] =
            T(0.25) * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [xs, os](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (int p = 0; p < xs.n * xs.c; ++p) {
      T* dsrc = xn.grad.data() + static_cast<std::size_t>(p) * xs.plane();
      const T* dy = self.grad.data() + static_cast<std::size_t>(p) * os.plane();
      for (int i = 0; i < os.h; ++i) {
        T* r0 = dsrc + static_cast<std::size_t>(2 * i) * xs.w;
        T* r1 = r0 + xs.w;
        for (int j = 0; j < os.w; ++j) {
          const T g = T(0.25) * dy[static_cast<std::size_t>(i) * os.w + j];
          r0[2 * j] += g;
          r0[2 * j + 1] += g;
          r1[2 * j] += g;
          r1[2 * j + 1] += g;
        }
      }
    }
  });
}

// ---------------------------------------------------------------- eltwise

template <typename T>
Tensor<T> eltwise(const Tensor<T>& a, const Tensor<T>& b, EltOp op) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  int dims[4];
  for (int axis = 0; axis < 4; ++axis) {
    const int ea = extent(as, axis);
    const int eb = extent(bs, axis);
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string("eltwise: operands differ along axis ") + axis_name(axis) +
                           " (" + std::to_string(ea) + " vs " + std::to_string(eb) + ")");
    }
    dims[axis] = std::max(ea, eb);
  }
  const Shape os{dims[0], dims[1], dims[2], dims[3]};
  std::vector<T> out(os.numel());
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  const auto& kern = kernels::table<T>();

  if (as == bs) {
    switch (op) {
      case EltOp::kMul:
        kern.mul(out.size(), ad, bd, out.data());
        break;
      case EltOp::kAdd:
        kern.add(out.size(), ad, bd, out.data());
        break;
      case EltOp::kSub:
        std::copy(ad, ad + out.size(), out.begin());
        kern.axpy(out.size(), T(-1), bd, out.data());
        break;
    }
    return Tensor<T>::make_result(os, std::move(out), {&a, &b}, [op](Node<T>& self) {
      Node<T>& an = *self.parents[0];
      Node<T>& bn = *self.parents[1];
      const auto& kern = kernels::table<T>();
      const std::size_t count = self.grad.size();
      if (an.requires_grad) {
        an.ensure_grad();
        if (op == EltOp::kMul) {
          for (std::size_t i = 0; i < count; ++i) an.grad[i] += self.grad[i] * bn.data[i];
        } else {
          kern.axpy(count, T(1), self.grad.data(), an.grad.data());
        }
      }
      if (bn.requires_grad) {
        bn.ensure_grad();
        if (op == EltOp::kMul) {
          for (std::size_t i = 0; i < count; ++i) bn.grad[i] += self.grad[i] * an.data[i];
        } else {
          kern.axpy(count, op == EltOp::kSub ? T(-1) : T(1), self.grad.data(), bn.grad.data());
        }
      }
    });
  }

  // Strides with zeros on broadcast axes.
  auto strides = [](const Shape& s) {
    std::array<std::size_t, 4> st{static_cast<std::size_t>(s.c) * s.h * s.w,
                                  static_cast<std::size_t>(s.h) * s.w, static_cast<std::size_t>(s.w),
                                  1};
    if (s.n == 1) st[0] = 0;
    if (s.c == 1) st[1] = 0;
    if (s.h == 1) st[2] = 0;
    if (s.w == 1) st[3] = 0;
    return st;
  };
  const auto sa = strides(as);
  const auto sb = strides(bs);
  auto for_each = [os, sa, sb](auto&& fn) {
    std::size_t o = 0;
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int h = 0; h < os.h; ++h)
          for (int w = 0; w < os.w; ++w, ++o) {
            fn(o, n * sa[0] + c * sa[1] + h * sa[2] + w * sa[3],
               n * sb[0] + c * sb[1] + h * sb[2] + w * sb[3]);
          }
  };
  for_each([&](std::size_t o, std::size_t ia, std::size_t ib) {
    switch (op) {
      case EltOp::kMul:
        out[o] = ad[ia] * bd[ib];
        break;
      case EltOp::kAdd:
        out[o] = ad[ia] + bd[ib];
        break;
      case EltOp::kSub:
        out[o] = ad[ia] - bd[ib];
        break;
    }
  });
  return Tensor<T>::make_result(os, std::move(out), {&a, &b}, [op, for_each](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    Node<T>& bn = *self.parents[1];
    if (an.requires_grad) an.ensure_grad();
    if (bn.requires_grad) bn.ensure_grad();
    for_each([&](std::size_t o, std::size_t ia, std::size_t ib) {
      const T g = self.grad[o];
      if (an.requires_grad) an.grad[ia] += op == EltOp::kMul ? g * bn.data[ib] : g;
      if (bn.requires_grad) {
        bn.grad[ib] += op == EltOp::kMul ? g * an.data[ia] : (op == EltOp::kSub ? -g : g);
      }
    });
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x}, [factor](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    kernels::table<T>().axpy(self.grad.size(), factor, self.grad.data(), xn.grad.data());
  });
}

// ---------------------------------------------------------------- channels

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape s = parts[i].shape();
    for (int axis : {0, 2, 3}) {
      if (extent(s, axis) != extent(first, axis)) {
        throw DimensionError("concat_channels: part " + std::to_string(i) + " differs along axis " +
                             axis_name(axis) + " (" + s.str() + " vs " + first.str() + ")");
      }
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = first.plane();
  std::vector<T> out(os.numel());
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    const Shape s = p.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* src = p.data().data() + static_cast<std::size_t>(n) * s.c * plane;
      std::copy(src, src + s.c * plane,
                out.begin() + (static_cast<std::size_t>(n) * channels + c0) * plane);
    }
    c0 += s.c;
  }
  return Tensor<T>::make_result(os, std::move(out), parts, [os, offsets, plane](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node<T>& pn = *self.parents[i];
      if (!pn.requires_grad) continue;
      pn.ensure_grad();
      const int pc = pn.shape.c;
      for (int n = 0; n < os.n; ++n) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * os.c + offsets[i]) * plane;
        T* dst = pn.grad.data() + static_cast<std::size_t>(n) * pc * plane;
        for (std::size_t j = 0; j < pc * plane; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int start, int count) {
  const Shape xs = x.shape();
  if (start < 0 || count < 1 || start + count > xs.c) {
    throw DimensionError("slice_channels: range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") outside axis C of " + xs.str());
  }
  const Shape os{xs.n, count, xs.h, xs.w};
  const std::size_t plane = xs.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x.data().data() + (static_cast<std::size_t>(n) * xs.c + start) * plane;
    std::copy(src, src + count * plane, out.begin() + static_cast<std::size_t>(n) * count * plane);
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [xs, start, count, plane](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (int n = 0; n < xs.n; ++n) {
      const T* src = self.grad.data() + static_cast<std::size_t>(n) * count * plane;
      T* dst = xn.grad.data() + (static_cast<std::size_t>(n) * xs.c + start) * plane;
      for (std::size_t j = 0; j < count * plane; ++j) dst[j] += src[j];
    }
  });
}

// ---------------------------------------------------------------- activation

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind) {
  std::vector<T> out(x.data().begin(), x.data().end());
  switch (kind) {
    case Act::kRelu:
      if (auto* rec = debug::BranchRecorder::active()) {
        BitFolder bits(rec);
        for (const T& v : out) bits.push(v > T(0));
      }
      for (T& v : out) v = v > T(0) ? v : T(0);
      break;
    case Act::kGelu:
      for (T& v : out) v = gelu(v);
      break;
    case Act::kTanh:
      for (T& v : out) v = std::tanh(v);
      break;
    case Act::kSigmoid:
      for (T& v : out) v = sigmoid_scalar(v);
      break;
    case Act::kIdentity:
      break;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x}, [kind](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    const std::size_t count = self.grad.size();
    for (std::size_t i = 0; i < count; ++i) {
      const T g = self.grad[i];
      T d = T(1);
      switch (kind) {
        case Act::kRelu:
          d = xn.data[i] > T(0) ? T(1) : T(0);
          break;
        case Act::kGelu:
          d = gelu_grad(xn.data[i]);
          break;
        case Act::kTanh:
          d = T(1) - self.data[i] * self.data[i];
          break;
        case Act::kSigmoid:
          d = self.data[i] * (T(1) - self.data[i]);
          break;
        case Act::kIdentity:
          break;
      }
      xn.grad[i] += g * d;
    }
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& x, Reduce kind) {
  const Shape xs = x.shape();
  const Shape os{xs.n, 1, xs.h, xs.w};
  const std::size_t plane = xs.plane();
  std::vector<T> out(os.numel());
  std::vector<int> argmax;
  if (kind == Reduce::kMax) argmax.resize(os.numel());
  const T* xd = x.data().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* base = xd + static_cast<std::size_t>(n) * xs.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t o = static_cast<std::size_t>(n) * plane + p;
      if (kind == Reduce::kMax) {
        int best = 0;
        T bv = base[p];
        for (int c = 1; c < xs.c; ++c) {
          const T v = base[static_cast<std::size_t>(c) * plane + p];
          if (v > bv) {
            bv = v;
            best = c;
          }
        }
        out[o] = bv;
        argmax[o] = best;
        if (auto* rec = debug::BranchRecorder::active()) rec->fold(static_cast<std::uint64_t>(best));
      } else {
        T s = 0;
        for (int c = 0; c < xs.c; ++c) s += base[static_cast<std::size_t>(c) * plane + p];
        out[o] = s / static_cast<T>(xs.c);
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [xs, plane, kind, argmax](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (int n = 0; n < xs.n; ++n) {
      T* base = xn.grad.data() + static_cast<std::size_t>(n) * xs.c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t o = static_cast<std::size_t>(n) * plane + p;
        const T g = self.grad[o];
        if (kind == Reduce::kMax) {
          base[static_cast<std::size_t>(argmax[o]) * plane + p] += g;
        } else {
          const T share = g / static_cast<T>(xs.c);
          for (int c = 0; c < xs.c; ++c) base[static_cast<std::size_t>(c) * plane + p] += share;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  const Shape xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw DimensionError("maxpool2: H and W must be even, got " + xs.str());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  std::vector<T> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const T* xd = x.data().data();
  std::size_t o = 0;
  for (int p = 0; p < xs.n * xs.c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * xs.plane();
    for (int i = 0; i < os.h; ++i) {
      for (int j = 0; j < os.w; ++j, ++o) {
        const std::size_t cand[4] = {base + static_cast<std::size_t>(2 * i) * xs.w + 2 * j,
                                     base + static_cast<std::size_t>(2 * i) * xs.w + 2 * j + 1,
                                     base + static_cast<std::size_t>(2 * i + 1) * xs.w + 2 * j,
                                     base + static_cast<std::size_t>(2 * i + 1) * xs.w + 2 * j + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (xd[cand[q]] > xd[best]) best = cand[q];
        }
        out[o] = xd[best];
        argmax[o] = best;
        if (auto* rec = debug::BranchRecorder::active()) rec->fold(best - cand[0]);
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [argmax](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) xn.grad[argmax[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> global_mean(const Tensor<T>& x) {
  const Shape xs = x.shape();
  const Shape os{xs.n, xs.c, 1, 1};
  const std::size_t plane = xs.plane();
  std::vector<T> out(os.numel());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const T* src = x.data().data() + p * plane;
    T s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out[p] = s / static_cast<T>(plane);
  }
  return Tensor<T>::make_result(os, std::move(out), {&x}, [plane](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t p = 0; p < self.grad.size(); ++p) {
      const T g = self.grad[p] / static_cast<T>(plane);
      T* dst = xn.grad.data() + p * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
    }
  });
}

template <typename T>
Tensor<T> global_pool_project(const Tensor<T>& x, const Tensor<T>& proj_weight,
                              const Tensor<T>& proj_bias) {
  if (proj_weight.shape().c != x.shape().c || proj_weight.shape().h != 1 ||
      proj_weight.shape().w != 1) {
    throw DimensionError("global_pool_project: projection " + proj_weight.shape().str() +
                         " does not accept width " + std::to_string(x.shape().c) + " (axis C)");
  }
  return conv2d(global_mean(x), proj_weight, &proj_bias, ConvGeometry{});
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, Shape shape) {
  const Shape xs = x.shape();
  for (int axis = 0; axis < 4; ++axis) {
    const int e = extent(xs, axis);
    if (e != 1 && e != extent(shape, axis)) {
      throw DimensionError(std::string("broadcast_to: cannot expand axis ") + axis_name(axis) +
                           " from " + std::to_string(e) + " to " + std::to_string(extent(shape, axis)));
    }
  }
  const std::size_t sn = xs.n == 1 ? 0 : static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t sc = xs.c == 1 ? 0 : static_cast<std::size_t>(xs.h) * xs.w;
  const std::size_t sh = xs.h == 1 ? 0 : static_cast<std::size_t>(xs.w);
  const std::size_t sw = xs.w == 1 ? 0 : 1;
  std::vector<std::size_t> src(shape.numel());
  std::size_t o = 0;
  for (int n = 0; n < shape.n; ++n)
    for (int c = 0; c < shape.c; ++c)
      for (int h = 0; h < shape.h; ++h)
        for (int w = 0; w < shape.w; ++w) src[o++] = n * sn + c * sc + h * sh + w * sw;
  std::vector<T> out(shape.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[src[i]];
  return Tensor<T>::make_result(shape, std::move(out), {&x}, [src](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) xn.grad[src[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> coord_grid(int h, int w) {
  if (h < 1 || w < 1) throw DimensionError("coord_grid: h and w must be >= 1");
  auto linspace = [](int count, int i) -> T {
    if (count == 1) return T(-1);
    return T(-1) + T(2) * static_cast<T>(i) / static_cast<T>(count - 1);
  };
  Tensor<T> grid(Shape{1, 2, h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      grid.at(0, 0, i, j) = linspace(w, j);
      grid.at(0, 1, i, j) = linspace(h, i);
    }
  }
  return grid;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return Tensor<T>::make_result(Shape{}, {s}, {&x}, [](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    xn.ensure_grad();
    const T g = self.grad[0];
    for (T& d : xn.grad) d += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> logit(const Tensor<T>& p, T eps) {
  std::vector<T> out(p.numel());
  if (auto* rec = debug::BranchRecorder::active()) {
    BitFolder bits(rec);
    for (const T v : p.data()) bits.push(v < eps || v > T(1) - eps);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T q = std::clamp(p.data()[i], eps, T(1) - eps);
    out[i] = std::log(q / (T(1) - q));
  }
  return Tensor<T>::make_result(p.shape(), std::move(out), {&p}, [eps](Node<T>& self) {
    Node<T>& pn = *self.parents[0];
    pn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T q = pn.data[i];
      if (q < eps || q > T(1) - eps) continue;
      pn.grad[i] += self.grad[i] / (q * (T(1) - q));
    }
  });
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw DimensionError("stack_batch: no items");
  const Shape s0 = items.front().shape();
  int n = 0;
  for (const auto& it : items) {
    const Shape s = it.shape();
    if (s.c != s0.c || s.h != s0.h || s.w != s0.w) {
      throw DimensionError("stack_batch: item " + s.str() + " does not match " + s0.str());
    }
    n += s.n;
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(n) * s0.c * s0.plane());
  for (const auto& it : items) out.insert(out.end(), it.data().begin(), it.data().end());
  return Tensor<T>(Shape{n, s0.c, s0.h, s0.w}, std::move(out));
}

template <typename T>
Tensor<T> batch_item(const Tensor<T>& x, int index) {
  const Shape s = x.shape();
  if (index < 0 || index >= s.n) throw DimensionError("batch_item: index outside axis N");
  const std::size_t stride = static_cast<std::size_t>(s.c) * s.plane();
  auto begin = x.data().begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor<T>(Shape{1, s.c, s.h, s.w}, std::vector<T>(begin, begin + stride));
}

#define COFI_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,               \
                            const ConvGeometry&);                                                \
  template Tensor<T> resize2(const Tensor<T>&, ResizeDir);                                       \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                                \
  template Tensor<T> eltwise(const Tensor<T>&, const Tensor<T>&, EltOp);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                             \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                 \
  template Tensor<T> activation(const Tensor<T>&, Act);                                          \
  template Tensor<T> channel_reduce(const Tensor<T>&, Reduce);                                   \
  template Tensor<T> maxpool2(const Tensor<T>&);                                                 \
  template Tensor<T> global_mean(const Tensor<T>&);                                              \
  template Tensor<T> global_pool_project(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> broadcast_to(const Tensor<T>&, Shape);                                      \
  template Tensor<T> coord_grid<T>(int, int);                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> logit(const Tensor<T>&, T);                                                 \
  template Tensor<T> stack_batch(const std::vector<Tensor<T>>&);                                 \
  template Tensor<T> batch_item(const Tensor<T>&, int);

COFI_INSTANTIATE_OPS(float)
COFI_INSTANTIATE_OPS(double)

}  // namespace cofi
