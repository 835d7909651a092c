#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cofinet/tensor.hpp"

// Differentiable primitives. All functions are templated on the scalar type
// and explicitly instantiated for float and double.
namespace cofi {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// Output extent of a convolution along one axis; may be <= 0 for invalid setups.
int conv_out_size(int in, int kernel, const ConvGeometry& g);

// x: (N,Cin,H,W), weight: (Cout,Cin,k,k) with k odd, bias: (1,Cout,1,1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvGeometry& geometry);

enum class ResizeDir { kUp, kDown };

// Up: 2× bilinear (half-pixel centers). Down: 2×2 mean pooling.
template <typename T>
Tensor<T> resize2(const Tensor<T>& x, ResizeDir dir);

// Bilinear resampling to an arbitrary size, half-pixel centers, edge clamped.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);

enum class EltOp { kMul, kAdd, kSub };

// Broadcasts any axis of extent 1 against the other operand.
template <typename T>
Tensor<T> eltwise(const Tensor<T>& a, const Tensor<T>& b, EltOp op);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return eltwise(a, b, EltOp::kMul);
}
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return eltwise(a, b, EltOp::kAdd);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return eltwise(a, b, EltOp::kSub);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int start, int count);

enum class Act { kRelu, kGelu, kTanh, kSigmoid, kIdentity };

const char* act_name(Act kind);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(x, Act::kSigmoid);
}

enum class Reduce { kMax, kMean };

// Reduces over channels to (N,1,H,W). Max routes its gradient to the first
// maximal channel.
template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& x, Reduce kind);

// 2×2 stride-2 max pooling, gradient to the first maximal element.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);

// Spatial mean per channel: (N,C,H,W) -> (N,C,1,1).
template <typename T>
Tensor<T> global_mean(const Tensor<T>& x);

// Spatial mean followed by an affine map to an L-wide latent (N,L,1,1).
// proj_weight is (L,C,1,1), proj_bias is (1,L,1,1).
template <typename T>
Tensor<T> global_pool_project(const Tensor<T>& x, const Tensor<T>& proj_weight,
                              const Tensor<T>& proj_bias);

// Repeats axes of extent 1 up to `shape`.
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, Shape shape);

// (1,2,h,w): channel 0 holds x = linspace(-1,1,w) along columns, channel 1
// holds y = linspace(-1,1,h) along rows. A length-1 linspace is {-1}.
template <typename T>
Tensor<T> coord_grid(int h, int w);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// log(p / (1 - p)) with p clamped to [eps, 1 - eps]; zero gradient where clamped.
template <typename T>
Tensor<T> logit(const Tensor<T>& p, T eps);

// Batch helpers without gradient tracking.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items);
template <typename T>
Tensor<T> batch_item(const Tensor<T>& x, int index);

namespace debug {
// Scales conv2d weight gradients by 1.05 while enabled. Only used to prove
// that the gradient checker catches a broken backward pass.
void set_corrupt_conv_backward(bool on);
bool corrupt_conv_backward();

// While alive, non-smooth ops on this thread (ReLU, max selections, logit
// clamping) fold their branch decisions into fingerprint(). Two evaluations
// with equal fingerprints lie on the same smooth piece.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void reset() { hash_ = kSeed; }
  void fold(std::uint64_t word);

  static BranchRecorder* active();

 private:
  static constexpr std::uint64_t kSeed = 0xcbf29ce484222325ULL;
  BranchRecorder* previous_;
  std::uint64_t hash_ = kSeed;
};
}  // namespace debug

}  // namespace cofi
