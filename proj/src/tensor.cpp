#include "cofinet/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "cofinet/error.hpp"

namespace cofi {
namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw DimensionError("tensor: non-positive extent in shape " + shape.str());
  }
  node_->shape = shape;
  node_->data.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw DimensionError("tensor: non-positive extent in shape " + shape.str());
  }
  if (values.size() != shape.numel()) {
    throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                         shape.str());
  }
  node_->shape = shape;
  node_->data = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item: tensor of shape " + shape().str() + " is not a scalar");
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.node_ = std::make_shared<detail::Node<T>>();
  out.node_->shape = node_->shape;
  out.node_->data = node_->data;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw StateError("backward: needs a scalar, got shape " + shape().str());
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  NoGradGuard no_grad;
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  Tensor out(shape, std::move(values));
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const Tensor* in : inputs) out.node_->parents.push_back(in->node_);
  out.node_->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 const std::vector<Tensor>& inputs, BackwardFn fn) {
  Tensor out(shape, std::move(values));
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const Tensor& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward_fn = std::move(fn);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cofi
