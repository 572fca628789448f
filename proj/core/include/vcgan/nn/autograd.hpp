#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vcgan/nn/tensor.hpp"

namespace vcgan::nn {

// A node of the reverse-mode tape. Nodes only point at their parents, so a
// graph is released as soon as the last Var referencing its output dies.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape != value.shape || grad.data.size() != value.data.size()) {
      grad = Tensor<T>(value.shape);
    }
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  // Leaf with the same value and no history.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Builds an op output. `parents` are kept (and `fn` installed) only when at
  // least one parent requires a gradient.
  static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> fn);

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(loss)/d(loss) = 1 and propagates through the tape. `loss` must hold
// exactly one element.
template <typename T>
void backward(const Var<T>& loss);

extern template class Var<float>;
extern template class Var<double>;
extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace vcgan::nn
