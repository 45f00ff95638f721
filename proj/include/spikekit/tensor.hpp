#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spikekit/types.hpp"

namespace spikekit {

class Tensor;

namespace detail {

/** One node of the reverse-mode tape.
 *
 *  Values are immutable once the node is built; `grad` is the only slot
 *  written later, and only during backward(). A node with no parents and
 *  no backward function is a leaf (parameter or constant).
 */
struct TapeNode {
  Shape shape;
  ArrayX values;
  ArrayX grad;
  bool grad_ready = false;  // grad allocated and holding a partial sum
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TapeNode>> parents;
  // Reads this->grad, accumulates into parents. Captures saved forward
  // context by value.
  std::function<void(TapeNode&)> backward;

  template <typename Expr>
  void accumulate(const Expr& g) {
    if (!grad_ready) {
      grad = g;
      grad_ready = true;
    } else {
      grad += g;
    }
  }
};

using NodePtr = std::shared_ptr<TapeNode>;

/** Thread-local switch: when false, ops produce constants (no lineage). */
bool grad_enabled();
void set_grad_enabled(bool on);

}  // namespace detail

/** Scoped "no tape" guard for evaluation passes. */
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) {
    detail::set_grad_enabled(false);
  }
  ~NoGradGuard() { detail::set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/** Dense real tensor with reverse-mode lineage.
 *
 *  Copying a Tensor is cheap and aliases the same tape node; the values
 *  of a node are never mutated after creation (the optimizer's in-place
 *  weight update between steps is the documented exception).
 */
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, scalar_t value, bool requires_grad = false) {
    ArrayX v = ArrayX::Constant(shape_size(shape), value);
    return from_array(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(scalar_t value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  static Tensor from_array(Shape shape, ArrayX values,
                           bool requires_grad = false) {
    if (values.size() != shape_size(shape))
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " +
                                  shape_str(shape));
    for (index_t e : shape)
      if (e < 1)
        throw std::invalid_argument("tensor: bad extent in " +
                                    shape_str(shape));
    auto n = std::make_shared<detail::TapeNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  index_t size() const { return node_->values.size(); }
  index_t dim(size_t axis) const { return node_->shape.at(axis); }
  size_t ndim() const { return node_->shape.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const ArrayX& values() const { return node_->values; }

  /** Value of a 1-element tensor. */
  scalar_t item() const {
    if (size() != 1)
      throw std::invalid_argument("item: tensor has " +
                                  std::to_string(size()) + " elements");
    return node_->values[0];
  }

  /** Gradient accumulated by the last backward() pass. */
  const ArrayX& grad() const {
    if (!node_->grad_ready)
      throw std::logic_error("grad: no gradient recorded for this tensor");
    return node_->grad;
  }
  bool has_grad() const { return node_ && node_->grad_ready; }
  void clear_grad() {
    node_->grad_ready = false;
    node_->grad.resize(0);
  }

  /** Same values, no tape lineage: gradients never propagate past it. */
  Tensor detach() const {
    auto n = std::make_shared<detail::TapeNode>();
    n->shape = node_->shape;
    n->values = node_->values;
    n->requires_grad = false;
    n->op = "detach";
    return Tensor(std::move(n));
  }

  /** In-place value update; callers must only use this between steps
   *  (optimizer updates, checkpoint restore). */
  void set_values(const ArrayX& v) {
    if (v.size() != node_->values.size())
      throw std::invalid_argument("set_values: size mismatch");
    node_->values = v;
  }

  detail::TapeNode* node() const { return node_.get(); }
  const detail::NodePtr& node_ptr() const { return node_; }

  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/** Builds a tape node for an op. `backward` may be empty for ops with no
 *  differentiable inputs. Lineage is recorded only when grads are enabled
 *  and some parent requires grad. */
Tensor make_op(const char* op, Shape shape, ArrayX values,
               std::vector<Tensor> parents,
               std::function<void(detail::TapeNode&)> backward);

/** Reverse pass from a scalar loss. Every reachable tensor that
 *  requires grad receives (accumulates) d loss / d tensor. */
void backward(const Tensor& loss);

}  // namespace spikekit
