#include "spikekit/tensor.hpp"

#include <unordered_set>

namespace spikekit {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

}  // namespace detail

Tensor make_op(const char* op, Shape shape, ArrayX values,
               std::vector<Tensor> parents,
               std::function<void(detail::TapeNode&)> backward) {
  auto n = std::make_shared<detail::TapeNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->op = op;
  bool track = false;
  if (detail::grad_enabled()) {
    for (const Tensor& p : parents)
      if (p.requires_grad()) track = true;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");

  // Post-order DFS gives a topological order of the reachable tape; the
  // reverse pass then visits every node before its parents.
  std::vector<detail::TapeNode*> order;
  std::unordered_set<detail::TapeNode*> seen;
  struct Frame {
    detail::TapeNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (loss.node()->requires_grad) {
    stack.push_back({loss.node(), 0});
    seen.insert(loss.node());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TapeNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(ArrayX::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TapeNode* n = *it;
    if (n->backward && n->grad_ready) n->backward(*n);
  }
}

}  // namespace spikekit
