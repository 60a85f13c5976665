#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sslts/core/tensor.hpp"

namespace sslts::ag {

// Tape node. Nodes are created in forward order, so creation ids form a valid
// topological order and backward can simply walk ids downward.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool has_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  void ensure_grad() {
    if (!has_grad) {
      grad = Tensor<T>::zeros(value.shape());
      has_grad = true;
    }
  }

  void accumulate(const Tensor<T>& g) {
    ensure_grad();
    T* dst = grad.data();
    const T* src = g.data();
    const int64_t n = grad.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
template <class T>
uint64_t next_node_id() {
  static uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = detail::next_node_id<T>();
  return n;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return make_leaf(std::move(value), false);
}

template <class T>
Var<T> make_op(const char* op, std::vector<Var<T>> parents, Tensor<T> value,
               std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->op = op;
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  n->id = detail::next_node_id<T>();
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

// Detached view: same value, no history.
template <class T>
Var<T> detach(const Var<T>& x) {
  return constant(x->value);
}

// Reverse pass from a scalar root. Gradients accumulate into every reachable
// node with requires_grad; leaves keep them until zero_grad.
template <class T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (!root->requires_grad) return;
  root->ensure_grad();
  root->grad[0] = T(1);

  std::vector<Node<T>*> reachable;
  std::vector<Node<T>*> stack{root.get()};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    if (n->id == 0) continue;  // already visited marker unused; ids start at 1
    reachable.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && !p->has_grad) {
        p->ensure_grad();
        stack.push_back(p.get());
      }
  }
  // ensure_grad doubles as the visited marker above; sort newest-first.
  std::sort(reachable.begin(), reachable.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->id > b->id; });
  for (Node<T>* n : reachable)
    if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace sslts::ag
