#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mapfuse/tensor.hpp"

namespace mapfuse {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int32_t id = -1;

  bool defined() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const { return tape->val_of(id); }
  const Shape& shape() const { return value().shape; }
};

// Records primitive applications in topological (creation) order. Backward is
// a single reverse sweep; gradients accumulate additively into per-node
// buffers that are allocated lazily. A tape is confined to one logical thread.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape<T>&)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> val, bool requires_grad = true) {
    return {this, new_node(std::move(val), requires_grad)};
  }

  Var<T> constant(Tensor<T> val) { return {this, new_node(std::move(val), false)}; }

  // val forwarded bit-identically, gradient flow severed
  Var<T> detach(Var<T> x) { return constant(x.value()); }

  int32_t new_node(Tensor<T> val, bool requires_grad) {
    nodes_.push_back(Node{std::move(val), Tensor<T>{}, requires_grad, nullptr});
    return static_cast<int32_t>(nodes_.size() - 1);
  }

  void set_back(int32_t id, BackFn fn) { nodes_[static_cast<size_t>(id)].back = std::move(fn); }

  const Tensor<T>& val_of(int32_t id) const { return nodes_[static_cast<size_t>(id)].val; }
  Tensor<T>& mutable_val(int32_t id) { return nodes_[static_cast<size_t>(id)].val; }

  bool wants_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool any_wants_grad(std::initializer_list<Var<T>> vars) const {
    for (const auto& v : vars)
      if (wants_grad(v.id)) return true;
    return false;
  }

  // Accumulation buffer, zero-initialized on first touch.
  Tensor<T>& grad_buf(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }

  bool has_grad(int32_t id) const { return !nodes_[static_cast<size_t>(id)].grad.v.empty(); }

  // Gradient of the last backward() w.r.t. this node; zeros if untouched.
  Tensor<T> grad_of(Var<T> v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.grad.v.empty()) return Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::runtime_error("backward: loss living on another tape");
    const Node& ln = nodes_[static_cast<size_t>(loss.id)];
    if (ln.val.size() != 1) throw std::runtime_error("backward: loss must be scalar");
    grad_buf(loss.id)[0] += T(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && !n.grad.v.empty()) n.back(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    nodes_.reserve(256);
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // empty until touched
    bool requires_grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

}  // namespace mapfuse
