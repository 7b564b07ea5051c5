#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

#include "tlla/tensor.hpp"

namespace tlla {

// Global count of backward passes, used by tests to verify that
// inference paths are forward-only.
std::uint64_t backward_pass_count();
void reset_backward_pass_count();

// Append-only record of primitive operations over dense tensors.
// Parents always precede children, so reverse index order is a reverse
// topological order and the backward pass visits each node once.
//
// Only leaves created with requires_grad=true (and nodes downstream of
// them) carry gradients; everything else is treated as a detached
// constant.
class Tape {
 public:
  using Var = int;

  Var leaf(Tensor value, bool requires_grad = false);

  // y = M[r, :]
  Var row(Var m, std::size_t r);
  // y_j = sum_r M[r, j]
  Var sum_rows(Var m);
  Var add(Var a, Var b);
  Var scale(Var a, double c);
  // Offset by a constant tensor (no gradient through the constant).
  Var add_const(Var a, Tensor c);
  // y = W x + b, W: [m x n], b: [m], x: [n]
  Var affine(Var w, Var b, Var x);
  Var tanh_(Var x);
  // y = x / |x|_2
  Var normalize(Var x);
  // scalar a.b
  Var dot(Var a, Var b);
  // scalar a.b / (|a||b|)
  Var cosine(Var a, Var b);
  Var concat_scalars(const std::vector<Var>& parts);
  // softmax(tau * v), max-subtracted
  Var softmax_t(Var v, double tau);
  Var log_(Var v);
  // scalar y = v[k]
  Var pick(Var v, std::size_t k);
  // elementwise sum of same-shape vars
  Var add_n(const std::vector<Var>& parts);

  const Tensor& value(Var v) const { return nodes_[v].value; }
  double scalar_value(Var v) const { return nodes_[v].value[0]; }

  // Reverse pass from a scalar output. Seeds the output gradient with 1
  // and accumulates into every gradient-tracked leaf.
  void backward(Var output);

  // Gradient of the last backward() with respect to a tracked leaf.
  const Tensor& grad(Var leafv) const;

  // Recompute every node from the leaves; returns the value of `v`.
  // Bit-identical to the recorded forward by construction.
  const Tensor& replay(Var v);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Tape&, Node&)> forward;   // null for leaves
    std::function<void(Tape&, Node&)> backward;  // null for leaves
  };

  Var push(Node n);
  bool any_requires(const std::vector<Var>& parents) const;
  Tensor& grad_ref(Var v) { return nodes_[v].grad; }

  std::vector<Node> nodes_;
};

}  // namespace tlla
