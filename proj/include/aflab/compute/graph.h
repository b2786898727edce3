#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "aflab/compute/tensor.h"

namespace aflab {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph& graph() const { return *graph_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Operations append nodes in topological order; Backward
// walks them in reverse. Parameter leaves flush their gradient into
// Parameter::grad only when the parameter is trainable.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var Constant(Tensor value);
  // Differentiable leaf without an owning Parameter (used by gradient checks).
  Var Input(Tensor value);
  // Leaf referencing a Parameter's value without copying it.
  Var Param(Parameter& p);

  // Records an operation node. `parents` decide whether the node requires grad.
  Var Record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var Record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  const Tensor& value(int id) const;
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of `id`, zero-initialized on first access.
  Tensor& MutableGrad(int id);
  bool has_grad(int id) const { return nodes_[id].grad_ready; }

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void Backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace aflab
