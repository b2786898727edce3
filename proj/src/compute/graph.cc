#include "aflab/compute/graph.h"

#include "aflab/errors.h"

namespace aflab {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw DimensionError("Var::scalar on " + v.ShapeString());
  return v(0, 0);
}

Var Graph::Constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Param(Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.requires_grad = grad_enabled_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return Record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Graph::Record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (&p.graph() != this) throw InputError("Graph::Record: parent from another graph");
      if (nodes_[p.id()].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

const Tensor& Graph::grad(int id) const {
  const Node& n = nodes_[id];
  if (!n.grad_ready) throw InputError("Graph::grad: node has no gradient");
  return n.grad;
}

Tensor& Graph::MutableGrad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    const Tensor& v = value(id);
    n.grad = Tensor::Zeros(v.rows(), v.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Graph::Backward(Var root) {
  if (&root.graph() != this) throw InputError("Graph::Backward: root from another graph");
  const Tensor& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1) throw DimensionError("Backward: root must be scalar, got " + rv.ShapeString());
  if (!nodes_[root.id()].requires_grad) return;
  MutableGrad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.grad_ready) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr && n.param->trainable) n.param->grad.AddInPlace(n.grad);
  }
}

}  // namespace aflab
