#include "quadkit/autograd.hpp"

#include <stdexcept>

namespace quadkit::ad {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor v) {
  nodes_.push_back(Node{std::move(v), {}, false, {}, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::input(Tensor v) {
  nodes_.push_back(Node{std::move(v), {}, record_grads_, {}, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (!record_grads_) return constant(p.value);
  nodes_.push_back(Node{p.value, {}, true, {}, &p});
  return Var{this, nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Var Tape::push(Tensor value, bool needs_grad, Backward fn) {
  nodes_.push_back(Node{std::move(value), {}, needs_grad, needs_grad ? std::move(fn) : Backward{}, nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id].needs_grad) return;
  grad_buffer(v) += g;
}

void Tape::backward(Var out) {
  if (value(out).numel() != 1) throw std::invalid_argument("backward() without a seed needs a scalar output");
  backward(out, Tensor(value(out).shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (seed.shape() != value(out).shape()) throw std::invalid_argument("seed shape does not match output");
  accumulate(out, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

}  // namespace quadkit::ad
