#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "quadkit/tensor.hpp"

namespace quadkit::ad {

/// A trainable tensor with a same-shape gradient accumulator.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Callback used to enumerate the parameters of a block with qualified names.
using ParamVisitor = std::function<void(const std::string& name, Parameter& p)>;

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
};

/// Reverse-mode recording of tensor ops. Nodes are appended in evaluation
/// order; backward() replays them in reverse. One tape per forward pass.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad)>;

  /// With record_grads = false, param() leaves are constants and no backward
  /// closures are kept (pure forward evaluation).
  explicit Tape(bool record_grads = true) : record_grads_(record_grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor v);
  /// Leaf whose gradient can be read back with grad() after backward().
  Var input(Tensor v);
  /// Leaf bound to a parameter; backward() adds into p.grad.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of a node after backward(); zeros when nothing flowed into it.
  Tensor grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Seeds d(out) = 1 (out must hold a single element) and propagates.
  void backward(Var out);
  void backward(Var out, const Tensor& seed);

  /// Records an op result. `fn` runs only if some input requires a gradient.
  Var push(Tensor value, bool needs_grad, Backward fn);
  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);
  void accumulate(Var v, const Tensor& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
  bool record_grads_ = true;
};

}  // namespace quadkit::ad
