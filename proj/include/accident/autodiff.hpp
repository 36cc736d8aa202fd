#pragma once

#include <functional>
#include <vector>

#include "accident/tensor.hpp"

namespace accident {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Tensor values. Ops append nodes to the tape;
// backward() walks the tape in reverse and accumulates gradients into every
// node that (transitively) depends on a grad-enabled leaf.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // root must be a scalar (1x1) node.
  void backward(Var root);
  void reset();
  std::size_t size() const { return nodes_.size(); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                       // elementwise, same shape
  Var cmul(Var a, Tensor c);                   // elementwise by constant
  Var cadd(Var a, Tensor c);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var smul(Var s, Var x);                      // s is 1x1, broadcast multiply
  Var add_rowvec(Var x, Var r);                // x: [m,n], r: [1,n]
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var log_clamped(Var a, double clamp_min);    // log(max(x, clamp_min))
  Var softplus(Var a);
  Var reciprocal(Var a);
  Var softmax_rows(Var a);
  Var rownorm_abs(Var a);                      // row / sum(|row|), zero rows pass through
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int from, int to);
  Var slice_rows(Var a, int from, int to);
  Var row(Var a, int r) { return slice_rows(a, r, r + 1); }
  Var stack_rows(const std::vector<Var>& rows);
  Var shift_rows(Var a, int s);                // y[t] = x[t-s], zero-fill
  Var masked_mean_rows(Var a, Tensor mask);    // a: [m,n], mask: length m -> [1,n]
  Var sum_all(Var a);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  Tensor& grad_ref(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace accident
