#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "more/tensor.hpp"

namespace more {

class Tape;

// Handle to a node recorded on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. One tape per training step; confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Var leaf(Tensor value, std::string name = "leaf");
  Var constant(Tensor value) { return leaf(std::move(value), "const"); }

  int push(Tensor value, std::string op, std::vector<int> parents, BackwardFn backward);
  Var wrap(int id) { return Var{this, id}; }

  const Tensor& value(int id) const { return nodes_[id].value; }
  const std::string& op_name(int id) const { return nodes_[id].op; }
  std::size_t node_count() const { return nodes_.size(); }

  // Runs reverse-mode once. loss must be scalar; a second call is an error.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  // Gradient of the backward loss w.r.t. node id; zeros if the node was
  // never reached.
  Tensor grad(int id) const;
  Tensor grad(Var v) const { return grad(v.id); }

  void accumulate(int id, const Tensor& g);

  // Name of the first node holding a non-finite value, or empty string.
  std::string first_nonfinite() const;

 private:
  struct Node {
    Tensor value;
    std::string op;
    std::vector<int> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_done_ = false;
};

// ---- differentiable operations -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_rowvec(Var a, Var v);             // a: [m x n], v: [n] or [1 x n]
Var scale(Var a, double c);
Var affine(Var a, double alpha, double beta);  // alpha*a + beta elementwise
Var cmul(Var a, const Tensor& mask);      // elementwise by a constant tensor

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var softmax_rows(Var a);                  // 1-D input treated as one row
Var tanh_op(Var a);
Var gelu(Var a);
Var leaky_relu(Var a, double slope = 0.01);
Var exp_op(Var a);
Var log_op(Var a);
Var softplus(Var a);

Var sum_all(Var a);
Var mean_all(Var a);
Var mean_rows(Var a);                     // [m x n] -> [n], mean over rows
Var row_sums(Var a);                      // [m x n] -> [m]

Var slice_rows(Var a, std::size_t r0, std::size_t n);
Var slice_cols(Var a, std::size_t c0, std::size_t n);
Var gather_rows(Var a, const std::vector<std::size_t>& idx);
Var gather_elems(Var a, const std::vector<std::size_t>& idx);  // flat indices
Var permute_gather(Var a, const std::vector<std::size_t>& index_map, Shape out_shape);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var repeat_rows(Var row, std::size_t m);  // [n] or [1 x n] -> [m x n]

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var l2_normalize_rows(Var x, double eps = 1e-12);
Var rows_scale(Var a, Var s);             // row i of a scaled by s[i]

Var cosine(Var a, Var b);                 // scalar; 0 on a zero vector
Var dot(Var a, Var b);
Var logsumexp(Var a);                     // over all elements -> scalar

// k largest entries of 1-D x in descending order; ties break to the lowest
// index. Gradients flow only through the selected entries.
struct TopK {
  Var values;
  std::vector<std::size_t> indices;
};
TopK topk(Var x, std::size_t k);
std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k);

// Mean over rows of (logsumexp(row) - row[label]); labels in [0, n).
Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& labels);

// Mean over classes of -(y log s(z) + (1-y) log s(-z)), s = logistic.
Var multilabel_soft_margin(Var logits, const std::vector<double>& targets);

// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-8).
// f returns (loss value, analytic gradient w.r.t. x).
double finite_diff_check(
    const std::function<std::pair<double, Tensor>(const Tensor&)>& f,
    const Tensor& x, double step = 1e-5);

}  // namespace more
