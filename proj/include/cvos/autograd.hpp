#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// Every op produces a Var holding its value and, when any input requires a
// gradient, a closure that pushes the output gradient back to its inputs.
// Graphs are built per forward pass and released with their last Var.

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace cvos::ag {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
};

std::size_t shape_numel(const std::vector<int>& shape);

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Returns the gradient buffer, allocating zeros on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(Tensor t);
  static Var leaf(Tensor t);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient after backward(); zeros if the node was never reached.
  Tensor grad() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<void(Node&)>;

// Creates an op node. `fn` is dropped when no parent needs a gradient.
Var make_op(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
Var make_op(Tensor value, std::span<const Var> parents, BackwardFn fn);

// Runs reverse accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

// x: [C,H,W]; w: [O,C,k,k]; b: [O]. Zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: [C,H,W]; w: [C,O,k,k]; b: [O]. Output (H-1)*stride - 2*pad + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var sub_scalar(const Var& x, double c);
Var scale(const Var& x, double c);
Var sum(const Var& x);
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// Concatenates along the leading axis; trailing dims must agree.
Var concat0(std::span<const Var> parts);
// Rows [begin, begin + count) along the leading dimension.
Var slice0(const Var& x, int begin, int count);
Var reshape(const Var& x, std::vector<int> shape);
Var transpose2d(const Var& x);
// op(a) * op(b), where op transposes when the flag is set. 2D only.
Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b);
Var softmax_rows(const Var& x);
// Scales every row of a matrix to unit L2 norm.
Var normalize_rows(const Var& x, double eps = 1e-6);

// [C,H,W] -> [C,H+bottom,W+right], replicating the last row/column.
Var pad_replicate(const Var& x, int bottom, int right);
// [C,H,W] -> [C,h,w] keeping the top-left corner.
Var crop(const Var& x, int h, int w);

}  // namespace cvos::ag
