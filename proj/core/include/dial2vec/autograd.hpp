#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace dial2vec::ag {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node on a Tape. Values are computed eagerly; gradients become
// available after Tape::backward on a scalar root.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Arena of operations in topological order. One tape per forward pass;
// backward walks the arena in reverse.
class Tape {
 public:
  // leaf that accumulates a gradient (a trainable parameter)
  Var parameter(const Matrix& value);
  // leaf without a gradient (inputs, fixed masks)
  Var constant(Matrix value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var matmul(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var transpose(Var a);
  // a: n x d plus a 1 x d row broadcast over rows
  Var add_row_broadcast(Var a, Var row);
  Var col_block(Var a, int first_col, int num_cols);
  Var hcat(const std::vector<Var>& parts);
  // rows of a table selected by index; backward scatter-adds
  Var gather_rows(Var table, const std::vector<int>& indices);
  // elementwise product with a fixed 0/1 (or arbitrary) matrix
  Var cwise_mul_const(Var a, const Matrix& factor);
  // rows scaled by a fixed per-row factor (interlocutor masks)
  Var scale_rows_const(Var a, const Eigen::VectorXd& row_factors);
  Var softmax_rows(Var a);
  // per-row normalization with learned gain/bias (both 1 x d)
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
  Var gelu(Var a);
  // 1 x d column means (fixed divisor = row count)
  Var mean_rows(Var a);
  // scalar ops on 1 x 1 nodes
  Var dot(Var a, Var b);
  Var mul_scalar(Var a, Var b);
  Var div_scalar(Var a, Var b);
  Var sqrt_scalar(Var a);
  Var neg(Var a);
  // cosine similarity of two 1 x d rows; callers guard zero norms
  Var cosine(Var a, Var b);
  // a: 1 x n row -> 1 x 1 log-sum-exp, max-shifted
  Var logsumexp_row(Var a);

  // Accumulates d(root)/d(node) into every node reachable from root.
  // root must be 1 x 1. Gradients reset on each call.
  void backward(Var root);

  const Matrix& value_of(int id) const { return nodes_[id].value; }
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  Var emplace(Matrix value, bool requires_grad, std::function<void(Tape&)> fn);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  Matrix& grad_ref(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace dial2vec::ag
