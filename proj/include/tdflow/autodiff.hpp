#pragma once

#include "tdflow/common.hpp"

#include <functional>
#include <vector>

namespace tdflow {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode autodiff over dense row-major matrices. Nodes are recorded in
/// execution order; backward() walks them in reverse and accumulates gradients
/// into the sinks registered with param().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// A leaf whose gradient is added into `*grad_sink` by backward().
  Var param(const Mat& value, Mat* grad_sink);

  Var matmul(Var a, Var b);
  /// a + bias with bias (1 x cols) broadcast over rows.
  Var add_bias(Var a, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var mish(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  /// Multiplies row i of `a` by weights[i].
  Var mul_rows(Var a, const Vec& weights);
  Var sum(Var a);
  Var square(Var a);
  /// Sum_i w_i ||a_i - target_i||^2 as a 1x1 node; the target is a constant.
  Var weighted_sq_error(Var a, const Mat& target, const Vec& weights);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and backpropagates.
  void backward(Var root);
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, int)> back;  // empty for leaves
    Mat* sink = nullptr;
  };

  Var push(Mat value, std::function<void(Tape&, int)> back);
  Mat& grad_of(int id);
  const Mat& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void check(Var v) const;

  std::vector<Node> nodes_;
};

/// Elementwise mish(x) = x tanh(softplus(x)) and its derivative.
Mat mish(const Mat& x);
Mat mish_grad(const Mat& x);
/// Both at once; cheaper than two calls.
void mish_and_grad(const Mat& x, Mat& value, Mat& grad);

}  // namespace tdflow
