#include "tdflow/autodiff.hpp"

namespace tdflow {

const Mat& Var::value() const {
  require(tape_ != nullptr, "Var: unbound handle");
  return tape_->value_of(id_);
}

double Var::item() const {
  const Mat& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::item: node is not 1x1");
  return v(0, 0);
}

Var Tape::push(Mat value, std::function<void(Tape&, int)> back) {
  nodes_.push_back({std::move(value), Mat(), std::move(back), nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::check(Var v) const {
  require(v.tape_ == this && v.id_ >= 0 && v.id_ < static_cast<int>(nodes_.size()), "Tape: foreign or unbound Var");
}

Var Tape::constant(Mat value) { return push(std::move(value), {}); }

Var Tape::param(const Mat& value, Mat* grad_sink) {
  Var v = push(value, {});
  nodes_.back().sink = grad_sink;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const int ia = a.id_, ib = b.id_;
  return push(value_of(ia) * value_of(ib), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.grad_of(ia).noalias() += g * t.value_of(ib).transpose();
    t.grad_of(ib).noalias() += t.value_of(ia).transpose() * g;
  });
}

Var Tape::add_bias(Var a, Var bias) {
  check(a);
  check(bias);
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias: bias must be 1 x cols");
  const int ia = a.id_, ib = bias.id_;
  Mat out = value_of(ia);
  out.rowwise() += value_of(ib).row(0);
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) += g.colwise().sum();
  });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const int ia = a.id_, ib = b.id_;
  return push(value_of(ia) + value_of(ib), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  const int ia = a.id_, ib = b.id_;
  return push(value_of(ia) - value_of(ib), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) -= g;
  });
}

Var Tape::scale(Var a, double c) {
  check(a);
  const int ia = a.id_;
  return push(c * value_of(ia), [ia, c](Tape& t, int self) {
    t.grad_of(ia) += c * t.nodes_[static_cast<std::size_t>(self)].grad;
  });
}

Var Tape::mish(Var a) {
  check(a);
  const int ia = a.id_;
  Mat value, slope;
  mish_and_grad(value_of(ia), value, slope);
  return push(std::move(value), [ia, slope = std::move(slope)](Tape& t, int self) {
    t.grad_of(ia).array() += t.nodes_[static_cast<std::size_t>(self)].grad.array() * slope.array();
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    check(p);
    require(p.rows() == parts.front().rows(), "concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(parts.front().rows(), cols);
  std::vector<int> ids;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    ids.push_back(p.id_);
  }
  return push(std::move(out), [ids](Tape& t, int self) {
    const Mat& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Eigen::Index o = 0;
    for (const int id : ids) {
      const Eigen::Index w = t.value_of(id).cols();
      t.grad_of(id) += g.middleCols(o, w);
      o += w;
    }
  });
}

Var Tape::mul_rows(Var a, const Vec& weights) {
  check(a);
  require(weights.size() == a.rows(), "mul_rows: one weight per row required");
  const int ia = a.id_;
  Mat out = weights.asDiagonal() * value_of(ia);
  return push(std::move(out), [ia, weights](Tape& t, int self) {
    t.grad_of(ia) += weights.asDiagonal() * t.nodes_[static_cast<std::size_t>(self)].grad;
  });
}

Var Tape::sum(Var a) {
  check(a);
  const int ia = a.id_;
  Mat out(1, 1);
  out(0, 0) = value_of(ia).sum();
  return push(std::move(out), [ia](Tape& t, int self) {
    t.grad_of(ia).array() += t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
  });
}

Var Tape::square(Var a) {
  check(a);
  const int ia = a.id_;
  return push(value_of(ia).array().square().matrix(), [ia](Tape& t, int self) {
    t.grad_of(ia).array() += 2.0 * t.value_of(ia).array() * t.nodes_[static_cast<std::size_t>(self)].grad.array();
  });
}

Var Tape::weighted_sq_error(Var a, const Mat& target, const Vec& weights) {
  check(a);
  require(target.rows() == a.rows() && target.cols() == a.cols(), "weighted_sq_error: target shape mismatch");
  require(weights.size() == a.rows(), "weighted_sq_error: one weight per row required");
  const int ia = a.id_;
  Mat diff = value_of(ia) - target;
  Mat out(1, 1);
  out(0, 0) = weights.dot(diff.rowwise().squaredNorm());
  return push(std::move(out), [ia, diff = std::move(diff), weights](Tape& t, int self) {
    const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
    t.grad_of(ia) += (2.0 * g) * (weights.asDiagonal() * diff);
  });
}

void Tape::backward(Var root) {
  check(root);
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be a 1x1 node");
  grad_of(root.id_)(0, 0) += 1.0;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) {
      continue;
    }
    if (n.back) {
      n.back(*this, id);
    } else if (n.sink != nullptr) {
      if (n.sink->size() == 0) {
        *n.sink = Mat::Zero(n.value.rows(), n.value.cols());
      }
      *n.sink += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------

void mish_and_grad(const Mat& x, Mat& value, Mat& grad) {
  // tanh(softplus(x)) = n / (n + 2) with n = e (e + 2), e = exp(x).
  const auto xa = x.array();
  const Arr e = xa.min(20.0).exp();
  const Arr n = e * (e + 2.0);
  const Arr inv = 1.0 / (n + 2.0);
  const Arr th = n * inv;
  value.resize(x.rows(), x.cols());
  grad.resize(x.rows(), x.cols());
  value.array() = xa * th;
  grad.array() = th + 4.0 * xa * e * (e + 1.0) * inv * inv;
}

Mat mish(const Mat& x) {
  const auto xa = x.array();
  const Arr e = xa.min(20.0).exp();
  const Arr n = e * (e + 2.0);
  Mat out(x.rows(), x.cols());
  out.array() = xa * n / (n + 2.0);
  return out;
}

Mat mish_grad(const Mat& x) {
  Mat v, g;
  mish_and_grad(x, v, g);
  return g;
}

}  // namespace tdflow
