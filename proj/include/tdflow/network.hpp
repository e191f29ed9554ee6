#pragma once

#include "tdflow/autodiff.hpp"

#include <string>
#include <vector>

namespace tdflow {

/// Shape of the residual MLP. Input is [x, s, a, time embedding, policy embedding].
struct Architecture {
  int state_dim = 2;        // dimension of x and of the output
  int cond_state_dim = 2;   // dimension of the conditioning state s
  int action_dim = 2;
  int n_policies = 0;       // 0 disables policy conditioning
  int policy_embed_dim = 8;
  int width = 256;
  int n_hidden = 3;         // input layer plus n_hidden - 1 residual blocks
  int time_embed_dim = 64;  // even

  int input_dim() const;
  void validate() const;
  /// Compact JSON object with one key per field.
  std::string to_json() const;
  static Architecture from_json(const std::string& text);
  bool operator==(const Architecture&) const = default;
};

/// What a model is conditioned on, one row per batch element.
struct Conditioning {
  Mat s;
  Mat a;
  std::vector<int> policy;  // empty when the model is not policy conditioned

  Eigen::Index rows() const { return s.rows(); }
  Conditioning select(const std::vector<Eigen::Index>& rows) const;
  Conditioning repeat_row(Eigen::Index row, Eigen::Index times) const;
};

/// Named parameter tensors in a fixed order.
class ModelParams {
 public:
  void add(std::string name, Mat value);
  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Mat& operator[](std::size_t i) { return tensors_[i]; }
  const Mat& operator[](std::size_t i) const { return tensors_[i]; }
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  Eigen::Index n_scalars() const;
  Vec flatten() const;
  void assign(const Vec& flat);
  ModelParams zeros_like() const;
  void set_zero();
  bool all_finite() const;
  double squared_norm() const;
  bool same_shapes(const ModelParams& other) const;
  bool operator==(const ModelParams& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> tensors_;
};

/// Sinusoidal features [sin(f_k t), cos(f_k t)] with frequencies geometric in [1, 100].
Mat time_embedding(const Vec& t, int dim);

/// Residual MLP mapping (t, x, conditioning) to a vector of dimension state_dim.
/// Hidden layers use He-uniform initialization; the output layer starts at zero.
class VectorFieldNet {
 public:
  VectorFieldNet() = default;
  VectorFieldNet(const Architecture& arch, Rng& rng);
  VectorFieldNet(const Architecture& arch, ModelParams params);

  const Architecture& arch() const { return arch_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  /// Inference forward pass; throws NumericError on non-finite inputs.
  Mat forward(const Vec& t, const Mat& x, const Conditioning& cond) const;
  /// Output together with the exact trace of d output / d x per row.
  Mat forward_with_divergence(const Vec& t, const Mat& x, const Conditioning& cond, Vec& divergence) const;
  /// Records the forward pass on `tape`; parameter gradients accumulate into `grads`.
  Var forward(Tape& tape, const Vec& t, const Mat& x, const Conditioning& cond, ModelParams& grads) const;

 private:
  Mat assemble_input(const Vec& t, const Mat& x, const Conditioning& cond) const;
  void check_inputs(const Vec& t, const Mat& x, const Conditioning& cond) const;

  Architecture arch_;
  ModelParams params_;
};

}  // namespace tdflow
