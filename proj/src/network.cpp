#include "tdflow/network.hpp"

#include <json.hpp>

#include <cmath>

namespace tdflow {

int Architecture::input_dim() const {
  return state_dim + cond_state_dim + action_dim + time_embed_dim + (n_policies > 0 ? policy_embed_dim : 0);
}

void Architecture::validate() const {
  require(state_dim >= 1, "architecture: state_dim must be >= 1");
  require(cond_state_dim >= 0 && action_dim >= 0, "architecture: conditioning dims must be >= 0");
  require(n_policies >= 0, "architecture: n_policies must be >= 0");
  require(n_policies == 0 || policy_embed_dim >= 1, "architecture: policy_embed_dim must be >= 1");
  require(width >= 1, "architecture: width must be >= 1");
  require(n_hidden >= 1, "architecture: n_hidden must be >= 1");
  require(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "architecture: time_embed_dim must be even and >= 2");
}

std::string Architecture::to_json() const {
  const nlohmann::json j = {{"state_dim", state_dim},
                            {"cond_state_dim", cond_state_dim},
                            {"action_dim", action_dim},
                            {"n_policies", n_policies},
                            {"policy_embed_dim", policy_embed_dim},
                            {"width", width},
                            {"n_hidden", n_hidden},
                            {"time_embed_dim", time_embed_dim},
                            {"activation", "mish"}};
  return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture: invalid JSON: ") + e.what());
  }
  Architecture a;
  try {
    a.state_dim = j.at("state_dim").get<int>();
    a.cond_state_dim = j.at("cond_state_dim").get<int>();
    a.action_dim = j.at("action_dim").get<int>();
    a.n_policies = j.at("n_policies").get<int>();
    a.policy_embed_dim = j.at("policy_embed_dim").get<int>();
    a.width = j.at("width").get<int>();
    a.n_hidden = j.at("n_hidden").get<int>();
    a.time_embed_dim = j.at("time_embed_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  require(j.value("activation", "mish") == "mish", "architecture: only mish activation is supported");
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------

Conditioning Conditioning::select(const std::vector<Eigen::Index>& rows) const {
  Conditioning out;
  out.s.resize(static_cast<Eigen::Index>(rows.size()), s.cols());
  out.a.resize(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.s.row(static_cast<Eigen::Index>(i)) = s.row(rows[i]);
    out.a.row(static_cast<Eigen::Index>(i)) = a.row(rows[i]);
    if (!policy.empty()) {
      out.policy.push_back(policy[static_cast<std::size_t>(rows[i])]);
    }
  }
  return out;
}

Conditioning Conditioning::repeat_row(Eigen::Index row, Eigen::Index times) const {
  Conditioning out;
  out.s = s.row(row).replicate(times, 1);
  out.a = a.row(row).replicate(times, 1);
  if (!policy.empty()) {
    out.policy.assign(static_cast<std::size_t>(times), policy[static_cast<std::size_t>(row)]);
  }
  return out;
}

// ---------------------------------------------------------------------------

void ModelParams::add(std::string name, Mat value) {
  require(!contains(name), "ModelParams: duplicate tensor " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool ModelParams::contains(const std::string& name) const {
  for (const auto& n : names_) {
    if (n == name) {
      return true;
    }
  }
  return false;
}

Mat& ModelParams::at(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      return tensors_[i];
    }
  }
  throw ConfigError("ModelParams: no tensor named " + name);
}

const Mat& ModelParams::at(const std::string& name) const { return const_cast<ModelParams*>(this)->at(name); }

Eigen::Index ModelParams::n_scalars() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors_) {
    n += t.size();
  }
  return n;
}

Vec ModelParams::flatten() const {
  Vec out(n_scalars());
  Eigen::Index off = 0;
  for (const auto& t : tensors_) {
    out.segment(off, t.size()) = Eigen::Map<const Vec>(t.data(), t.size());
    off += t.size();
  }
  return out;
}

void ModelParams::assign(const Vec& flat) {
  require(flat.size() == n_scalars(), "ModelParams::assign: size mismatch");
  Eigen::Index off = 0;
  for (auto& t : tensors_) {
    Eigen::Map<Vec>(t.data(), t.size()) = flat.segment(off, t.size());
    off += t.size();
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    out.add(names_[i], Mat::Zero(tensors_[i].rows(), tensors_[i].cols()));
  }
  return out;
}

void ModelParams::set_zero() {
  for (auto& t : tensors_) {
    t.setZero();
  }
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.allFinite()) {
      return false;
    }
  }
  return true;
}

double ModelParams::squared_norm() const {
  double acc = 0.0;
  for (const auto& t : tensors_) {
    acc += t.squaredNorm();
  }
  return acc;
}

bool ModelParams::same_shapes(const ModelParams& other) const {
  if (names_ != other.names_) {
    return false;
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].rows() != other.tensors_[i].rows() || tensors_[i].cols() != other.tensors_[i].cols()) {
      return false;
    }
  }
  return true;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!same_shapes(other)) {
    return false;
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i] != other.tensors_[i]) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

Mat time_embedding(const Vec& t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "time_embedding: dim must be even and >= 2");
  const int half = dim / 2;
  Mat out(t.size(), dim);
  for (int k = 0; k < half; ++k) {
    const double freq = half == 1 ? 1.0 : std::exp(std::log(100.0) * k / (half - 1));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      out(i, k) = std::sin(freq * t[i]);
      out(i, half + k) = std::cos(freq * t[i]);
    }
  }
  return out;
}

namespace {

Mat he_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
  }
  return w;
}

Mat one_hot(const std::vector<int>& ids, int n) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(ids.size()), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < n, "policy id out of range");
    out(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  }
  return out;
}

// Fixed tensor order: [policy_embed.w], in.w, in.b, res1.w, res1.b, ..., out.w, out.b.
struct Layout {
  std::size_t policy = 0;
  std::size_t in = 0;
  std::size_t res = 0;
  std::size_t out = 0;
  explicit Layout(const Architecture& a) {
    const std::size_t base = a.n_policies > 0 ? 1 : 0;
    policy = 0;
    in = base;
    res = base + 2;
    out = res + 2 * static_cast<std::size_t>(a.n_hidden - 1);
  }
};

}  // namespace

VectorFieldNet::VectorFieldNet(const Architecture& arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  if (arch_.n_policies > 0) {
    params_.add("policy_embed.w", he_uniform(arch_.n_policies, arch_.policy_embed_dim, rng));
  }
  params_.add("in.w", he_uniform(arch_.input_dim(), arch_.width, rng));
  params_.add("in.b", Mat::Zero(1, arch_.width));
  for (int k = 1; k < arch_.n_hidden; ++k) {
    params_.add("res" + std::to_string(k) + ".w", he_uniform(arch_.width, arch_.width, rng));
    params_.add("res" + std::to_string(k) + ".b", Mat::Zero(1, arch_.width));
  }
  params_.add("out.w", Mat::Zero(arch_.width, arch_.state_dim));
  params_.add("out.b", Mat::Zero(1, arch_.state_dim));
}

VectorFieldNet::VectorFieldNet(const Architecture& arch, ModelParams params) : arch_(arch), params_(std::move(params)) {
  arch_.validate();
  Rng dummy = make_rng(0);
  const VectorFieldNet reference(arch_, dummy);
  require(params_.same_shapes(reference.params_), "VectorFieldNet: parameters do not match the architecture");
}

void VectorFieldNet::check_inputs(const Vec& t, const Mat& x, const Conditioning& cond) const {
  require(x.cols() == arch_.state_dim, "forward: x has the wrong dimension");
  require(cond.s.cols() == arch_.cond_state_dim && cond.a.cols() == arch_.action_dim,
          "forward: conditioning has the wrong dimension");
  require(t.size() == x.rows() && cond.s.rows() == x.rows() && cond.a.rows() == x.rows(),
          "forward: batch sizes differ");
  require(arch_.n_policies == 0 || static_cast<Eigen::Index>(cond.policy.size()) == x.rows(),
          "forward: policy ids required for a policy-conditioned model");
  if (!t.allFinite() || !x.allFinite() || !cond.s.allFinite() || !cond.a.allFinite()) {
    throw NumericError("forward: non-finite input");
  }
}

Mat VectorFieldNet::assemble_input(const Vec& t, const Mat& x, const Conditioning& cond) const {
  Mat in(x.rows(), arch_.input_dim());
  Eigen::Index off = 0;
  in.middleCols(off, x.cols()) = x;
  off += x.cols();
  in.middleCols(off, cond.s.cols()) = cond.s;
  off += cond.s.cols();
  in.middleCols(off, cond.a.cols()) = cond.a;
  off += cond.a.cols();
  in.middleCols(off, arch_.time_embed_dim) = time_embedding(t, arch_.time_embed_dim);
  off += arch_.time_embed_dim;
  if (arch_.n_policies > 0) {
    in.middleCols(off, arch_.policy_embed_dim) = one_hot(cond.policy, arch_.n_policies) * params_[0];
  }
  return in;
}

Mat VectorFieldNet::forward(const Vec& t, const Mat& x, const Conditioning& cond) const {
  check_inputs(t, x, cond);
  const Layout L(arch_);
  Mat z = assemble_input(t, x, cond) * params_[L.in];
  z.rowwise() += params_[L.in + 1].row(0);
  Mat h = mish(z);
  for (int k = 0; k < arch_.n_hidden - 1; ++k) {
    z.noalias() = h * params_[L.res + 2 * k];
    z.rowwise() += params_[L.res + 2 * k + 1].row(0);
    h += mish(z);
  }
  Mat out = h * params_[L.out];
  out.rowwise() += params_[L.out + 1].row(0);
  return out;
}

Mat VectorFieldNet::forward_with_divergence(const Vec& t, const Mat& x, const Conditioning& cond,
                                            Vec& divergence) const {
  check_inputs(t, x, cond);
  const Layout L(arch_);
  const int d = arch_.state_dim;
  Mat z = assemble_input(t, x, cond) * params_[L.in];
  z.rowwise() += params_[L.in + 1].row(0);
  Mat h, slope;
  mish_and_grad(z, h, slope);
  // One tangent per input coordinate of x; the input tangent for coordinate j is row j of in.w.
  std::vector<Mat> tangents(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    tangents[static_cast<std::size_t>(j)] = slope.array().rowwise() * params_[L.in].row(j).array();
  }
  Mat act;
  for (int k = 0; k < arch_.n_hidden - 1; ++k) {
    const Mat& w = params_[L.res + 2 * k];
    z.noalias() = h * w;
    z.rowwise() += params_[L.res + 2 * k + 1].row(0);
    mish_and_grad(z, act, slope);
    h += act;
    for (auto& tan : tangents) {
      tan.array() += slope.array() * (tan * w).array();
    }
  }
  Mat out = h * params_[L.out];
  out.rowwise() += params_[L.out + 1].row(0);
  divergence = Vec::Zero(x.rows());
  for (int j = 0; j < d; ++j) {
    divergence += tangents[static_cast<std::size_t>(j)] * params_[L.out].col(j);
  }
  return out;
}

Var VectorFieldNet::forward(Tape& tape, const Vec& t, const Mat& x, const Conditioning& cond,
                            ModelParams& grads) const {
  check_inputs(t, x, cond);
  require(grads.same_shapes(params_), "forward: gradient buffer does not match parameters");
  const Layout L(arch_);
  std::vector<Var> parts = {tape.constant(x), tape.constant(cond.s), tape.constant(cond.a),
                            tape.constant(time_embedding(t, arch_.time_embed_dim))};
  if (arch_.n_policies > 0) {
    const Var emb = tape.param(params_[L.policy], &grads[L.policy]);
    parts.push_back(tape.matmul(tape.constant(one_hot(cond.policy, arch_.n_policies)), emb));
  }
  const Var input = tape.concat_cols(parts);
  auto p = [&](std::size_t i) { return tape.param(params_[i], &grads[i]); };
  Var h = tape.mish(tape.add_bias(tape.matmul(input, p(L.in)), p(L.in + 1)));
  for (int k = 0; k < arch_.n_hidden - 1; ++k) {
    const std::size_t i = L.res + 2 * static_cast<std::size_t>(k);
    h = tape.add(h, tape.mish(tape.add_bias(tape.matmul(h, p(i)), p(i + 1))));
  }
  return tape.add_bias(tape.matmul(h, p(L.out)), p(L.out + 1));
}

}  // namespace tdflow
