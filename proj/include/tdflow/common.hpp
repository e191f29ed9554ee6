#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdflow {

// Batches are stored one sample per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Arr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Invalid user input: malformed config, bad shapes, out-of-range arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence detected during a numerical routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File or stream failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer applied to (seed, stream); gives decorrelated sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
Mat standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Throws ConfigError with `what` when `cond` is false.
inline void require(bool cond, const std::string& what) {
  if (!cond) {
    throw ConfigError(what);
  }
}

}  // namespace tdflow
