#pragma once

#include <map>
#include <random>
#include <string>

#include "itrack/core/types.hpp"

namespace itrack::net {

/// Named parameter tensors with gradient accumulators and optional
/// momentum state. Names are unique; iteration is name-lexicographic,
/// which fixes the gradient reduction order.
class ParamStore {
 public:
  Mat& create(const std::string& name, int rows, int cols,
              std::mt19937_64& rng);
  Mat& create_zero(const std::string& name, int rows, int cols);

  bool has(const std::string& name) const { return values_.count(name) != 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);

  void zero_grads();
  void accumulate_grad(const std::string& name, const Mat& g);

  /// Gradient descent, optionally with heavy-ball momentum.
  void sgd_step(double lr, double momentum_coef = 0.0);

  const std::map<std::string, Mat>& values() const { return values_; }
  void set(const std::string& name, Mat v) { values_[name] = std::move(v); }

  /// Content digest over names and values, for no-mutation assertions.
  uint64_t checksum() const;

 private:
  std::map<std::string, Mat> values_;
  std::map<std::string, Mat> grads_;
  std::map<std::string, Mat> momentum_;
};

}  // namespace itrack::net

namespace itrack::io {

/// Checkpoint directory layout: manifest.txt (name rows cols byte-offset
/// per tensor) plus params.f32, a flat little-endian float32 payload.
/// load(save(x)) == x at float32 precision; save(load(dir)) reproduces
/// the payload bytes exactly.
void save_checkpoint(const net::ParamStore& params, const std::string& dir);
net::ParamStore load_checkpoint(const std::string& dir);

}  // namespace itrack::io
