#pragma once

#include <functional>
#include <vector>

#include "itrack/core/types.hpp"

namespace itrack::net {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Dynamic reverse-mode tape over Eigen matrices. Values are doubles;
/// gradients are accumulated in reverse creation order, which fixes the
/// reduction order and keeps backward passes deterministic.
class Tape {
 public:
  Var constant(Mat value);          // no gradient tracked
  Var leaf(Mat value);              // gradient tracked (parameters)

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);           // elementwise
  Var scale(Var a, double s);
  Var affine(Var a, double k, double c);  // k*a + c elementwise
  Var add_rowvec(Var a, Var row);   // broadcast a 1xC row over all rows
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int start, int count);
  Var row(Var a, int r);
  Var vstack(const std::vector<Var>& rows);
  Var mean_rows(Var a);             // 1xC; zero row when a has no rows
  Var sum(Var a);                   // 1x1
  Var stop_gradient(Var a);

  /// Copy of `base` with the 1xN `patch` written at (row, col..col+N).
  /// Gradients flow to both `base` (outside the block) and `patch`.
  Var replace_block(Var base, Var patch, int r, int col);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. `loss` must
  /// be 1x1. Can be called once per tape.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Var push(Mat value, bool needs_grad, std::function<void()> back = {});
  Mat& grad_ref(Var v) { return nodes_[v.id].grad; }
  bool tracked(Var v) const { return nodes_[v.id].needs_grad; }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace itrack::net
