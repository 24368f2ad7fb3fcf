#include "itrack/net/tape.hpp"

#include <stdexcept>

namespace itrack::net {

Var Tape::push(Mat value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.grad = Mat::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return push(std::move(value), false); }

Var Tape::leaf(Mat value) { return push(std::move(value), true); }

Var Tape::matmul(Var a, Var b) {
  Mat v = value(a) * value(b);
  const bool ng = tracked(a) || tracked(b);
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, b, out] {
      const Mat& g = grad(out);
      if (tracked(a)) grad_ref(a) += g * value(b).transpose();
      if (tracked(b)) grad_ref(b) += value(a).transpose() * g;
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const bool ng = tracked(a) || tracked(b);
  Var out = push(value(a) + value(b), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, b, out] {
      if (tracked(a)) grad_ref(a) += grad(out);
      if (tracked(b)) grad_ref(b) += grad(out);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  const bool ng = tracked(a) || tracked(b);
  Var out = push(value(a) - value(b), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, b, out] {
      if (tracked(a)) grad_ref(a) += grad(out);
      if (tracked(b)) grad_ref(b) -= grad(out);
    };
  }
  return out;
}

Var Tape::cmul(Var a, Var b) {
  const bool ng = tracked(a) || tracked(b);
  Var out = push(value(a).cwiseProduct(value(b)), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, b, out] {
      if (tracked(a)) grad_ref(a) += grad(out).cwiseProduct(value(b));
      if (tracked(b)) grad_ref(b) += grad(out).cwiseProduct(value(a));
    };
  }
  return out;
}

Var Tape::scale(Var a, double s) { return affine(a, s, 0.0); }

Var Tape::affine(Var a, double k, double c) {
  const bool ng = tracked(a);
  Var out = push((k * value(a)).array() + c, ng);
  if (ng) {
    nodes_[out.id].back = [this, a, k, out] { grad_ref(a) += k * grad(out); };
  }
  return out;
}

Var Tape::add_rowvec(Var a, Var row) {
  if (value(row).rows() != 1) throw std::invalid_argument("row must be 1xC");
  Mat v = value(a);
  v.rowwise() += value(row).row(0);
  const bool ng = tracked(a) || tracked(row);
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, row, out] {
      if (tracked(a)) grad_ref(a) += grad(out);
      if (tracked(row)) grad_ref(row) += grad(out).colwise().sum();
    };
  }
  return out;
}

Var Tape::tanh(Var a) {
  const bool ng = tracked(a);
  Var out = push(value(a).array().tanh(), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, out] {
      grad_ref(a).array() +=
          grad(out).array() * (1.0 - value(out).array().square());
    };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  const bool ng = tracked(a);
  Var out = push(((-value(a).array()).exp() + 1.0).inverse(), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, out] {
      grad_ref(a).array() +=
          grad(out).array() * value(out).array() * (1.0 - value(out).array());
    };
  }
  return out;
}

Var Tape::relu(Var a) {
  const bool ng = tracked(a);
  Var out = push(value(a).cwiseMax(0.0), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, out] {
      grad_ref(a).array() +=
          grad(out).array() * (value(a).array() > 0.0).cast<double>();
    };
  }
  return out;
}

Var Tape::concat_cols(Var a, Var b) {
  if (value(a).rows() != value(b).rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  Mat v(value(a).rows(), value(a).cols() + value(b).cols());
  v << value(a), value(b);
  const bool ng = tracked(a) || tracked(b);
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, b, out] {
      const int ca = static_cast<int>(value(a).cols());
      const int cb = static_cast<int>(value(b).cols());
      if (tracked(a)) grad_ref(a) += grad(out).leftCols(ca);
      if (tracked(b)) grad_ref(b) += grad(out).rightCols(cb);
    };
  }
  return out;
}

Var Tape::slice_cols(Var a, int start, int count) {
  const bool ng = tracked(a);
  Var out = push(value(a).middleCols(start, count), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, start, count, out] {
      grad_ref(a).middleCols(start, count) += grad(out);
    };
  }
  return out;
}

Var Tape::row(Var a, int r) {
  const bool ng = tracked(a);
  Var out = push(value(a).row(r), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, r, out] {
      grad_ref(a).row(r) += grad(out).row(0);
    };
  }
  return out;
}

Var Tape::vstack(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("vstack of nothing");
  int total = 0;
  bool ng = false;
  for (Var r : rows) {
    total += static_cast<int>(value(r).rows());
    ng = ng || tracked(r);
  }
  Mat v(total, value(rows[0]).cols());
  int at = 0;
  for (Var r : rows) {
    v.middleRows(at, value(r).rows()) = value(r);
    at += static_cast<int>(value(r).rows());
  }
  Var out = push(std::move(v), ng);
  if (ng) {
    auto rows_copy = rows;
    nodes_[out.id].back = [this, rows_copy, out] {
      int at2 = 0;
      for (Var r : rows_copy) {
        const int n = static_cast<int>(value(r).rows());
        if (tracked(r)) grad_ref(r) += grad(out).middleRows(at2, n);
        at2 += n;
      }
    };
  }
  return out;
}

Var Tape::mean_rows(Var a) {
  const int n = static_cast<int>(value(a).rows());
  Mat v = n == 0 ? Mat::Zero(1, value(a).cols())
                 : Mat(value(a).colwise().mean());
  const bool ng = tracked(a) && n > 0;
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, n, out] {
      grad_ref(a).rowwise() += grad(out).row(0) / static_cast<double>(n);
    };
  }
  return out;
}

Var Tape::sum(Var a) {
  Mat v(1, 1);
  v(0, 0) = value(a).sum();
  const bool ng = tracked(a);
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, a, out] {
      grad_ref(a).array() += grad(out)(0, 0);
    };
  }
  return out;
}

Var Tape::stop_gradient(Var a) { return push(value(a), false); }

Var Tape::replace_block(Var base, Var patch, int r, int col) {
  if (value(patch).rows() != 1)
    throw std::invalid_argument("replace_block patch must be 1xN");
  const int n = static_cast<int>(value(patch).cols());
  if (col + n > value(base).cols() || r >= value(base).rows())
    throw std::invalid_argument("replace_block out of bounds");
  Mat v = value(base);
  v.block(r, col, 1, n) = value(patch);
  const bool ng = tracked(base) || tracked(patch);
  Var out = push(std::move(v), ng);
  if (ng) {
    nodes_[out.id].back = [this, base, patch, r, col, n, out] {
      if (tracked(base)) {
        Mat g = grad(out);
        g.block(r, col, 1, n).setZero();
        grad_ref(base) += g;
      }
      if (tracked(patch)) grad_ref(patch) += grad(out).block(r, col, 1, n);
    };
  }
  return out;
}

void Tape::backward(Var loss) {
  if (ran_backward_) throw std::logic_error("backward already ran on this tape");
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw std::invalid_argument("backward expects a 1x1 loss");
  ran_backward_ = true;
  grad_ref(loss)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back();
  }
}

}  // namespace itrack::net
