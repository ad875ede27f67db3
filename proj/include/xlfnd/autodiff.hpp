#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Tape records every operation of one forward pass. Nodes hold a value and
// (lazily) a gradient of the same shape; backward() runs the recorded
// adjoints in reverse creation order. Only nodes that depend on a trainable
// leaf carry adjoints.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xlfnd/common.hpp"

namespace xlfnd::autodiff {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value) { return push(std::move(value), false, {}); }

  // Leaf referring to external storage; `value` must outlive the tape.
  Var param(const Mat& value, bool trainable = true) {
    Node n;
    n.ref = &value;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  const Mat& value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.ref ? *n.ref : n.value;
  }

  bool needs_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs_grad; }

  // Gradient of the last backward() root; zeros if the node was not reached.
  Mat grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  void backward(Var root) {
    const Mat& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) {
      throw ContractError("gradients: loss must be a 1x1 scalar, got " + std::to_string(r.rows()) +
                          "x" + std::to_string(r.cols()));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[static_cast<std::size_t>(root.id)].needs_grad) return;
    nodes_[static_cast<std::size_t>(root.id)].grad = Mat::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.grad.size() != 0 && n.backward) n.backward();
    }
  }

  // ---- arithmetic --------------------------------------------------------

  Var matmul(Var a, Var b) {
    check(value(a).cols() == value(b).rows(), "matmul", a, b);
    Mat out = value(a) * value(b);
    return push(std::move(out), any(a, b), [this, a, b, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, g * value(b).transpose());
      if (needs_grad(b)) accumulate(b, value(a).transpose() * g);
    });
  }

  // a (n x m) + row vector b (1 x m) broadcast over rows.
  Var add_bias(Var a, Var b) {
    check(value(b).rows() == 1 && value(b).cols() == value(a).cols(), "add_bias", a, b);
    Mat out = value(a).rowwise() + value(b).row(0);
    return push(std::move(out), any(a, b), [this, a, b, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(b)) accumulate(b, g.colwise().sum());
    });
  }

  Var add(Var a, Var b) {
    check(same_shape(a, b), "add", a, b);
    Mat out = value(a) + value(b);
    return push(std::move(out), any(a, b), [this, a, b, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(b)) accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check(same_shape(a, b), "sub", a, b);
    Mat out = value(a) - value(b);
    return push(std::move(out), any(a, b), [this, a, b, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(b)) accumulate(b, -g);
    });
  }

  Var scale(Var a, T c) {
    Mat out = value(a) * c;
    return push(std::move(out), needs_grad(a), [this, a, c, self = next_id()] {
      accumulate(a, grad_ref(self) * c);
    });
  }

  Var cmul(Var a, Var b) {
    check(same_shape(a, b), "cmul", a, b);
    Mat out = value(a).cwiseProduct(value(b));
    return push(std::move(out), any(a, b), [this, a, b, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, g.cwiseProduct(value(b)));
      if (needs_grad(b)) accumulate(b, g.cwiseProduct(value(a)));
    });
  }

  // out.row(i) = w(i) * a.row(i); w is n x 1.
  Var row_scale(Var a, Var w) {
    check(value(w).cols() == 1 && value(w).rows() == value(a).rows(), "row_scale", a, w);
    Mat out = value(a).array().colwise() * value(w).col(0).array();
    return push(std::move(out), any(a, w), [this, a, w, self = next_id()] {
      const Mat& g = grad_ref(self);
      if (needs_grad(a)) accumulate(a, Mat(g.array().colwise() * value(w).col(0).array()));
      if (needs_grad(w)) accumulate(w, Mat(g.cwiseProduct(value(a)).rowwise().sum()));
    });
  }

  // Identity forward; multiplies the incoming gradient by `factor`.
  Var grad_scale(Var a, T factor) {
    Mat out = value(a);
    return push(std::move(out), needs_grad(a), [this, a, factor, self = next_id()] {
      accumulate(a, grad_ref(self) * factor);
    });
  }

  // ---- nonlinearities ----------------------------------------------------

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(T(0));
    return push(std::move(out), needs_grad(a), [this, a, self = next_id()] {
      const Mat& g = grad_ref(self);
      accumulate(a, Mat((value(a).array() > T(0)).select(g.array(), T(0))));
    });
  }

  Var sigmoid(Var a) {
    Mat out = (T(1) + (-value(a).array()).exp()).inverse().matrix();
    return push(std::move(out), needs_grad(a), [this, a, self = next_id()] {
      const Mat& y = value(Var{self});
      accumulate(a, Mat(grad_ref(self).array() * y.array() * (T(1) - y.array())));
    });
  }

  Var tanh(Var a) {
    Mat out = value(a).array().tanh().matrix();
    return push(std::move(out), needs_grad(a), [this, a, self = next_id()] {
      const Mat& y = value(Var{self});
      accumulate(a, Mat(grad_ref(self).array() * (T(1) - y.array().square())));
    });
  }

  // Row-wise softmax restricted to entries with mask = 1; rows without any
  // active entry produce zeros.
  Var masked_softmax_rows(Var a, const Mat& mask) {
    const Mat& x = value(a);
    check(mask.rows() == x.rows() && mask.cols() == x.cols(), "masked_softmax_rows", a, a);
    Mat out = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      T mx = -std::numeric_limits<T>::infinity();
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (mask(r, c) != T(0)) mx = std::max(mx, x(r, c));
      }
      if (mx == -std::numeric_limits<T>::infinity()) continue;
      T z = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (mask(r, c) != T(0)) z += (out(r, c) = std::exp(x(r, c) - mx));
      }
      out.row(r) /= z;
    }
    return push(std::move(out), needs_grad(a), [this, a, self = next_id()] {
      const Mat& y = value(Var{self});
      const Mat& g = grad_ref(self);
      Mat inner = g.cwiseProduct(y).rowwise().sum();
      accumulate(a, Mat(y.array() * (g.array().colwise() - inner.col(0).array())));
    });
  }

  // ---- structure ---------------------------------------------------------

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    Eigen::Index rows = value(parts[0]).rows(), cols = 0;
    bool ng = false;
    for (auto p : parts) {
      check(value(p).rows() == rows, "concat_cols", parts[0], p);
      cols += value(p).cols();
      ng = ng || needs_grad(p);
    }
    Mat out(rows, cols);
    Eigen::Index off = 0;
    for (auto p : parts) {
      out.middleCols(off, value(p).cols()) = value(p);
      off += value(p).cols();
    }
    return push(std::move(out), ng, [this, parts, self = next_id()] {
      const Mat& g = grad_ref(self);
      Eigen::Index off = 0;
      for (auto p : parts) {
        const auto w = value(p).cols();
        if (needs_grad(p)) accumulate(p, Mat(g.middleCols(off, w)));
        off += w;
      }
    });
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > value(a).cols()) {
      throw ContractError("slice_cols: range out of bounds");
    }
    Mat out = value(a).middleCols(start, count);
    return push(std::move(out), needs_grad(a), [this, a, start, count, self = next_id()] {
      Mat full = Mat::Zero(value(a).rows(), value(a).cols());
      full.middleCols(start, count) = grad_ref(self);
      accumulate(a, full);
    });
  }

  // Sliding windows of width k over stacked sequences. `x` stacks the rows of
  // every sequence (lengths in `lens`); sequences shorter than k are
  // zero-padded to k. Output row = concatenation of k consecutive input rows.
  Var im2col(Var x, const std::vector<int>& lens, int k) {
    const Mat& in = value(x);
    const Eigen::Index d = in.cols();
    Eigen::Index total = 0;
    for (int len : lens) total += std::max(len, k) - k + 1;
    Mat out = Mat::Zero(total, k * d);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> src;  // (out row block, in row) pairs
    Eigen::Index in_off = 0, row = 0;
    for (int len : lens) {
      const int windows = std::max(len, k) - k + 1;
      for (int w = 0; w < windows; ++w, ++row) {
        for (int j = 0; j < k; ++j) {
          if (w + j < len) out.block(row, j * d, 1, d) = in.row(in_off + w + j);
        }
      }
      in_off += len;
    }
    if (in_off != in.rows()) throw ContractError("im2col: lengths do not sum to input rows");
    return push(std::move(out), needs_grad(x), [this, x, lens, k, self = next_id()] {
      const Mat& g = grad_ref(self);
      const Eigen::Index d = value(x).cols();
      Mat gin = Mat::Zero(value(x).rows(), d);
      Eigen::Index in_off = 0, row = 0;
      for (int len : lens) {
        const int windows = std::max(len, k) - k + 1;
        for (int w = 0; w < windows; ++w, ++row) {
          for (int j = 0; j < k; ++j) {
            if (w + j < len) gin.row(in_off + w + j) += g.block(row, j * d, 1, d);
          }
        }
        in_off += len;
      }
      accumulate(x, gin);
    });
  }

  // Column-wise max over each consecutive block of rows (block sizes in
  // `counts`), producing one row per block. Ties route to the first maximum.
  Var segment_max(Var a, const std::vector<int>& counts) {
    const Mat& in = value(a);
    Mat out(static_cast<Eigen::Index>(counts.size()), in.cols());
    std::vector<Eigen::Index> arg(counts.size() * static_cast<std::size_t>(in.cols()));
    Eigen::Index off = 0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (counts[s] <= 0) throw ContractError("segment_max: empty segment");
      for (Eigen::Index c = 0; c < in.cols(); ++c) {
        Eigen::Index best = off;
        for (Eigen::Index r = off + 1; r < off + counts[s]; ++r) {
          if (in(r, c) > in(best, c)) best = r;
        }
        out(static_cast<Eigen::Index>(s), c) = in(best, c);
        arg[s * static_cast<std::size_t>(in.cols()) + static_cast<std::size_t>(c)] = best;
      }
      off += counts[s];
    }
    if (off != in.rows()) throw ContractError("segment_max: counts do not sum to input rows");
    return push(std::move(out), needs_grad(a), [this, a, arg = std::move(arg), self = next_id()] {
      const Mat& g = grad_ref(self);
      Mat gin = Mat::Zero(value(a).rows(), value(a).cols());
      const auto cols = static_cast<std::size_t>(g.cols());
      for (Eigen::Index s = 0; s < g.rows(); ++s) {
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
          gin(arg[static_cast<std::size_t>(s) * cols + static_cast<std::size_t>(c)], c) += g(s, c);
        }
      }
      accumulate(a, gin);
    });
  }

  // ---- reductions and losses ---------------------------------------------

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), needs_grad(a), [this, a, self = next_id()] {
      accumulate(a, Mat::Constant(value(a).rows(), value(a).cols(), grad_ref(self)(0, 0)));
    });
  }

  Var mean(Var a) {
    const auto n = static_cast<T>(value(a).size());
    if (n == T(0)) throw ContractError("mean: empty input");
    return scale(sum(a), T(1) / n);
  }

  // Mean cross-entropy of row-wise softmax(logits) against class indices.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    const Mat& z = value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != z.rows() || z.rows() == 0) {
      throw ContractError("softmax_cross_entropy: label count does not match logits");
    }
    Mat p = softmax_rows(z);
    T loss = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      if (y < 0 || y >= z.cols()) throw ContractError("softmax_cross_entropy: label out of range");
      T mx = z.row(r).maxCoeff();
      T lse = mx + std::log((z.row(r).array() - mx).exp().sum());
      loss += lse - z(r, y);
    }
    Mat out(1, 1);
    out(0, 0) = loss / static_cast<T>(z.rows());
    return push(std::move(out), needs_grad(logits),
                [this, logits, labels, p = std::move(p), self = next_id()] {
                  Mat g = p;
                  for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, labels[static_cast<std::size_t>(r)]) -= T(1);
                  accumulate(logits, Mat(g * (grad_ref(self)(0, 0) / static_cast<T>(g.rows()))));
                });
  }

  static Mat softmax_rows(const Mat& z) {
    Mat p(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      T mx = z.row(r).maxCoeff();
      p.row(r) = (z.row(r).array() - mx).exp().matrix();
      p.row(r) /= p.row(r).sum();
    }
    return p;
  }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  bool any(Var a, Var b) const { return needs_grad(a) || needs_grad(b); }

  bool same_shape(Var a, Var b) const {
    return value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols();
  }

  void check(bool ok, const char* op, Var a, Var b) const {
    if (ok) return;
    throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(value(a).rows()) + "x" +
                        std::to_string(value(a).cols()) + " vs " + std::to_string(value(b).rows()) +
                        "x" + std::to_string(value(b).cols()) + ")");
  }

  Var push(Mat value, bool needs_grad, std::function<void()> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  const Mat& grad_ref(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace xlfnd::autodiff
