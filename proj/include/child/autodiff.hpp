#pragma once

// Minimal reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every operation applied to Vars. Values are immutable once
// recorded; calling backward() on a 1x1 Var walks the tape in reverse and
// accumulates gradients into every node that depends on a tracked leaf
// (an input() or a param()). Parameter gradients land in Parameter::grad.

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "child/common.hpp"

namespace child::ad {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  /// With record == false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : recording_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var input(Mat value);
  Var param(Parameter& p);

  void backward(const Var& scalar);

  /// Gradient of the last backward() w.r.t. v; zeros if v was not reached.
  Mat grad(const Var& v) const;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by the op implementations.
  Var push(Mat value, std::initializer_list<int> inputs, BackwardFn fn);
  Var push(Mat value, std::span<const int> inputs, BackwardFn fn);
  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  const Mat& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  /// Gradient accumulator of node id, zero-initialized on first use.
  Mat& grad_ref(int id);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool recording_;
};

// ---- operations ------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a[n,k] + bias[1,k] broadcast over rows.
Var add_bias(const Var& a, const Var& bias);
/// a[n,k] * c[n,1] broadcast over columns.
Var mul_col(const Var& a, const Var& c);
/// a[n,k] + c[n,1] broadcast over columns.
Var add_col(const Var& a, const Var& c);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of each row, shape [n,1].
Var row_sum(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var hcat(std::span<const Var> parts);
/// out.row(r) = a.row(index[r]); index -1 yields a zero row.
Var gather_rows(const Var& a, std::shared_ptr<const std::vector<int>> index);
/// a[1,k] repeated n times.
Var broadcast_rows(const Var& a, Eigen::Index n);

}  // namespace child::ad
