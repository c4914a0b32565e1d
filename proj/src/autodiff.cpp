#include "child/autodiff.hpp"

#include <cmath>

namespace child::ad {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), recording_, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node node{p.value, Mat(), recording_, {}};
  if (recording_) {
    Parameter* target = &p;
    node.backward = [target](Tape& t, int self) { target->grad += t.grad_of(self); };
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Mat value, std::span<const int> inputs, BackwardFn fn) {
  bool tracked = false;
  if (recording_) {
    for (int id : inputs) tracked = tracked || needs_grad(id);
  }
  nodes_.push_back(Node{std::move(value), Mat(), tracked, tracked ? std::move(fn) : BackwardFn{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Mat value, std::initializer_list<int> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const int>(inputs.begin(), inputs.size()), std::move(fn));
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& scalar) {
  if (scalar.tape() != this) throw std::logic_error("backward: Var belongs to another tape");
  if (scalar.rows() != 1 || scalar.cols() != 1) throw std::logic_error("backward: loss must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(scalar.id()).setConstant(1.0);
  for (int id = scalar.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Mat out = a.value() * b.value();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_ref(ia) += t.grad_of(self);
    if (t.needs_grad(ib)) t.grad_ref(ib) += t.grad_of(self);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_ref(ia) += t.grad_of(self);
    if (t.needs_grad(ib)) t.grad_ref(ib) -= t.grad_of(self);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Mat out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
    if (t.needs_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var add_bias(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw std::invalid_argument("add_bias: bias must be [1, cols]");
  Tape& t = *a.tape();
  int ia = a.id(), ib = bias.id();
  Mat out = a.value().rowwise() + bias.value().row(0);
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_ref(ia) += g;
    if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
  });
}

Var mul_col(const Var& a, const Var& c) {
  if (c.cols() != 1 || c.rows() != a.rows()) throw std::invalid_argument("mul_col: column must be [rows, 1]");
  Tape& t = *a.tape();
  int ia = a.id(), ic = c.id();
  Mat out = a.value().array().colwise() * c.value().col(0).array();
  return t.push(std::move(out), {ia, ic}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_ref(ia).array() += g.array().colwise() * t.value(ic).col(0).array();
    if (t.needs_grad(ic)) t.grad_ref(ic) += g.cwiseProduct(t.value(ia)).rowwise().sum();
  });
}

Var add_col(const Var& a, const Var& c) {
  if (c.cols() != 1 || c.rows() != a.rows()) throw std::invalid_argument("add_col: column must be [rows, 1]");
  Tape& t = *a.tape();
  int ia = a.id(), ic = c.id();
  Mat out = a.value().colwise() + c.value().col(0);
  return t.push(std::move(out), {ia, ic}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_ref(ia) += g;
    if (t.needs_grad(ic)) t.grad_ref(ic) += g.rowwise().sum();
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value() * s, {ia}, [ia, s](Tape& t, int self) { t.grad_ref(ia) += t.grad_of(self) * s; });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array() + s;
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) { t.grad_ref(ia) += t.grad_of(self); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var leaky_relu(const Var& a, double slope) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.push(std::move(out), {ia}, [ia, slope](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.grad_ref(ia) += t.grad_of(self).binaryExpr(x, [slope](double g, double v) { return v > 0.0 ? g : slope * g; });
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array().tanh().matrix();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.grad_ref(ia).array() += t.grad_of(self).array() * (1.0 - y.array().square());
  });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array().exp().matrix();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_of(self).cwiseProduct(t.value(self));
  });
}

Var log(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array().log().matrix();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia).array() += t.grad_of(self).array() / t.value(ia).array();
  });
}

Var square(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array().square().matrix();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia).array() += 2.0 * t.grad_of(self).array() * t.value(ia).array();
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), n > 0 ? 1.0 / n : 0.0);
}

Var row_sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().rowwise().sum();
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia).colwise() += t.grad_of(self).col(0);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().middleCols(start, count);
  return t.push(std::move(out), {ia}, [ia, start, count](Tape& t, int self) {
    t.grad_ref(ia).middleCols(start, count) += t.grad_of(self);
  });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hcat: row count mismatch");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Mat out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) out.middleCols(offsets[k], parts[k].cols()) = parts[k].value();
  auto captured_ids = ids;
  return t.push(std::move(out), std::span<const int>(ids), [captured_ids, offsets](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (std::size_t k = 0; k < captured_ids.size(); ++k) {
      int id = captured_ids[k];
      if (!t.needs_grad(id)) continue;
      t.grad_ref(id) += g.middleCols(offsets[k], t.value(id).cols());
    }
  });
}

Var gather_rows(const Var& a, std::shared_ptr<const std::vector<int>> index) {
  Tape& t = *a.tape();
  int ia = a.id();
  const auto& idx = *index;
  const Mat& src = a.value();
  Mat out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) {
      out.row(static_cast<Eigen::Index>(r)).setZero();
    } else {
      out.row(static_cast<Eigen::Index>(r)) = src.row(idx[r]);
    }
  }
  return t.push(std::move(out), {ia}, [ia, index](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& ga = t.grad_ref(ia);
    const auto& idx = *index;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= 0) ga.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var broadcast_rows(const Var& a, Eigen::Index n) {
  if (a.rows() != 1) throw std::invalid_argument("broadcast_rows: input must have one row");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().replicate(n, 1);
  return t.push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_of(self).colwise().sum();
  });
}

}  // namespace child::ad
