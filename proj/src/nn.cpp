#include "child/nn.hpp"

#include <cmath>

namespace child::nn {

ad::Parameter& ParameterStore::add(const std::string& name, Mat value) {
  if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back(std::make_unique<ad::Parameter>(name, std::move(value)));
  return *params_.back();
}

ad::Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

const ad::Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

std::vector<ad::Parameter*> ParameterStore::all() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const ad::Parameter*> ParameterStore::all() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

Eigen::Index ParameterStore::total_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void ParameterStore::scale_grad(double s) {
  for (auto& p : params_) p->grad *= s;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  Mat b(1, out);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
  w_ = &store.add(name + ".weight", std::move(w));
  b_ = &store.add(name + ".bias", std::move(b));
}

Linear Linear::zeros(ParameterStore& store, const std::string& name, int in, int out) {
  Linear l;
  l.in_ = in;
  l.out_ = out;
  l.w_ = &store.add(name + ".weight", Mat::Zero(in, out));
  l.b_ = &store.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, const ad::Var& x) const {
  return ad::add_bias(ad::matmul(x, tape.param(*w_)), tape.param(*b_));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, double slope,
         std::mt19937_64& rng)
    : slope_(slope) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    layers_.emplace_back(store, name + "." + std::to_string(k), widths[k], widths[k + 1], rng);
  }
}

ad::Var Mlp::operator()(ad::Tape& tape, ad::Var x) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    x = layers_[k](tape, x);
    if (k + 1 < layers_.size()) x = ad::leaky_relu(x, slope_);
  }
  return x;
}

ad::Var Mlp::hidden(ad::Tape& tape, ad::Var x) const {
  for (const auto& layer : layers_) x = ad::leaky_relu(layer(tape, x), slope_);
  return x;
}

Adam::Adam(ParameterStore& store, AdamOptions options) : options_(options) {
  for (const ad::Parameter* p : std::as_const(store).all()) {
    m_[p->name] = Mat::Zero(p->value.rows(), p->value.cols());
    v_[p->name] = Mat::Zero(p->value.rows(), p->value.cols());
  }
}

void Adam::step(ParameterStore& store, double learning_rate) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (ad::Parameter* p : store.all()) {
    Mat& m = m_.at(p->name);
    Mat& v = v_.at(p->name);
    m = b1 * m + (1.0 - b1) * p->grad;
    v = b2 * v + (1.0 - b2) * p->grad.cwiseAbs2();
    p->value.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + options_.eps);
  }
}

}  // namespace child::nn
