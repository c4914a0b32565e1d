#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "child/autodiff.hpp"

namespace child::nn {

/// Owns every trainable array of a model, keyed by a stable name.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ad::Parameter& add(const std::string& name, Mat value);
  ad::Parameter& at(const std::string& name);
  const ad::Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  Eigen::Index total_count() const;

  void zero_grad();
  /// Euclidean norm of all gradients concatenated.
  double grad_norm() const;
  void scale_grad(double s);

 private:
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Dense layer y = x W + b with W stored as [in, out].
class Linear {
 public:
  Linear() = default;
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) initialization for W and b.
  Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  /// Zero-initialized weights and bias.
  static Linear zeros(ParameterStore& store, const std::string& name, int in, int out);

  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;

  int in() const { return in_; }
  int out() const { return out_; }
  ad::Parameter& weight() const { return *w_; }
  ad::Parameter& bias() const { return *b_; }

 private:
  ad::Parameter* w_ = nullptr;
  ad::Parameter* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

/// Stack of Linear layers with LeakyReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, double slope,
      std::mt19937_64& rng);

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  /// Applies LeakyReLU after the last layer as well.
  ad::Var hidden(ad::Tape& tape, ad::Var x) const;

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  double slope_ = 0.2;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(ParameterStore& store, AdamOptions options);

  void step(ParameterStore& store, double learning_rate);
  std::int64_t steps() const { return t_; }

  // Moment accessors, used for checkpointing.
  std::map<std::string, Mat>& first_moments() { return m_; }
  std::map<std::string, Mat>& second_moments() { return v_; }
  const std::map<std::string, Mat>& first_moments() const { return m_; }
  const std::map<std::string, Mat>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::map<std::string, Mat> m_;
  std::map<std::string, Mat> v_;
  std::int64_t t_ = 0;
};

}  // namespace child::nn
