#pragma once

// Hierarchical sequential VAE.
//
//   encoder   h_t^1 = TCN(x_{t-R:t+R}),  h_t^l = MLP_l(h_t^{l-1})
//             q(z_t^l | x) = N(mean_l(h_t^l), diag exp(logvar_l(h_t^l)))
//   decoder   x_hat_t = tanh(MLP(z_t^1))
//   prior     eps_{t,i}^l = r_i^l(z_{t,i}^l; c_t^l),  c_t^l = [z_{t-1..t-tau}^l, z_t^{l+1}]
//
// Each r_i^l is a monotone scalar flow in z_{t,i}^l whose coefficients come
// from a separate conditioning network:
//
//   r(z; c) = e^{s} z + mu + sum_k e^{beta_k} tanh(e^{a_k} z + b_k)
//
// so d r / d z > 0 and the prior density follows from the change of variables.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/autodiff.hpp"
#include "child/nn.hpp"

namespace child {

struct ModelConfig {
  int num_layers = 2;
  /// Top to bottom, as in ProcessSpec.
  std::vector<int> dims_per_layer{1, 4};
  int obs_dim = 4;
  /// Encoder half window; 0 means num_layers.
  int receptive_half_width = 0;
  int lag = 1;
  /// false: every encoder convolution has kernel size 1 (window {x_t}).
  bool use_context = true;
  int encoder_channels = 64;
  /// Extra per-timestep layers after the temporal convolutions.
  int encoder_pointwise_layers = 1;
  /// Hidden widths of the per-timestep maps between encoder layers.
  int encoder_layer_hidden = 64;
  std::vector<int> decoder_hidden{64, 64};
  int prior_hidden = 128;
  int prior_depth = 3;
  int flow_components = 8;
  double slope = 0.2;

  int layer_dim(int l) const { return dims_per_layer.at(static_cast<std::size_t>(num_layers - l)); }
  int half_width() const { return receptive_half_width > 0 ? receptive_half_width : num_layers; }
  int total_latent_dim() const;
  /// Dilations of the kernel-3 convolutions; they sum to half_width().
  std::vector<int> dilations() const;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-feature affine map of observations into roughly [-0.9, 0.9].
struct Normalization {
  RowVec center;
  RowVec scale;

  static Normalization identity(int dim);
  /// center = (max + min) / 2, scale = (max - min) / 1.8 per column.
  static Normalization fit(const Mat& rows);
  Mat apply(const Mat& x) const;
  Mat invert(const Mat& x) const;
};

/// Posterior statistics for one or more sequences; rows are (sequence, t).
/// Vectors are indexed bottom-first: [0] is layer 1.
struct LatentStack {
  int seq_length = 0;
  std::vector<Mat> mean;
  std::vector<Mat> logvar;
  std::vector<Mat> sample;

  int num_layers() const { return static_cast<int>(mean.size()); }
  int num_sequences() const;
};

/// Prior quantities for one layer; rows follow the conditioning rows given.
struct PriorEvaluation {
  Mat noise;         // eps_hat [M, n_l]
  Mat log_jacobian;  // log d eps_hat_i / d z_i  [M, n_l]
  Vec log_density;   // [M]
};

/// Coefficients of one scalar flow at a fixed conditioning value.
struct FlowCoefficients {
  double log_scale = 0.0;
  double shift = 0.0;
  Vec log_weight;  // beta_k
  Vec log_slope;   // a_k
  Vec offset;      // b_k

  double forward(double z) const;
  double derivative(double z) const;
  /// Solves forward(z) = eps by bracketing bisection.
  double inverse(double eps) const;
};

struct PriorDensity {
  /// [rows, L]: log p(z_t^l | history) per timestep and layer.
  Mat per_step;
  double total = 0.0;
};

/// Symbolic graph outputs of the encoder.
struct EncoderVars {
  std::vector<ad::Var> mean;
  std::vector<ad::Var> logvar;
};

struct FlowVars {
  ad::Var noise;         // [M, n_l]
  ad::Var log_jacobian;  // [M, n_l]
};

class ChildModel {
 public:
  ChildModel(const ModelConfig& config, std::uint64_t init_seed);
  ChildModel(const ChildModel&) = delete;
  ChildModel& operator=(const ChildModel&) = delete;
  ChildModel(ChildModel&&) = default;
  ChildModel& operator=(ChildModel&&) = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  Normalization normalization;

  // ---- graph builders (rows are (sequence, t), seq_length T) ----
  EncoderVars encode(ad::Tape& tape, const ad::Var& x_normalized, int seq_length) const;
  ad::Var decode(ad::Tape& tape, const ad::Var& bottom) const;
  /// Flow of layer l on M conditioning rows. delayed[k] holds z_{t-1-k}^l.
  FlowVars flow(ad::Tape& tape, int l, const ad::Var& current, const std::vector<ad::Var>& delayed,
                const ad::Var* parent) const;
  /// log p(z) per row [B*T, 1], summed over layers; samples bottom-first.
  ad::Var prior_log_prob(ad::Tape& tape, const std::vector<ad::Var>& samples, int seq_length) const;

  // ---- value-level API ----
  /// Observations in data units, rows (sequence, t). With rng == nullptr the
  /// sample equals the mean.
  LatentStack encode_context(const Mat& observations, int seq_length, std::mt19937_64* rng = nullptr) const;
  /// Normalized-space reconstruction in (-1, 1).
  Mat decode(const Mat& bottom) const;
  PriorEvaluation prior_noise_and_jacobian(int l, const Mat& current, const std::vector<Mat>& delayed,
                                           const Mat* parent) const;
  PriorDensity prior_log_density(const LatentStack& latents) const;
  FlowCoefficients flow_coefficients(int l, int i, const std::vector<Vec>& delayed, const Vec* parent) const;
  /// E[z_t^l | c_t^l] under the learned prior, by Gauss-Hermite quadrature.
  Vec conditional_mean(int l, const std::vector<Vec>& delayed, const Vec* parent) const;

  /// Ancestral samples from the learned prior, decoded to data units. Rows
  /// (sequence, t); the first `lag` steps draw from the standard-normal prior.
  /// `latents`, when given, receives the sampled latents (logvar left empty).
  Mat generate(int num_sequences, int seq_length, std::mt19937_64& rng, LatentStack* latents = nullptr) const;

  /// Sets every flow to r(z) = z exactly (used by tests and diagnostics).
  void reset_prior_to_identity();

 private:
  struct Conv {
    nn::Linear linear;
    int dilation = 1;
    int kernel = 3;
  };
  struct FlowNet {
    nn::Mlp trunk;
    nn::Linear head;  // [hidden, 2 + 3K]
  };

  int conditioning_dim(int l) const;
  ad::Var flow_conditioning(ad::Tape& tape, int l, const std::vector<ad::Var>& delayed, const ad::Var* parent) const;

  ModelConfig config_;
  nn::ParameterStore store_;
  std::vector<Conv> convs_;
  std::vector<nn::Linear> pointwise_;
  std::vector<nn::Mlp> layer_maps_;  // index l-2 maps h^{l-1} to h^l
  std::vector<nn::Linear> mean_heads_;
  std::vector<nn::Linear> logvar_heads_;
  nn::Mlp decoder_;
  std::vector<std::vector<FlowNet>> flows_;  // [l-1][i]
};

/// Per-node standard-normal log density, rowwise summed: [rows, 1].
ad::Var standard_normal_log_prob(const ad::Var& z);

/// Nodes and weights of probabilists' Gauss-Hermite quadrature (weights sum to 1).
void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace child
