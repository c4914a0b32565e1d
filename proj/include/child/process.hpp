#pragma once

// Ground-truth hierarchical latent processes.
//
// Layer l (1 = bottom, L = top) evolves from its own delayed values and, for
// l < L, from the current value of layer l + 1:
//
//   z_t^l = LeakyReLU(sum_k W_k^l z_{t-k}^l) + V^l z_t^{l+1} + eps_t^l
//   z_t^L = LeakyReLU(sum_k W_k^L z_{t-k}^L) + eps_t^L
//   x_t   = LeakyReLU(M LeakyReLU(z_t^1) + B eps_t^0)
//
// V^l is strictly lower triangular: component i of layer l only hears
// components j < i of layer l + 1. The deep variant replaces each map with a
// two-layer LeakyReLU network.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/common.hpp"

namespace child {

enum class ProcessVariant { LeakyLinear, DeepNonlinear };

std::string to_string(ProcessVariant v);
ProcessVariant process_variant_from_string(const std::string& s);

/// Distribution of the unit-variance latent transition noise.
enum class NoiseFamily { Gaussian, Laplace };

std::string to_string(NoiseFamily f);
NoiseFamily noise_family_from_string(const std::string& s);

struct ProcessSpec {
  int num_layers = 2;
  /// Top to bottom: [n_L, ..., n_1].
  std::vector<int> dims_per_layer{1, 4};
  int lag_order = 1;
  ProcessVariant variant = ProcessVariant::LeakyLinear;
  /// Top to bottom, one scale per layer.
  std::vector<double> noise_scale{0.1, 0.1};
  NoiseFamily noise_family = NoiseFamily::Gaussian;
  double obs_noise_scale = 0.1;
  /// Dimension of the observation noise eps_t^0.
  int mixing_noise_dim = 1;
  /// 0 means "same as the bottom layer".
  int obs_dim = 0;
  /// Scale of the standard-normal draws for the first lag_order steps.
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  /// l in [1, num_layers], 1 = bottom.
  int layer_dim(int l) const;
  double layer_noise(int l) const;
  int observation_dim() const { return obs_dim > 0 ? obs_dim : layer_dim(1); }
  int max_layer_dim() const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static ProcessSpec from_json(const nlohmann::json& j);
};

/// Named dataset recipes A-G. Throws ConfigError listing the valid names.
ProcessSpec preset_spec(const std::string& name);
std::vector<std::string> preset_names();
/// Default sequence length 2 (2L + 1).
int default_seq_length(const ProcessSpec& spec);

struct LayerWeights {
  /// Leaky-linear variant: W_k, k = 1..lag, each [n_l, n_l].
  std::vector<Mat> temporal;
  /// Leaky-linear variant: V [n_l, n_{l+1}]; empty for the top layer.
  Mat hierarchical;

  /// Deep variant: inner/outer maps of the temporal and hierarchical paths.
  Mat temporal_inner;  // [n_l, lag * n_l]
  Mat temporal_outer;  // [n_l, n_l]
  Mat hier_inner;      // [n_l, n_{l+1}]
  Mat hier_outer;      // [n_l, n_l]
};

struct HierarchicalProcess {
  ProcessSpec spec;
  /// Index 0 is layer 1 (bottom).
  std::vector<LayerWeights> layers;
  /// Leaky-linear: M [n_obs, n_1]. Deep: outer map [n_obs, n_1].
  Mat mixing;
  /// Deep only: inner map [n_1, n_1].
  Mat mixing_inner;
  /// [n_obs, mixing_noise_dim]
  Mat noise_loading;
  double slope = 0.2;

  const LayerWeights& layer(int l) const { return layers.at(static_cast<std::size_t>(l - 1)); }
};

HierarchicalProcess build_process(const ProcessSpec& spec);

/// One structural assignment z_t^l. delayed[k] holds z_{t-1-k}^l.
Vec transition_layer(const HierarchicalProcess& process, int l, const std::vector<Vec>& delayed,
                     const Vec* parent, const Vec& noise);

/// Observation map x_t = g(z_t^1, eps_t^0).
Vec emit(const HierarchicalProcess& process, const Vec& bottom, const Vec& obs_noise);

struct NoiseRecord {
  /// [N, T, L, n_max] noise as added (scale applied); for t < lag the entries
  /// hold the unit initial-state draws before init_scale.
  std::vector<double> latent;
  /// [N, T, mixing_noise_dim]
  std::vector<double> observation;
};

class GroundTruthSeries {
 public:
  GroundTruthSeries() = default;
  GroundTruthSeries(ProcessSpec spec, std::uint64_t seed, int num_sequences, int seq_length);

  int num_sequences() const { return num_sequences_; }
  int seq_length() const { return seq_length_; }
  int obs_dim() const { return obs_dim_; }
  int num_layers() const { return spec_.num_layers; }
  int max_dim() const { return max_dim_; }
  int layer_dim(int l) const { return spec_.layer_dim(l); }
  const ProcessSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& fingerprint() const { return fingerprint_; }

  double& x(int n, int t, int f) { return x_[index_x(n, t, f)]; }
  double x(int n, int t, int f) const { return x_[index_x(n, t, f)]; }
  /// l in [1, L].
  double& z(int n, int t, int l, int i) { return z_[index_z(n, t, l, i)]; }
  double z(int n, int t, int l, int i) const { return z_[index_z(n, t, l, i)]; }
  bool valid(int l, int i) const { return i < layer_dim(l); }

  /// [T, n_obs] observations of sequence n.
  Mat observations(int n) const;
  /// [count * T, n_obs] observations of sequences [first, first + count), rows (n, t).
  Mat observation_rows(int first, int count) const;
  /// [count * T, n_l] latents of layer l, rows (n, t).
  Mat latent_rows(int l, int first, int count) const;

  const std::vector<double>& x_data() const { return x_; }
  const std::vector<double>& z_data() const { return z_; }
  std::vector<double>& x_data() { return x_; }
  std::vector<double>& z_data() { return z_; }
  /// [L, n_max] as 0/1.
  std::vector<double> mask_data() const;

  std::optional<NoiseRecord> noise;

  /// Keeps sequences [first, first + count).
  GroundTruthSeries slice(int first, int count) const;

 private:
  std::size_t index_x(int n, int t, int f) const {
    return (static_cast<std::size_t>(n) * seq_length_ + t) * obs_dim_ + f;
  }
  std::size_t index_z(int n, int t, int l, int i) const {
    return ((static_cast<std::size_t>(n) * seq_length_ + t) * spec_.num_layers + (l - 1)) * max_dim_ + i;
  }

  ProcessSpec spec_;
  std::uint64_t seed_ = 0;
  std::string fingerprint_;
  int num_sequences_ = 0;
  int seq_length_ = 0;
  int obs_dim_ = 0;
  int max_dim_ = 0;
  std::vector<double> x_;
  std::vector<double> z_;
};

/// SHA-256 over the canonical JSON of {"seed": seed, "spec": spec}.
std::string process_fingerprint(const ProcessSpec& spec, std::uint64_t seed);

/// Requires seq_length > lag_order. Sequence n draws from its own stream
/// derived from (seed, n), so the result does not depend on thread count.
GroundTruthSeries sample_series(const HierarchicalProcess& process, int num_sequences, int seq_length,
                                std::uint64_t seed, bool record_noise = false);

}  // namespace child
