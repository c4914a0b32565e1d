#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/model.hpp"
#include "child/nn.hpp"
#include "child/process.hpp"

namespace child {

enum class Variant { Full, NoKl, NoContext };

std::string to_string(Variant v);
/// Accepts "full", "no-kl", "no-context" (and underscore spellings).
Variant variant_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  double beta = 1.0;
  /// Fraction of all steps over which beta ramps linearly from 0.
  double warmup_fraction = 0.1;
  double grad_clip = 10.0;
  /// Observation noise scale of the Gaussian likelihood in normalized units;
  /// the reconstruction term is weighted by n_obs / (2 recon_sigma^2).
  double recon_sigma = 0.05;
  std::uint64_t seed = 0;
  /// Write last.ckpt every this many epochs (0: only at the end).
  int checkpoint_every = 1;
  Variant variant = Variant::Full;
  int validation_size = 1024;
  /// "val_loss" (lower is better) or "val_mcc" (higher is better).
  std::string select_by = "val_loss";
  double divergence_threshold = 1e6;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct ElboTerms {
  double recon = 0.0;  // MSE over all timesteps and features (normalized units)
  double kl = 0.0;     // (log q - log p) summed over latents, averaged over rows
  double loss = 0.0;   // optimized objective
};

/// Symbolic objective on one batch; rows (sequence, t) of normalized observations.
/// noise[l-1] holds the standard-normal draws for layer l.
struct ElboGraph {
  ad::Var recon;
  ad::Var kl;
  ad::Var loss;
};
ElboGraph build_elbo(ad::Tape& tape, const ChildModel& model, const Mat& x_normalized, int seq_length,
                     const std::vector<Mat>& noise, double recon_weight, double kl_weight);

/// Standard-normal noise for every latent of `rows` rows.
std::vector<Mat> draw_posterior_noise(const ModelConfig& config, Eigen::Index rows, std::mt19937_64& rng);

double reconstruction_weight(const ModelConfig& model, const TrainConfig& train);

/// Value of the terms on a batch (observations in data units) with fixed noise.
ElboTerms elbo_terms(const ChildModel& model, const Mat& observations, int seq_length, const std::vector<Mat>& noise,
                     const TrainConfig& config, double kl_weight = 1.0);
ElboTerms elbo_terms(const ChildModel& model, const GroundTruthSeries& batch, const TrainConfig& config,
                     std::mt19937_64& rng);

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  double recon = 0.0;
  double kl = 0.0;
  double elbo = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_mcc;
  double beta = 0.0;
  double wall_time_s = 0.0;

  nlohmann::json to_json() const;
  static EpochMetrics from_json(const nlohmann::json& j);
};

/// Everything needed to continue a run exactly.
struct TrainState {
  std::unique_ptr<ChildModel> model;
  nn::Adam optimizer;
  TrainConfig config;
  std::int64_t step = 0;
  int epochs_done = 0;
  std::optional<double> best_score;
  int best_epoch = -1;
  /// Parameter values at the best epoch, keyed by name.
  std::map<std::string, Mat> best_parameters;
  std::vector<EpochMetrics> history;
  std::string dataset_fingerprint;
};

inline constexpr const char* kCheckpointFormatVersion = "child-checkpoint/1";

/// Raised when a checkpoint does not fit the requested model configuration.
class CheckpointMismatch : public DataError {
 public:
  using DataError::DataError;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Also verifies the stored model configuration equals `expected`.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);
/// Copies the best-epoch parameters (if any) into the model.
void restore_best(TrainState& state);

struct TrainOptions {
  /// When set: metrics.jsonl, last.ckpt and best.ckpt are written here.
  std::optional<std::filesystem::path> output_dir;
  /// Continue from a checkpoint written by an earlier run with the same config.
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many epochs in total (simulates an interrupted run).
  std::optional<int> stop_after_epoch;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  TrainState state;  // model holds the best-epoch parameters
  bool diverged = false;
  std::string divergence_message;
};

/// The model configuration is adjusted to the variant (NO_CONTEXT disables the
/// temporal window) and checked against the dataset shapes.
ModelConfig resolve_model_config(const ModelConfig& base, const GroundTruthSeries& data, const TrainConfig& train);

TrainResult train(const GroundTruthSeries& data, const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainOptions& options = {});

/// Pooled MCC of posterior means against the ground-truth latents.
double posterior_mcc(const ChildModel& model, const GroundTruthSeries& data);

}  // namespace child
