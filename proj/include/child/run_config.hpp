#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "child/eval.hpp"
#include "child/model.hpp"
#include "child/process.hpp"
#include "child/training.hpp"

namespace child {

struct DataOptions {
  int num_sequences = 100000;
  /// 0 means the process default 2 (2L + 1).
  int seq_length = 0;
};

struct EvalOptions {
  Correlation correlation = Correlation::Pearson;
  /// Sequences drawn from the model for the correlational score (0 disables it).
  int generated_sequences = 1024;
};

/// Everything one CLI invocation needs. All seeds derive from `seed`:
/// process.seed, the sampling seed, train.seed and the evaluation seed are
/// named substreams of it.
struct RunConfig {
  ProcessSpec process;
  DataOptions data;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  std::string output_dir = "run";
  std::uint64_t seed = 0;

  std::uint64_t sample_seed() const;
  std::uint64_t eval_seed() const;
  int seq_length() const;

  /// Re-derives process.seed and train.seed from `seed`.
  void derive_seeds();
  /// Dims, lag and observation size must agree across sections.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected in every section. Model fields that follow
  /// from the process (layers, dims, lag, obs_dim) are filled in when absent
  /// and must agree when present. Section seeds absent from the file are
  /// derived from the root seed.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig preset(const std::string& name, std::uint64_t seed);
};

/// Model fields implied by a process spec; other fields keep their defaults.
ModelConfig model_config_for(const ProcessSpec& spec);

}  // namespace child
