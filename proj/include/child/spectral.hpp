#pragma once

// Finite-state check of the spectral identification argument.
//
// A discrete hierarchical chain has per-layer states z^l in {0..k_l-1}, a top
// layer Markov chain, lower layers drawn from P(z_t^l | z_{t-1}^l, z_t^{l+1}),
// and symbols x_t in {0..m-1} emitted from the bottom layer only. Writing Z_t
// for the joint state (K = prod k_l values), the window joint over
// (past, x_t, future) yields
//
//   P_fp        = P(future, past)                 [m^W, m^W]
//   P_fcp[x]    = P(future, x_t = x, past)        [m^W, m^W]
//   A(x)        = (U' P_fcp[x] V)(U' P_fp V)^{-1}  [K, K]
//
// with U, V the leading K singular vectors of P_fp. When P(future | past) has
// rank K, A(x) = S diag(P(x | Z)) S^{-1}, so the eigenvalue tuples over x are
// the emission columns p(x_t | z_t).

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/common.hpp"

namespace child::spectral {

struct DiscreteHierChain {
  /// Top to bottom: [k_L, ..., k_1].
  std::vector<int> sizes;
  int alphabet = 2;
  /// [k_L, k_L]: row = previous top state.
  Mat top_transition;
  /// conditional[l-1][parent] is [k_l, k_l] (row = previous state) for l < L.
  std::vector<std::vector<Mat>> conditional;
  /// [k_1, m]: row = bottom state.
  Mat emission;
  /// [K] over joint states.
  Vec initial;

  int num_layers() const { return static_cast<int>(sizes.size()); }
  /// l = 1 is the bottom layer.
  int layer_size(int l) const { return sizes.at(static_cast<std::size_t>(num_layers() - l)); }
  int joint_size() const;
  /// Joint index -> per-layer states, bottom-first. The bottom state is the
  /// least significant digit.
  std::vector<int> decode_state(int s) const;
  int encode_state(const std::vector<int>& bottom_first) const;

  /// [K, K]: row = previous joint state.
  Mat joint_transition() const;
  /// [K, m]: row = joint state.
  Mat joint_emission() const;

  /// Throws ConfigError unless every slice is a probability vector (tol 1e-12).
  void validate() const;
  nlohmann::json to_json() const;
  static DiscreteHierChain from_json(const nlohmann::json& j);
};

/// Dirichlet(1) rows everywhere. Instances whose bottom emission rows are
/// closer than min_emission_gap (L1) are rejected and redrawn.
DiscreteHierChain random_chain(const std::vector<int>& sizes, int alphabet, std::mt19937_64& rng,
                               double min_emission_gap = 0.1);

/// Named instances for the command line ("two-layer-min-window", "one-layer", "small-alphabet").
DiscreteHierChain preset_chain(const std::string& name);
std::vector<std::string> preset_chain_names();

struct WindowJoint {
  int half_window = 0;
  int alphabet = 0;
  /// P(x_0, ..., x_{2W}); x_0 is the most significant digit.
  std::vector<double> prob;

  int length() const { return 2 * half_window + 1; }
  double at(const std::vector<int>& symbols) const;
  /// Sums out the first and last symbol: the (W-1) window joint.
  WindowJoint marginalize_outer() const;
};

inline constexpr double kMaxJointConfigurations = 1e7;

/// Exact joint of 2W+1 consecutive symbols starting from chain.initial.
/// Throws ConfigError when m^(2W+1) * K exceeds kMaxJointConfigurations.
WindowJoint enumerate_joint(const DiscreteHierChain& chain, int half_window);

struct OperatorBundle {
  int half_window = 0;
  int alphabet = 0;
  int joint_size = 0;
  int bottom_size = 0;
  Mat p_fp;
  std::vector<Mat> p_fcp;
  /// Singular values of P(future | past) over past values with positive mass.
  Vec singular_values;
  int numerical_rank = 0;
  bool rank_ok = false;
  /// Empty unless rank_ok.
  std::vector<Mat> A;
  /// max |sum_x A(x) - I|, NaN unless rank_ok.
  double identity_error = 0.0;
};

inline constexpr double kRankThreshold = 1e-8;

OperatorBundle build_operators(const WindowJoint& joint, int joint_size, int bottom_size);
OperatorBundle build_operators(const DiscreteHierChain& chain, int half_window);

/// Raised when the injectivity diagnostic fails.
class RecoveryRefused : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct Recovery {
  /// [m, K] eigenvalue tuples, one column per joint state, columns sum to 1.
  Mat emissions;
  /// Distinct tuples and how many joint states share each.
  int distinct_tuples = 0;
  std::vector<int> multiplicity;
  /// Fewer distinct tuples than bottom states: two bottom states emit identically.
  bool collision = false;
  std::vector<std::string> warnings;
};

Recovery recover_emissions(const OperatorBundle& bundle, std::uint64_t seed = 0);

struct RecoveryComparison {
  /// Max abs error after the best column assignment against P(x | Z).
  double max_error = 0.0;
  /// Hausdorff (max-abs metric) distance between the column sets.
  double hausdorff = 0.0;
  /// assignment[j] = true joint state matched to recovered column j.
  std::vector<int> assignment;
};

RecoveryComparison compare_emissions(const Recovery& recovery, const DiscreteHierChain& chain);

struct SweepRow {
  int half_window = 0;
  bool rank_ok = false;
  int numerical_rank = 0;
  int required_rank = 0;
  std::optional<double> max_error;
  std::optional<double> hausdorff;
  bool collision = false;
};

struct Sweep {
  std::vector<SweepRow> rows;
  /// Smallest W with rank_ok, if any.
  std::optional<int> transition;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

Sweep minimal_window_sweep(const DiscreteHierChain& chain, const std::vector<int>& half_windows);

}  // namespace child::spectral
