#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/common.hpp"
#include "child/model.hpp"
#include "child/process.hpp"

namespace child {

enum class Correlation { Pearson, Spearman };

std::string to_string(Correlation c);
Correlation correlation_from_string(const std::string& s);

/// |corr(a[:, i], b[:, j])| as an [a.cols(), b.cols()] matrix. A zero-variance
/// column contributes correlations of 0 and a message in *warnings.
Mat abs_correlation(const Mat& a, const Mat& b, Correlation kind, std::vector<std::string>* warnings = nullptr);

/// Average ranks per column (ties share their mean rank).
Mat column_ranks(const Mat& a);

struct MccResult {
  double mcc = 0.0;
  /// permutation[j] = true component matched to estimated component j.
  std::vector<int> permutation;
  /// [d_true, d_est] absolute correlations.
  Mat corr;
  std::vector<std::string> warnings;
};

/// Rows are samples. Requires equal shapes and at least 3 samples.
MccResult compute_mcc(const Mat& z_true, const Mat& z_est, Correlation kind = Correlation::Pearson);

struct EvalReport {
  Correlation correlation = Correlation::Pearson;
  double mcc_overall = 0.0;
  std::vector<double> mcc_per_layer;  // bottom-first
  std::vector<int> permutation;       // pooled, estimated -> true
  std::vector<std::vector<int>> layer_permutations;
  Mat corr_matrix;                    // pooled
  /// Pooled assignment matched an estimated component to a true component of another layer.
  bool cross_layer_leakage = false;
  std::optional<double> correlational_score;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// layers_true / layers_est: bottom-first [S, n_l] blocks with matching shapes.
EvalReport compute_mcc_per_layer(const std::vector<Mat>& layers_true, const std::vector<Mat>& layers_est,
                                 Correlation kind = Correlation::Pearson);
/// Uses the posterior means of `latents` against the ground-truth latents of `series`.
EvalReport compute_mcc_per_layer(const GroundTruthSeries& series, const LatentStack& latents,
                                 Correlation kind = Correlation::Pearson);

/// Pearson correlation matrix of the columns (zero-variance columns get 0).
Mat feature_correlation(const Mat& rows, std::vector<std::string>* warnings = nullptr);

/// Sum of |C_real - C_gen| over the time-pooled feature correlation matrices.
/// Rows are (sequence, t) samples.
double correlational_score(const Mat& real_rows, const Mat& gen_rows);

}  // namespace child
