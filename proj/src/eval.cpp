#include "child/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "child/hungarian.hpp"

namespace child {

namespace {

/// Centered columns scaled to unit norm; zero-variance columns become zero.
Mat standardize(const Mat& a, const char* label, std::vector<std::string>* warnings) {
  Mat c = a.rowwise() - a.colwise().mean();
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    const double norm = c.col(j).norm();
    const double scale = std::max(1.0, a.col(j).cwiseAbs().maxCoeff());
    if (!(norm > 1e-12 * scale * std::sqrt(static_cast<double>(a.rows())))) {
      c.col(j).setZero();
      if (warnings != nullptr) {
        warnings->push_back(std::string(label) + " component " + std::to_string(j) +
                            " has zero variance; its correlations are set to 0");
      }
    } else {
      c.col(j) /= norm;
    }
  }
  return c;
}

}  // namespace

std::string to_string(Correlation c) { return c == Correlation::Pearson ? "pearson" : "spearman"; }

Correlation correlation_from_string(const std::string& s) {
  if (s == "pearson") return Correlation::Pearson;
  if (s == "spearman") return Correlation::Spearman;
  throw ConfigError("unknown correlation '" + s + "' (expected pearson or spearman)");
}

Mat column_ranks(const Mat& a) {
  Mat r(a.rows(), a.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, j) < a(y, j); });
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t k = i;
      while (k + 1 < order.size() && a(order[k + 1], j) == a(order[i], j)) ++k;
      const double rank = 0.5 * static_cast<double>(i + k);
      for (std::size_t m = i; m <= k; ++m) r(order[m], j) = rank;
      i = k + 1;
    }
  }
  return r;
}

Mat abs_correlation(const Mat& a, const Mat& b, Correlation kind, std::vector<std::string>* warnings) {
  if (a.rows() != b.rows()) throw std::invalid_argument("abs_correlation: sample counts differ");
  const Mat sa = standardize(kind == Correlation::Spearman ? column_ranks(a) : a, "true", warnings);
  const Mat sb = standardize(kind == Correlation::Spearman ? column_ranks(b) : b, "estimated", warnings);
  Mat c = (sa.transpose() * sb).cwiseAbs();
  return c.cwiseMin(1.0);
}

MccResult compute_mcc(const Mat& z_true, const Mat& z_est, Correlation kind) {
  if (z_true.rows() != z_est.rows() || z_true.cols() != z_est.cols()) {
    throw std::invalid_argument("compute_mcc: shapes differ (" + std::to_string(z_true.rows()) + "x" +
                                std::to_string(z_true.cols()) + " vs " + std::to_string(z_est.rows()) + "x" +
                                std::to_string(z_est.cols()) + ")");
  }
  if (z_true.rows() < 3) throw std::invalid_argument("compute_mcc: need at least 3 samples");
  if (!z_true.allFinite() || !z_est.allFinite()) throw NumericalError("compute_mcc: non-finite input");
  MccResult out;
  out.corr = abs_correlation(z_true, z_est, kind, &out.warnings);
  const std::vector<int> rows_to_cols = max_weight_assignment(out.corr);
  out.permutation.assign(rows_to_cols.size(), -1);
  for (std::size_t t = 0; t < rows_to_cols.size(); ++t) out.permutation[static_cast<std::size_t>(rows_to_cols[t])] = static_cast<int>(t);
  const auto d = static_cast<double>(z_true.cols());
  out.mcc = d > 0 ? assignment_value(out.corr, rows_to_cols) / d : 0.0;
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json corr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < corr_matrix.rows(); ++i) {
    std::vector<double> row(corr_matrix.row(i).data(), corr_matrix.row(i).data() + corr_matrix.cols());
    corr.push_back(row);
  }
  nlohmann::json j{{"correlation", to_string(correlation)},
                   {"mcc_overall", mcc_overall},
                   {"mcc_per_layer", mcc_per_layer},
                   {"permutation", permutation},
                   {"layer_permutations", layer_permutations},
                   {"corr_matrix", corr},
                   {"cross_layer_leakage", cross_layer_leakage},
                   {"warnings", warnings}};
  j["correlational_score"] = correlational_score ? nlohmann::json(*correlational_score) : nlohmann::json();
  return j;
}

EvalReport compute_mcc_per_layer(const std::vector<Mat>& layers_true, const std::vector<Mat>& layers_est,
                                 Correlation kind) {
  if (layers_true.size() != layers_est.size()) throw std::invalid_argument("compute_mcc_per_layer: layer count mismatch");
  EvalReport report;
  report.correlation = kind;
  std::vector<int> layer_of;
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < layers_true.size(); ++l) {
    if (layers_true[l].cols() != layers_est[l].cols() || layers_true[l].rows() != layers_est[l].rows()) {
      throw std::invalid_argument("compute_mcc_per_layer: layer " + std::to_string(l + 1) + " dimension mismatch");
    }
    MccResult r = compute_mcc(layers_true[l], layers_est[l], kind);
    report.mcc_per_layer.push_back(r.mcc);
    report.layer_permutations.push_back(r.permutation);
    for (auto& w : r.warnings) report.warnings.push_back("layer " + std::to_string(l + 1) + ": " + w);
    layer_of.insert(layer_of.end(), static_cast<std::size_t>(layers_true[l].cols()), static_cast<int>(l));
    total += layers_true[l].cols();
  }
  if (layers_true.empty()) return report;
  const Eigen::Index S = layers_true[0].rows();
  Mat pooled_true(S, total), pooled_est(S, total);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers_true.size(); ++l) {
    const Eigen::Index n = layers_true[l].cols();
    pooled_true.middleCols(offset, n) = layers_true[l];
    pooled_est.middleCols(offset, n) = layers_est[l];
    offset += n;
  }
  MccResult pooled = compute_mcc(pooled_true, pooled_est, kind);
  report.mcc_overall = pooled.mcc;
  report.permutation = pooled.permutation;
  report.corr_matrix = pooled.corr;
  for (std::size_t j = 0; j < pooled.permutation.size(); ++j) {
    if (layer_of[j] != layer_of[static_cast<std::size_t>(pooled.permutation[j])]) report.cross_layer_leakage = true;
  }
  return report;
}

EvalReport compute_mcc_per_layer(const GroundTruthSeries& series, const LatentStack& latents, Correlation kind) {
  if (latents.num_layers() != series.num_layers()) {
    throw std::invalid_argument("compute_mcc_per_layer: model has " + std::to_string(latents.num_layers()) +
                                " layers, data has " + std::to_string(series.num_layers()));
  }
  if (latents.seq_length != series.seq_length() || latents.num_sequences() != series.num_sequences()) {
    throw std::invalid_argument("compute_mcc_per_layer: latents do not cover the series");
  }
  std::vector<Mat> truth;
  for (int l = 1; l <= series.num_layers(); ++l) truth.push_back(series.latent_rows(l, 0, series.num_sequences()));
  return compute_mcc_per_layer(truth, latents.mean, kind);
}

Mat feature_correlation(const Mat& rows, std::vector<std::string>* warnings) {
  if (rows.rows() < 2) throw std::invalid_argument("feature_correlation: need at least 2 samples");
  const Mat s = standardize(rows, "feature", warnings);
  return s.transpose() * s;
}

double correlational_score(const Mat& real_rows, const Mat& gen_rows) {
  if (real_rows.cols() != gen_rows.cols()) throw std::invalid_argument("correlational_score: feature counts differ");
  return (feature_correlation(real_rows) - feature_correlation(gen_rows)).cwiseAbs().sum();
}

}  // namespace child
