#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "child/common.hpp"
#include "child/model.hpp"

namespace child::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(CHILD_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Relative error with an absolute floor, used by finite-difference checks.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Small two-layer model used across test files.
inline ModelConfig small_model_config(int lag = 1) {
  ModelConfig c;
  c.num_layers = 2;
  c.dims_per_layer = {1, 3};
  c.obs_dim = 3;
  c.lag = lag;
  c.encoder_channels = 8;
  c.encoder_layer_hidden = 8;
  c.decoder_hidden = {8};
  c.prior_hidden = 8;
  c.prior_depth = 2;
  c.flow_components = 3;
  return c;
}

}  // namespace child::testing
