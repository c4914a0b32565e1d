#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "child/model.hpp"

namespace child {

struct InterpolationRequest {
  /// l = 1 is the bottom layer.
  int layer = 1;
  int component = 0;
  std::vector<double> grid;
  /// Edit a single timestep; all timesteps when empty.
  std::optional<int> timestep;
  /// A feature "moves" when its RMS change exceeds this fraction of its RMS.
  double movement_threshold = 0.1;
};

struct InterpolationResult {
  int layer = 1;
  int component = 0;
  std::vector<double> grid;
  /// Plain reconstruction of the base window, data units [T, n_obs].
  Mat reconstruction;
  /// One generated series per grid value, data units [T, n_obs].
  std::vector<Mat> series;
  /// Edited latents per grid value, bottom-first.
  std::vector<std::vector<Mat>> latents;
  /// [grid, n_obs] RMS over time of (series - reconstruction).
  Mat rms_change;
  /// [n_obs] RMS over time of the reconstruction about its mean.
  Vec signal_rms;
  /// Features whose RMS change exceeds the threshold for some grid value.
  int moved_features = 0;
  double movement_threshold = 0.1;

  /// Columns grid_value, t, feature, value.
  std::string to_csv() const;
  nlohmann::json summary_json() const;
};

/// Encodes one base window (rows are timesteps, data units), overwrites
/// component `component` of layer `layer` with each grid value and decodes.
/// Lower layers follow the edit through the learned prior: for t >= lag each
/// lower latent is shifted by the change of its conditional prior mean, so the
/// posterior residual is kept and an edit to the original value changes nothing.
InterpolationResult interpolate_latent(const ChildModel& model, const Mat& base_window,
                                       const InterpolationRequest& request);

}  // namespace child
