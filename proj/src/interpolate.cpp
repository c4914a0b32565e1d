#include "child/interpolate.hpp"

#include <cmath>
#include <sstream>

namespace child {

namespace {

std::vector<Vec> delayed_rows(const Mat& z, int t, int lag) {
  std::vector<Vec> out;
  for (int k = 1; k <= lag; ++k) out.push_back(z.row(t - k).transpose());
  return out;
}

}  // namespace

InterpolationResult interpolate_latent(const ChildModel& model, const Mat& base_window,
                                       const InterpolationRequest& request) {
  const ModelConfig& cfg = model.config();
  const int L = cfg.num_layers;
  if (request.layer < 1 || request.layer > L) {
    throw ConfigError("interpolate: layer " + std::to_string(request.layer) + " out of range 1.." + std::to_string(L));
  }
  const int n_edit = cfg.layer_dim(request.layer);
  if (request.component < 0 || request.component >= n_edit) {
    throw ConfigError("interpolate: component " + std::to_string(request.component) + " out of range 0.." +
                      std::to_string(n_edit - 1) + " for layer " + std::to_string(request.layer));
  }
  if (request.grid.empty()) throw ConfigError("interpolate: grid must not be empty");
  if (base_window.cols() != cfg.obs_dim) {
    throw DataError("interpolate: base window has " + std::to_string(base_window.cols()) + " features, model expects " +
                    std::to_string(cfg.obs_dim));
  }
  const int T = static_cast<int>(base_window.rows());
  if (T < 1) throw DataError("interpolate: empty base window");
  if (request.timestep && (*request.timestep < 0 || *request.timestep >= T)) {
    throw ConfigError("interpolate: timestep " + std::to_string(*request.timestep) + " outside the window");
  }

  const LatentStack base = model.encode_context(base_window, T);
  const int tau = cfg.lag;

  InterpolationResult out;
  out.layer = request.layer;
  out.component = request.component;
  out.grid = request.grid;
  out.movement_threshold = request.movement_threshold;
  out.reconstruction = model.normalization.invert(model.decode(base.mean[0]));

  // Conditional prior means of the unedited stack, shared by every grid value.
  std::vector<Mat> base_cond(static_cast<std::size_t>(request.layer - 1));
  for (int l = request.layer - 1; l >= 1; --l) {
    Mat& m = base_cond[static_cast<std::size_t>(l - 1)];
    m = Mat::Zero(T, cfg.layer_dim(l));
    const Mat& zl = base.mean[static_cast<std::size_t>(l - 1)];
    const Mat& zp = base.mean[static_cast<std::size_t>(l)];
    for (int t = tau; t < T; ++t) {
      const Vec parent = zp.row(t).transpose();
      m.row(t) = model.conditional_mean(l, delayed_rows(zl, t, tau), &parent).transpose();
    }
  }

  const Eigen::Index n_obs = cfg.obs_dim;
  out.rms_change = Mat::Zero(static_cast<Eigen::Index>(request.grid.size()), n_obs);
  for (std::size_t g = 0; g < request.grid.size(); ++g) {
    std::vector<Mat> z = base.mean;
    Mat& edited = z[static_cast<std::size_t>(request.layer - 1)];
    for (int t = 0; t < T; ++t) {
      if (!request.timestep || *request.timestep == t) edited(t, request.component) = request.grid[g];
    }
    for (int l = request.layer - 1; l >= 1; --l) {
      Mat& zl = z[static_cast<std::size_t>(l - 1)];
      const Mat& zp = z[static_cast<std::size_t>(l)];
      const Mat& cond0 = base_cond[static_cast<std::size_t>(l - 1)];
      for (int t = tau; t < T; ++t) {
        const Vec parent = zp.row(t).transpose();
        const Vec cond = model.conditional_mean(l, delayed_rows(zl, t, tau), &parent);
        zl.row(t) += (cond - cond0.row(t).transpose()).transpose();
      }
    }
    Mat series = model.normalization.invert(model.decode(z[0]));
    const Mat diff = series - out.reconstruction;
    out.rms_change.row(static_cast<Eigen::Index>(g)) = (diff.colwise().squaredNorm() / T).cwiseSqrt();
    out.series.push_back(std::move(series));
    out.latents.push_back(std::move(z));
  }

  const Mat centered = out.reconstruction.rowwise() - out.reconstruction.colwise().mean();
  out.signal_rms = (centered.colwise().squaredNorm() / T).cwiseSqrt().transpose();
  for (Eigen::Index f = 0; f < n_obs; ++f) {
    if ((out.rms_change.col(f).array() > request.movement_threshold * out.signal_rms(f)).any()) ++out.moved_features;
  }
  return out;
}

std::string InterpolationResult::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "grid_value,t,feature,value\n";
  for (std::size_t g = 0; g < series.size(); ++g) {
    const Mat& s = series[g];
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
      for (Eigen::Index f = 0; f < s.cols(); ++f) os << grid[g] << ',' << t << ',' << f << ',' << s(t, f) << '\n';
    }
  }
  return os.str();
}

nlohmann::json InterpolationResult::summary_json() const {
  nlohmann::json rms = nlohmann::json::array();
  for (Eigen::Index g = 0; g < rms_change.rows(); ++g) {
    rms.push_back(std::vector<double>(rms_change.row(g).data(), rms_change.row(g).data() + rms_change.cols()));
  }
  return {{"layer", layer},
          {"component", component},
          {"grid", grid},
          {"rms_change", rms},
          {"signal_rms", std::vector<double>(signal_rms.data(), signal_rms.data() + signal_rms.size())},
          {"movement_threshold", movement_threshold},
          {"moved_features", moved_features}};
}

}  // namespace child
