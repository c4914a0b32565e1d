#include "child/process.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "child/archive.hpp"
#include "child/parallel.hpp"

namespace child {

namespace {

constexpr double kSlope = 0.2;
constexpr double kTransitionRadius = 0.9;
constexpr double kMaxMixingCondition = 25.0;

double leaky(double v) { return v > 0.0 ? v : kSlope * v; }
Vec leaky(const Vec& v) { return v.unaryExpr([](double a) { return leaky(a); }); }

/// Zero mean, unit variance.
double unit_laplace(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double v = u(rng);
  return (v < 0.0 ? 1.0 : -1.0) * std::log1p(-2.0 * std::abs(v)) / std::sqrt(2.0);
}

Mat uniform_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double spectral_radius(const Mat& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(m), false};
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Mat& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(m)};
  return svd.singularValues()(0);
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(m)};
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

/// Square transition matrix rescaled to the target spectral radius.
Mat radius_scaled(int n, double radius, std::mt19937_64& rng) {
  for (;;) {
    Mat w = uniform_matrix(n, n, rng);
    const double r = spectral_radius(w);
    if (r > 1e-3) return w * (radius / r);
  }
}

Mat norm_scaled(int rows, int cols, double norm, std::mt19937_64& rng) {
  for (;;) {
    Mat w = uniform_matrix(rows, cols, rng);
    const double s = spectral_norm(w);
    if (s > 1e-3) return w * (norm / s);
  }
}

/// Mixing matrix with bounded condition number (full column rank).
Mat well_conditioned(int rows, int cols, std::mt19937_64& rng) {
  for (;;) {
    Mat m = uniform_matrix(rows, cols, rng);
    if (condition_number(m) <= kMaxMixingCondition) return m;
  }
}

int checked_int(const nlohmann::json& j, const char* key) {
  if (!j.is_number_integer()) throw ConfigError(std::string("process.") + key + " must be an integer");
  return j.get<int>();
}

double checked_double(const nlohmann::json& j, const char* key) {
  if (!j.is_number()) throw ConfigError(std::string("process.") + key + " must be a number");
  return j.get<double>();
}

}  // namespace

std::string to_string(ProcessVariant v) {
  return v == ProcessVariant::LeakyLinear ? "leaky_linear" : "deep_nonlinear";
}

ProcessVariant process_variant_from_string(const std::string& s) {
  if (s == "leaky_linear") return ProcessVariant::LeakyLinear;
  if (s == "deep_nonlinear") return ProcessVariant::DeepNonlinear;
  throw ConfigError("unknown process variant '" + s + "' (expected leaky_linear or deep_nonlinear)");
}

std::string to_string(NoiseFamily f) { return f == NoiseFamily::Gaussian ? "gaussian" : "laplace"; }

NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::Gaussian;
  if (s == "laplace") return NoiseFamily::Laplace;
  throw ConfigError("unknown noise family '" + s + "' (expected gaussian or laplace)");
}

int ProcessSpec::layer_dim(int l) const {
  if (l < 1 || l > num_layers) throw std::out_of_range("layer index out of range");
  return dims_per_layer[static_cast<std::size_t>(num_layers - l)];
}

double ProcessSpec::layer_noise(int l) const {
  if (l < 1 || l > num_layers) throw std::out_of_range("layer index out of range");
  return noise_scale[static_cast<std::size_t>(num_layers - l)];
}

int ProcessSpec::max_layer_dim() const { return *std::max_element(dims_per_layer.begin(), dims_per_layer.end()); }

void ProcessSpec::validate() const {
  if (num_layers < 1) throw ConfigError("process.num_layers must be >= 1");
  if (static_cast<int>(dims_per_layer.size()) != num_layers) {
    throw ConfigError("process.dims_per_layer must list one dimension per layer");
  }
  for (int d : dims_per_layer) {
    if (d < 1) throw ConfigError("process.dims_per_layer entries must be >= 1");
  }
  if (lag_order < 1) throw ConfigError("process.lag_order must be >= 1");
  if (static_cast<int>(noise_scale.size()) != num_layers) {
    throw ConfigError("process.noise_scale must list one scale per layer");
  }
  for (double s : noise_scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("process.noise_scale entries must be > 0");
  }
  if (!(obs_noise_scale > 0.0) || !std::isfinite(obs_noise_scale)) {
    throw ConfigError("process.obs_noise_scale must be > 0");
  }
  if (mixing_noise_dim < 0) throw ConfigError("process.mixing_noise_dim must be >= 0");
  if (obs_dim < 0) throw ConfigError("process.obs_dim must be >= 0");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ConfigError("process.init_scale must be >= 0");
  const int n1 = layer_dim(1);
  if (variant == ProcessVariant::LeakyLinear && observation_dim() != n1) {
    throw ConfigError("leaky_linear mixing must be square: obs_dim " + std::to_string(observation_dim()) +
                      " != bottom layer dim " + std::to_string(n1) + " makes the mixing map non-injective");
  }
  if (variant == ProcessVariant::DeepNonlinear && observation_dim() < n1) {
    throw ConfigError("deep_nonlinear mixing needs obs_dim >= bottom layer dim for injectivity");
  }
}

nlohmann::json ProcessSpec::to_json() const {
  return nlohmann::json{{"num_layers", num_layers},
                        {"dims_per_layer", dims_per_layer},
                        {"lag_order", lag_order},
                        {"variant", to_string(variant)},
                        {"noise_scale", noise_scale},
                        {"noise_family", to_string(noise_family)},
                        {"obs_noise_scale", obs_noise_scale},
                        {"mixing_noise_dim", mixing_noise_dim},
                        {"obs_dim", obs_dim},
                        {"init_scale", init_scale},
                        {"seed", seed}};
}

ProcessSpec ProcessSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("process section must be an object");
  static const std::set<std::string> known{"num_layers",       "dims_per_layer", "lag_order", "variant",
                                           "noise_scale",      "noise_family",   "obs_noise_scale",
                                           "mixing_noise_dim", "obs_dim",        "init_scale", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key in process section: '" + key + "'");
  }
  ProcessSpec s;
  if (j.contains("num_layers")) s.num_layers = checked_int(j["num_layers"], "num_layers");
  if (j.contains("dims_per_layer")) {
    s.dims_per_layer.clear();
    for (const auto& d : j["dims_per_layer"]) s.dims_per_layer.push_back(checked_int(d, "dims_per_layer"));
  }
  if (j.contains("lag_order")) s.lag_order = checked_int(j["lag_order"], "lag_order");
  if (j.contains("variant")) s.variant = process_variant_from_string(j["variant"].get<std::string>());
  if (j.contains("noise_scale")) {
    s.noise_scale.clear();
    if (j["noise_scale"].is_number()) {
      s.noise_scale.assign(static_cast<std::size_t>(s.num_layers), j["noise_scale"].get<double>());
    } else {
      for (const auto& v : j["noise_scale"]) s.noise_scale.push_back(checked_double(v, "noise_scale"));
    }
  } else {
    s.noise_scale.assign(static_cast<std::size_t>(s.num_layers), 0.1);
  }
  if (j.contains("noise_family")) {
    if (!j["noise_family"].is_string()) throw ConfigError("process.noise_family must be a string");
    s.noise_family = noise_family_from_string(j["noise_family"].get<std::string>());
  }
  if (j.contains("obs_noise_scale")) s.obs_noise_scale = checked_double(j["obs_noise_scale"], "obs_noise_scale");
  if (j.contains("mixing_noise_dim")) s.mixing_noise_dim = checked_int(j["mixing_noise_dim"], "mixing_noise_dim");
  if (j.contains("obs_dim")) s.obs_dim = checked_int(j["obs_dim"], "obs_dim");
  if (j.contains("init_scale")) s.init_scale = checked_double(j["init_scale"], "init_scale");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ConfigError("process.seed must be a non-negative integer");
    }
    s.seed = j["seed"].get<std::uint64_t>();
  }
  s.validate();
  return s;
}

std::vector<std::string> preset_names() { return {"A", "B", "C", "D", "E", "F", "G"}; }

ProcessSpec preset_spec(const std::string& name) {
  ProcessSpec s;
  auto layered = [&s](std::vector<int> dims) {
    s.num_layers = static_cast<int>(dims.size());
    s.dims_per_layer = std::move(dims);
    s.noise_scale.assign(s.dims_per_layer.size(), 0.1);
  };
  if (name == "A") {
    layered({1, 4});
  } else if (name == "B") {
    layered({4});
  } else if (name == "C") {
    layered({2, 8});
  } else if (name == "D") {
    layered({1, 4});
    s.lag_order = 2;
  } else if (name == "E") {
    layered({1, 4});
    s.variant = ProcessVariant::DeepNonlinear;
  } else if (name == "F") {
    layered({1, 2, 4});
  } else if (name == "G") {
    layered({8, 8, 8});
  } else {
    throw ConfigError("unknown preset '" + name + "'; valid presets: A, B, C, D, E, F, G");
  }
  return s;
}

int default_seq_length(const ProcessSpec& spec) { return 2 * (2 * spec.num_layers + 1); }

HierarchicalProcess build_process(const ProcessSpec& spec) {
  spec.validate();
  HierarchicalProcess p;
  p.spec = spec;
  p.slope = kSlope;
  std::mt19937_64 rng(derive_seed(spec.seed, "process-weights"));
  const int L = spec.num_layers;
  const int tau = spec.lag_order;
  p.layers.resize(static_cast<std::size_t>(L));
  for (int l = 1; l <= L; ++l) {
    LayerWeights& w = p.layers[static_cast<std::size_t>(l - 1)];
    const int n = spec.layer_dim(l);
    if (spec.variant == ProcessVariant::LeakyLinear) {
      for (int k = 0; k < tau; ++k) w.temporal.push_back(radius_scaled(n, kTransitionRadius / tau, rng));
      if (l < L) {
        const int np = spec.layer_dim(l + 1);
        w.hierarchical = uniform_matrix(n, np, rng);
        for (int i = 0; i < n; ++i) {
          for (int j = i; j < np; ++j) w.hierarchical(i, j) = 0.0;
        }
      }
    } else {
      // Two stacked maps whose spectral norms multiply to the target radius.
      const double per_map = std::sqrt(kTransitionRadius);
      w.temporal_inner = norm_scaled(n, tau * n, per_map, rng);
      w.temporal_outer = norm_scaled(n, n, per_map, rng);
      if (l < L) {
        const int np = spec.layer_dim(l + 1);
        w.hier_inner = uniform_matrix(n, np, rng);
        w.hier_outer = uniform_matrix(n, n, rng);
      }
    }
  }
  const int n1 = spec.layer_dim(1);
  const int nobs = spec.observation_dim();
  if (spec.variant == ProcessVariant::LeakyLinear) {
    p.mixing = well_conditioned(nobs, n1, rng);
  } else {
    p.mixing_inner = well_conditioned(n1, n1, rng);
    p.mixing = well_conditioned(nobs, n1, rng);
  }
  const int d0 = spec.mixing_noise_dim;
  p.noise_loading = d0 == 1 ? Mat::Ones(nobs, 1) : uniform_matrix(nobs, d0, rng);
  return p;
}

Vec transition_layer(const HierarchicalProcess& process, int l, const std::vector<Vec>& delayed, const Vec* parent,
                     const Vec& noise) {
  const ProcessSpec& spec = process.spec;
  const LayerWeights& w = process.layer(l);
  const int n = spec.layer_dim(l);
  const int tau = spec.lag_order;
  if (static_cast<int>(delayed.size()) != tau) throw std::invalid_argument("transition_layer: need lag_order delays");
  const bool has_parent = l < spec.num_layers;
  if (has_parent != (parent != nullptr)) throw std::invalid_argument("transition_layer: parent presence mismatch");
  if (spec.variant == ProcessVariant::LeakyLinear) {
    Vec pre = Vec::Zero(n);
    for (int k = 0; k < tau; ++k) pre += w.temporal[static_cast<std::size_t>(k)] * delayed[static_cast<std::size_t>(k)];
    Vec z = leaky(pre) + noise;
    if (has_parent) z += w.hierarchical * (*parent);
    return z;
  }
  Vec stacked(tau * n);
  for (int k = 0; k < tau; ++k) stacked.segment(k * n, n) = delayed[static_cast<std::size_t>(k)];
  const Vec temporal = leaky(Vec(w.temporal_outer * leaky(Vec(w.temporal_inner * stacked))));
  if (!has_parent) return temporal + noise;
  const Vec hier = leaky(Vec(w.hier_outer * leaky(Vec(w.hier_inner * (*parent)))));
  return 0.5 * temporal + 0.5 * hier + noise;
}

Vec emit(const HierarchicalProcess& process, const Vec& bottom, const Vec& obs_noise) {
  const Vec loaded = process.spec.mixing_noise_dim > 0 ? Vec(process.noise_loading * obs_noise)
                                                       : Vec(Vec::Zero(process.spec.observation_dim()));
  if (process.spec.variant == ProcessVariant::LeakyLinear) {
    return leaky(Vec(process.mixing * leaky(bottom) + loaded));
  }
  return leaky(Vec(process.mixing * leaky(Vec(process.mixing_inner * bottom)))) + loaded;
}

std::string process_fingerprint(const ProcessSpec& spec, std::uint64_t seed) {
  return sha256_hex(canonical_json(nlohmann::json{{"spec", spec.to_json()}, {"seed", seed}}));
}

GroundTruthSeries::GroundTruthSeries(ProcessSpec spec, std::uint64_t seed, int num_sequences, int seq_length)
    : spec_(std::move(spec)),
      seed_(seed),
      num_sequences_(num_sequences),
      seq_length_(seq_length),
      obs_dim_(spec_.observation_dim()),
      max_dim_(spec_.max_layer_dim()) {
  fingerprint_ = process_fingerprint(spec_, seed_);
  x_.assign(static_cast<std::size_t>(num_sequences_) * seq_length_ * obs_dim_, 0.0);
  z_.assign(static_cast<std::size_t>(num_sequences_) * seq_length_ * spec_.num_layers * max_dim_, 0.0);
}

Mat GroundTruthSeries::observations(int n) const { return observation_rows(n, 1); }

Mat GroundTruthSeries::observation_rows(int first, int count) const {
  Mat out(static_cast<Eigen::Index>(count) * seq_length_, obs_dim_);
  for (int s = 0; s < count; ++s) {
    for (int t = 0; t < seq_length_; ++t) {
      for (int f = 0; f < obs_dim_; ++f) out(s * seq_length_ + t, f) = x(first + s, t, f);
    }
  }
  return out;
}

Mat GroundTruthSeries::latent_rows(int l, int first, int count) const {
  const int n = layer_dim(l);
  Mat out(static_cast<Eigen::Index>(count) * seq_length_, n);
  for (int s = 0; s < count; ++s) {
    for (int t = 0; t < seq_length_; ++t) {
      for (int i = 0; i < n; ++i) out(s * seq_length_ + t, i) = z(first + s, t, l, i);
    }
  }
  return out;
}

std::vector<double> GroundTruthSeries::mask_data() const {
  std::vector<double> m(static_cast<std::size_t>(spec_.num_layers) * max_dim_, 0.0);
  for (int l = 1; l <= spec_.num_layers; ++l) {
    for (int i = 0; i < layer_dim(l); ++i) m[static_cast<std::size_t>(l - 1) * max_dim_ + i] = 1.0;
  }
  return m;
}

GroundTruthSeries GroundTruthSeries::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > num_sequences_) throw std::out_of_range("slice out of range");
  GroundTruthSeries out(spec_, seed_, count, seq_length_);
  const std::size_t xs = static_cast<std::size_t>(seq_length_) * obs_dim_;
  const std::size_t zs = static_cast<std::size_t>(seq_length_) * spec_.num_layers * max_dim_;
  std::copy_n(x_.begin() + static_cast<std::ptrdiff_t>(first * xs), count * xs, out.x_.begin());
  std::copy_n(z_.begin() + static_cast<std::ptrdiff_t>(first * zs), count * zs, out.z_.begin());
  return out;
}

GroundTruthSeries sample_series(const HierarchicalProcess& process, int num_sequences, int seq_length,
                                std::uint64_t seed, bool record_noise) {
  const ProcessSpec& spec = process.spec;
  const int L = spec.num_layers;
  const int tau = spec.lag_order;
  if (num_sequences < 0) throw ConfigError("num_sequences must be >= 0");
  if (seq_length <= tau) throw ConfigError("seq_length must exceed lag_order");
  GroundTruthSeries series(spec, seed, num_sequences, seq_length);
  const int nmax = series.max_dim();
  const int d0 = spec.mixing_noise_dim;
  NoiseRecord record;
  if (record_noise) {
    record.latent.assign(series.z_data().size(), 0.0);
    record.observation.assign(static_cast<std::size_t>(num_sequences) * seq_length * d0, 0.0);
  }

  parallel_for(static_cast<std::size_t>(num_sequences), [&](std::size_t begin, std::size_t end) {
    std::normal_distribution<double> normal(0.0, 1.0);
    // history[l-1][t] = z_t^l
    std::vector<std::vector<Vec>> history(static_cast<std::size_t>(L));
    for (std::size_t n = begin; n < end; ++n) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
      const int seq = static_cast<int>(n);
      for (auto& h : history) h.assign(static_cast<std::size_t>(seq_length), Vec());
      for (int t = 0; t < seq_length; ++t) {
        for (int l = L; l >= 1; --l) {
          const int dim = spec.layer_dim(l);
          Vec eps(dim);
          const bool laplace = t >= tau && spec.noise_family == NoiseFamily::Laplace;
          for (int i = 0; i < dim; ++i) eps(i) = laplace ? unit_laplace(rng) : normal(rng);
          Vec z;
          if (t < tau) {
            z = spec.init_scale * eps;
          } else {
            eps *= spec.layer_noise(l);
            std::vector<Vec> delayed;
            for (int k = 1; k <= tau; ++k) delayed.push_back(history[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(t - k)]);
            const Vec* parent = l < L ? &history[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] : nullptr;
            z = transition_layer(process, l, delayed, parent, eps);
          }
          for (int i = 0; i < dim; ++i) {
            series.z(seq, t, l, i) = z(i);
            if (record_noise) {
              record.latent[((static_cast<std::size_t>(seq) * seq_length + t) * L + (l - 1)) * nmax + i] = eps(i);
            }
          }
          history[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(t)] = std::move(z);
        }
        Vec obs_eps(d0);
        for (int k = 0; k < d0; ++k) obs_eps(k) = spec.obs_noise_scale * normal(rng);
        const Vec x = emit(process, history[0][static_cast<std::size_t>(t)], obs_eps);
        for (int f = 0; f < series.obs_dim(); ++f) series.x(seq, t, f) = x(f);
        if (record_noise) {
          for (int k = 0; k < d0; ++k) {
            record.observation[(static_cast<std::size_t>(seq) * seq_length + t) * d0 + k] = obs_eps(k);
          }
        }
      }
    }
  });
  if (record_noise) series.noise = std::move(record);
  return series;
}

}  // namespace child
