#include "child/model.hpp"

#include <array>
#include <cmath>
#include <set>

namespace child {

namespace {

using ad::Var;

// exp(kDisabledLogWeight) is exactly 0 in double precision.
constexpr double kDisabledLogWeight = -1000.0;
constexpr double kInitialLogWeight = -4.0;
constexpr int kQuadratureOrder = 150;

std::shared_ptr<const std::vector<int>> shifted_rows(int rows, int seq_length, int offset) {
  auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const int t = r % seq_length;
    const int s = t + offset;
    (*idx)[static_cast<std::size_t>(r)] = (s >= 0 && s < seq_length) ? r + offset : -1;
  }
  return idx;
}

std::shared_ptr<const std::vector<int>> rows_where(int rows, int seq_length, bool (*keep)(int, int), int lag) {
  auto idx = std::make_shared<std::vector<int>>();
  for (int r = 0; r < rows; ++r) {
    if (keep(r % seq_length, lag)) idx->push_back(r);
  }
  return idx;
}

bool after_lag(int t, int lag) { return t >= lag; }
bool within_lag(int t, int lag) { return t < lag; }

/// Rows r in sel mapped to r - k (same sequence, guaranteed by t >= lag >= k).
std::shared_ptr<const std::vector<int>> delayed_rows(const std::vector<int>& sel, int k) {
  auto idx = std::make_shared<std::vector<int>>(sel.size());
  for (std::size_t j = 0; j < sel.size(); ++j) (*idx)[j] = sel[j] - k;
  return idx;
}

int positive_int(const nlohmann::json& j, const std::string& key, int min_value) {
  if (!j.is_number_integer()) throw ConfigError("model." + key + " must be an integer");
  const int v = j.get<int>();
  if (v < min_value) throw ConfigError("model." + key + " must be >= " + std::to_string(min_value));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

int ModelConfig::total_latent_dim() const {
  int n = 0;
  for (int d : dims_per_layer) n += d;
  return n;
}

std::vector<int> ModelConfig::dilations() const {
  std::vector<int> out;
  int remaining = half_width();
  int next = 1;
  while (remaining > 0) {
    const int d = std::min(next, remaining);
    out.push_back(d);
    remaining -= d;
    next *= 2;
  }
  return out;
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw ConfigError("model.num_layers must be >= 1");
  if (static_cast<int>(dims_per_layer.size()) != num_layers) {
    throw ConfigError("model.dims_per_layer must list one dimension per layer");
  }
  for (int d : dims_per_layer) {
    if (d < 1) throw ConfigError("model.dims_per_layer entries must be >= 1");
  }
  if (obs_dim < 1) throw ConfigError("model.obs_dim must be >= 1");
  if (receptive_half_width < 0) throw ConfigError("model.receptive_half_width must be >= 1 (or 0 for default)");
  if (lag < 1) throw ConfigError("model.lag must be >= 1");
  if (encoder_channels < 1 || encoder_layer_hidden < 1) throw ConfigError("model encoder widths must be >= 1");
  if (encoder_pointwise_layers < 0) throw ConfigError("model.encoder_pointwise_layers must be >= 0");
  for (int w : decoder_hidden) {
    if (w < 1) throw ConfigError("model.decoder_hidden entries must be >= 1");
  }
  if (prior_depth < 1) throw ConfigError("model.prior_depth must be >= 1");
  if (prior_hidden < 1) throw ConfigError("model.prior_hidden must be >= 1");
  if (flow_components < 0) throw ConfigError("model.flow_components must be >= 0");
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("model.slope must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"num_layers", num_layers},
          {"dims_per_layer", dims_per_layer},
          {"obs_dim", obs_dim},
          {"receptive_half_width", receptive_half_width},
          {"lag", lag},
          {"use_context", use_context},
          {"encoder_channels", encoder_channels},
          {"encoder_pointwise_layers", encoder_pointwise_layers},
          {"encoder_layer_hidden", encoder_layer_hidden},
          {"decoder_hidden", decoder_hidden},
          {"prior_hidden", prior_hidden},
          {"prior_depth", prior_depth},
          {"flow_components", flow_components},
          {"slope", slope}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model section must be an object");
  static const std::set<std::string> known{
      "num_layers",         "dims_per_layer", "obs_dim",      "receptive_half_width", "lag",
      "use_context",        "encoder_channels", "encoder_pointwise_layers", "encoder_layer_hidden",
      "decoder_hidden",     "prior_hidden",   "prior_depth",  "flow_components",      "slope"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key in model section: '" + key + "'");
  }
  ModelConfig c;
  try {
    if (j.contains("num_layers")) c.num_layers = positive_int(j["num_layers"], "num_layers", 1);
    if (j.contains("dims_per_layer")) c.dims_per_layer = j["dims_per_layer"].get<std::vector<int>>();
    if (j.contains("obs_dim")) c.obs_dim = positive_int(j["obs_dim"], "obs_dim", 1);
    if (j.contains("receptive_half_width")) {
      c.receptive_half_width = positive_int(j["receptive_half_width"], "receptive_half_width", 0);
    }
    if (j.contains("lag")) c.lag = positive_int(j["lag"], "lag", 1);
    if (j.contains("use_context")) c.use_context = j["use_context"].get<bool>();
    if (j.contains("encoder_channels")) c.encoder_channels = positive_int(j["encoder_channels"], "encoder_channels", 1);
    if (j.contains("encoder_pointwise_layers")) {
      c.encoder_pointwise_layers = positive_int(j["encoder_pointwise_layers"], "encoder_pointwise_layers", 0);
    }
    if (j.contains("encoder_layer_hidden")) {
      c.encoder_layer_hidden = positive_int(j["encoder_layer_hidden"], "encoder_layer_hidden", 1);
    }
    if (j.contains("decoder_hidden")) c.decoder_hidden = j["decoder_hidden"].get<std::vector<int>>();
    if (j.contains("prior_hidden")) c.prior_hidden = positive_int(j["prior_hidden"], "prior_hidden", 1);
    if (j.contains("prior_depth")) c.prior_depth = positive_int(j["prior_depth"], "prior_depth", 1);
    if (j.contains("flow_components")) c.flow_components = positive_int(j["flow_components"], "flow_components", 0);
    if (j.contains("slope")) c.slope = j["slope"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model section: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Normalization

Normalization Normalization::identity(int dim) { return {RowVec::Zero(dim), RowVec::Ones(dim)}; }

Normalization Normalization::fit(const Mat& rows) {
  if (rows.rows() == 0) throw DataError("cannot fit normalization on an empty dataset");
  const RowVec hi = rows.colwise().maxCoeff();
  const RowVec lo = rows.colwise().minCoeff();
  Normalization n;
  n.center = 0.5 * (hi + lo);
  n.scale = ((hi - lo) / 1.8).unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
  return n;
}

Mat Normalization::apply(const Mat& x) const {
  return ((x.rowwise() - center).array().rowwise() / scale.array()).matrix();
}

Mat Normalization::invert(const Mat& x) const {
  return (x.array().rowwise() * scale.array()).matrix().rowwise() + center;
}

int LatentStack::num_sequences() const {
  if (mean.empty() || seq_length == 0) return 0;
  return static_cast<int>(mean[0].rows() / seq_length);
}

// ---------------------------------------------------------------------------
// FlowCoefficients

double FlowCoefficients::forward(double z) const {
  double r = std::exp(log_scale) * z + shift;
  for (Eigen::Index k = 0; k < log_weight.size(); ++k) {
    r += std::exp(log_weight(k)) * std::tanh(std::exp(log_slope(k)) * z + offset(k));
  }
  return r;
}

double FlowCoefficients::derivative(double z) const {
  double d = std::exp(log_scale);
  for (Eigen::Index k = 0; k < log_weight.size(); ++k) {
    const double th = std::tanh(std::exp(log_slope(k)) * z + offset(k));
    d += std::exp(log_weight(k) + log_slope(k)) * (1.0 - th * th);
  }
  return d;
}

double FlowCoefficients::inverse(double eps) const {
  double lo = -1.0, hi = 1.0;
  while (forward(lo) > eps) {
    lo *= 2.0;
    if (!std::isfinite(lo)) throw NumericalError("flow inverse: cannot bracket target " + std::to_string(eps) + " from below (log_scale " + std::to_string(log_scale) + ", shift " + std::to_string(shift) + ")");
  }
  while (forward(hi) < eps) {
    hi *= 2.0;
    if (!std::isfinite(hi)) throw NumericalError("flow inverse: cannot bracket target " + std::to_string(eps) + " from above (log_scale " + std::to_string(log_scale) + ", shift " + std::to_string(shift) + ")");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (forward(mid) < eps ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// ChildModel

ChildModel::ChildModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  normalization = Normalization::identity(config_.obs_dim);
  std::mt19937_64 rng(init_seed);
  const int C = config_.encoder_channels;
  const int kernel = config_.use_context ? 3 : 1;
  int in = config_.obs_dim;
  int j = 0;
  for (int d : config_.dilations()) {
    convs_.push_back(Conv{nn::Linear(store_, "enc.conv" + std::to_string(j++), kernel * in, C, rng), d, kernel});
    in = C;
  }
  for (int p = 0; p < config_.encoder_pointwise_layers; ++p) {
    pointwise_.emplace_back(store_, "enc.pw" + std::to_string(p), C, C, rng);
  }
  const int H = config_.encoder_layer_hidden;
  int width = C;
  for (int l = 1; l <= config_.num_layers; ++l) {
    if (l > 1) {
      layer_maps_.emplace_back(store_, "enc.map" + std::to_string(l), std::vector<int>{width, H, H}, config_.slope, rng);
      width = H;
    }
    mean_heads_.emplace_back(store_, "enc.mean" + std::to_string(l), width, config_.layer_dim(l), rng);
    logvar_heads_.emplace_back(store_, "enc.logvar" + std::to_string(l), width, config_.layer_dim(l), rng);
  }
  std::vector<int> dec{config_.layer_dim(1)};
  dec.insert(dec.end(), config_.decoder_hidden.begin(), config_.decoder_hidden.end());
  dec.push_back(config_.obs_dim);
  decoder_ = nn::Mlp(store_, "dec", dec, config_.slope, rng);

  const int K = config_.flow_components;
  flows_.resize(static_cast<std::size_t>(config_.num_layers));
  for (int l = 1; l <= config_.num_layers; ++l) {
    std::vector<int> widths{conditioning_dim(l)};
    widths.insert(widths.end(), static_cast<std::size_t>(config_.prior_depth), config_.prior_hidden);
    for (int i = 0; i < config_.layer_dim(l); ++i) {
      const std::string name = "prior.l" + std::to_string(l) + ".c" + std::to_string(i);
      FlowNet f{nn::Mlp(store_, name + ".trunk", widths, config_.slope, rng),
                nn::Linear::zeros(store_, name + ".head", config_.prior_hidden, 2 + 3 * K)};
      Mat& bias = f.head.bias().value;
      for (int k = 0; k < K; ++k) {
        bias(0, 2 + k) = kInitialLogWeight;
        bias(0, 2 + 2 * K + k) = K > 1 ? -2.0 + 4.0 * k / (K - 1) : 0.0;
      }
      flows_[static_cast<std::size_t>(l - 1)].push_back(std::move(f));
    }
  }
}

int ChildModel::conditioning_dim(int l) const {
  int d = config_.lag * config_.layer_dim(l);
  if (l < config_.num_layers) d += config_.layer_dim(l + 1);
  return d;
}

void ChildModel::reset_prior_to_identity() {
  const int K = config_.flow_components;
  for (auto& layer : flows_) {
    for (auto& f : layer) {
      f.head.weight().value.setZero();
      f.head.bias().value.setZero();
      for (int k = 0; k < K; ++k) f.head.bias().value(0, 2 + k) = kDisabledLogWeight;
    }
  }
}

EncoderVars ChildModel::encode(ad::Tape& tape, const Var& x, int seq_length) const {
  if (x.cols() != config_.obs_dim) {
    throw std::invalid_argument("encode: observation dim " + std::to_string(x.cols()) + " != model obs_dim " +
                                std::to_string(config_.obs_dim));
  }
  if (seq_length < 1 || x.rows() % seq_length != 0) throw std::invalid_argument("encode: rows not a multiple of T");
  const int rows = static_cast<int>(x.rows());
  Var h = x;
  for (const Conv& conv : convs_) {
    if (conv.kernel == 3) {
      std::array<Var, 3> parts{ad::gather_rows(h, shifted_rows(rows, seq_length, -conv.dilation)), h,
                               ad::gather_rows(h, shifted_rows(rows, seq_length, conv.dilation))};
      h = ad::hcat(parts);
    }
    h = ad::leaky_relu(conv.linear(tape, h), config_.slope);
  }
  for (const auto& pw : pointwise_) h = ad::leaky_relu(pw(tape, h), config_.slope);
  EncoderVars out;
  for (int l = 1; l <= config_.num_layers; ++l) {
    if (l > 1) h = layer_maps_[static_cast<std::size_t>(l - 2)].hidden(tape, h);
    out.mean.push_back(mean_heads_[static_cast<std::size_t>(l - 1)](tape, h));
    out.logvar.push_back(logvar_heads_[static_cast<std::size_t>(l - 1)](tape, h));
  }
  return out;
}

Var ChildModel::decode(ad::Tape& tape, const Var& bottom) const {
  if (bottom.cols() != config_.layer_dim(1)) throw std::invalid_argument("decode: bottom-layer dimension mismatch");
  return ad::tanh(decoder_(tape, bottom));
}

Var ChildModel::flow_conditioning(ad::Tape&, int l, const std::vector<Var>& delayed, const Var* parent) const {
  if (static_cast<int>(delayed.size()) != config_.lag) throw std::invalid_argument("flow: need lag delayed inputs");
  if ((parent != nullptr) != (l < config_.num_layers)) throw std::invalid_argument("flow: parent presence mismatch");
  std::vector<Var> parts(delayed.begin(), delayed.end());
  if (parent != nullptr) parts.push_back(*parent);
  return parts.size() == 1 ? parts[0] : ad::hcat(parts);
}

FlowVars ChildModel::flow(ad::Tape& tape, int l, const Var& current, const std::vector<Var>& delayed,
                          const Var* parent) const {
  const int n = config_.layer_dim(l);
  const int K = config_.flow_components;
  if (current.cols() != n) throw std::invalid_argument("flow: current-step dimension mismatch");
  const Var cond = flow_conditioning(tape, l, delayed, parent);
  std::vector<Var> noise, logjac;
  for (int i = 0; i < n; ++i) {
    const FlowNet& f = flows_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
    const Var p = f.head(tape, f.trunk.hidden(tape, cond));
    const Var z = ad::slice_cols(current, i, 1);
    const Var es = ad::exp(ad::slice_cols(p, 0, 1));
    Var eps = ad::add(ad::mul(es, z), ad::slice_cols(p, 1, 1));
    Var deriv = es;
    if (K > 0) {
      const Var weight = ad::exp(ad::slice_cols(p, 2, K));
      const Var ea = ad::exp(ad::slice_cols(p, 2 + K, K));
      const Var th = ad::tanh(ad::add(ad::mul_col(ea, z), ad::slice_cols(p, 2 + 2 * K, K)));
      eps = ad::add(eps, ad::row_sum(ad::mul(weight, th)));
      const Var sech2 = ad::add_scalar(ad::neg(ad::square(th)), 1.0);
      deriv = ad::add(deriv, ad::row_sum(ad::mul(ad::mul(weight, ea), sech2)));
    }
    noise.push_back(eps);
    logjac.push_back(ad::log(deriv));
  }
  if (n == 1) return {noise[0], logjac[0]};
  return {ad::hcat(noise), ad::hcat(logjac)};
}

Var standard_normal_log_prob(const Var& z) {
  return ad::add_scalar(ad::scale(ad::row_sum(ad::square(z)), -0.5), -0.5 * kLog2Pi * static_cast<double>(z.cols()));
}

Var ChildModel::prior_log_prob(ad::Tape& tape, const std::vector<Var>& samples, int seq_length) const {
  const int L = config_.num_layers;
  const int tau = config_.lag;
  if (static_cast<int>(samples.size()) != L) throw std::invalid_argument("prior_log_prob: one sample per layer");
  const int rows = static_cast<int>(samples[0].rows());
  const auto sel = rows_where(rows, seq_length, after_lag, tau);
  const auto init = rows_where(rows, seq_length, within_lag, tau);
  Var total = tape.constant(Mat::Zero(1, 1));
  for (int l = 1; l <= L; ++l) {
    const Var& z = samples[static_cast<std::size_t>(l - 1)];
    if (!init->empty()) total = ad::add(total, ad::sum(standard_normal_log_prob(ad::gather_rows(z, init))));
    if (sel->empty()) continue;
    std::vector<Var> delayed;
    for (int k = 1; k <= tau; ++k) delayed.push_back(ad::gather_rows(z, delayed_rows(*sel, k)));
    Var parent_var;
    if (l < L) parent_var = ad::gather_rows(samples[static_cast<std::size_t>(l)], sel);
    const FlowVars fv = flow(tape, l, ad::gather_rows(z, sel), delayed, l < L ? &parent_var : nullptr);
    total = ad::add(total, ad::sum(standard_normal_log_prob(fv.noise)));
    total = ad::add(total, ad::sum(fv.log_jacobian));
  }
  return total;
}

LatentStack ChildModel::encode_context(const Mat& observations, int seq_length, std::mt19937_64* rng) const {
  ad::Tape tape(false);
  const EncoderVars ev = encode(tape, tape.constant(normalization.apply(observations)), seq_length);
  LatentStack out;
  out.seq_length = seq_length;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 1; l <= config_.num_layers; ++l) {
    const Mat& mu = ev.mean[static_cast<std::size_t>(l - 1)].value();
    const Mat& lv = ev.logvar[static_cast<std::size_t>(l - 1)].value();
    Mat sample = mu;
    if (rng != nullptr) {
      for (Eigen::Index r = 0; r < mu.rows(); ++r) {
        for (Eigen::Index c = 0; c < mu.cols(); ++c) sample(r, c) = mu(r, c) + std::exp(0.5 * lv(r, c)) * normal(*rng);
      }
    }
    out.mean.push_back(mu);
    out.logvar.push_back(lv);
    out.sample.push_back(std::move(sample));
  }
  return out;
}

Mat ChildModel::decode(const Mat& bottom) const {
  ad::Tape tape(false);
  return decode(tape, tape.constant(bottom)).value();
}

PriorEvaluation ChildModel::prior_noise_and_jacobian(int l, const Mat& current, const std::vector<Mat>& delayed,
                                                     const Mat* parent) const {
  if (l < 1 || l > config_.num_layers) throw std::out_of_range("prior: layer index out of range");
  ad::Tape tape(false);
  std::vector<Var> d;
  for (const Mat& m : delayed) d.push_back(tape.constant(m));
  Var p;
  if (parent != nullptr) p = tape.constant(*parent);
  const FlowVars fv = flow(tape, l, tape.constant(current), d, parent != nullptr ? &p : nullptr);
  PriorEvaluation out;
  out.noise = fv.noise.value();
  out.log_jacobian = fv.log_jacobian.value();
  if (!out.log_jacobian.allFinite()) {
    throw NumericalError("prior flow of layer " + std::to_string(l) + " produced a non-finite log-Jacobian");
  }
  out.log_density = (-0.5 * out.noise.array().square() - 0.5 * kLog2Pi + out.log_jacobian.array()).rowwise().sum();
  return out;
}

PriorDensity ChildModel::prior_log_density(const LatentStack& latents) const {
  const int L = config_.num_layers;
  const int tau = config_.lag;
  const int T = latents.seq_length;
  if (T <= tau) throw std::invalid_argument("prior_log_density requires T > lag");
  if (latents.num_layers() != L) throw std::invalid_argument("prior_log_density: layer count mismatch");
  const int rows = static_cast<int>(latents.sample[0].rows());
  PriorDensity out;
  out.per_step = Mat::Zero(rows, L);
  const auto sel = rows_where(rows, T, after_lag, tau);
  for (int l = 1; l <= L; ++l) {
    const Mat& z = latents.sample[static_cast<std::size_t>(l - 1)];
    for (int r = 0; r < rows; ++r) {
      if (r % T < tau) out.per_step(r, l - 1) = -0.5 * z.row(r).squaredNorm() - 0.5 * kLog2Pi * static_cast<double>(z.cols());
    }
    const auto m = static_cast<Eigen::Index>(sel->size());
    Mat current(m, z.cols());
    std::vector<Mat> delayed(static_cast<std::size_t>(tau), Mat(m, z.cols()));
    Mat parent;
    if (l < L) parent.resize(m, latents.sample[static_cast<std::size_t>(l)].cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      const int r = (*sel)[static_cast<std::size_t>(j)];
      current.row(j) = z.row(r);
      for (int k = 1; k <= tau; ++k) delayed[static_cast<std::size_t>(k - 1)].row(j) = z.row(r - k);
      if (l < L) parent.row(j) = latents.sample[static_cast<std::size_t>(l)].row(r);
    }
    const PriorEvaluation pe = prior_noise_and_jacobian(l, current, delayed, l < L ? &parent : nullptr);
    for (Eigen::Index j = 0; j < m; ++j) out.per_step((*sel)[static_cast<std::size_t>(j)], l - 1) = pe.log_density(j);
  }
  if (!out.per_step.allFinite()) {
    for (Eigen::Index r = 0; r < out.per_step.rows(); ++r) {
      for (Eigen::Index c = 0; c < out.per_step.cols(); ++c) {
        if (!std::isfinite(out.per_step(r, c))) {
          throw NumericalError("non-finite prior log-density at sequence " + std::to_string(r / T) + ", t=" +
                               std::to_string(r % T) + ", layer " + std::to_string(c + 1));
        }
      }
    }
  }
  out.total = out.per_step.sum();
  return out;
}

FlowCoefficients ChildModel::flow_coefficients(int l, int i, const std::vector<Vec>& delayed, const Vec* parent) const {
  ad::Tape tape(false);
  std::vector<Var> d;
  for (const Vec& v : delayed) d.push_back(tape.constant(Mat(v.transpose())));
  Var p;
  if (parent != nullptr) p = tape.constant(Mat(parent->transpose()));
  const Var cond = flow_conditioning(tape, l, d, parent != nullptr ? &p : nullptr);
  const FlowNet& f = flows_.at(static_cast<std::size_t>(l - 1)).at(static_cast<std::size_t>(i));
  const Mat q = f.head(tape, f.trunk.hidden(tape, cond)).value();
  const int K = config_.flow_components;
  FlowCoefficients c;
  c.log_scale = q(0, 0);
  c.shift = q(0, 1);
  c.log_weight = q.block(0, 2, 1, K).transpose();
  c.log_slope = q.block(0, 2 + K, 1, K).transpose();
  c.offset = q.block(0, 2 + 2 * K, 1, K).transpose();
  return c;
}

Mat ChildModel::generate(int num_sequences, int seq_length, std::mt19937_64& rng, LatentStack* latents) const {
  if (num_sequences < 1 || seq_length < 1) throw ConfigError("generate: need at least one sequence and one step");
  const int L = config_.num_layers;
  const int tau = config_.lag;
  const Eigen::Index rows = static_cast<Eigen::Index>(num_sequences) * seq_length;
  std::vector<Mat> z;
  for (int l = 1; l <= L; ++l) z.emplace_back(rows, config_.layer_dim(l));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index s = 0; s < num_sequences; ++s) {
    for (int t = 0; t < seq_length; ++t) {
      const Eigen::Index r = s * seq_length + t;
      for (int l = L; l >= 1; --l) {
        Mat& zl = z[static_cast<std::size_t>(l - 1)];
        if (t < tau) {
          for (Eigen::Index i = 0; i < zl.cols(); ++i) zl(r, i) = normal(rng);
          continue;
        }
        std::vector<Vec> delayed;
        for (int k = 1; k <= tau; ++k) delayed.push_back(zl.row(r - k).transpose());
        Vec parent;
        if (l < L) parent = z[static_cast<std::size_t>(l)].row(r).transpose();
        for (Eigen::Index i = 0; i < zl.cols(); ++i) {
          const FlowCoefficients c = flow_coefficients(l, static_cast<int>(i), delayed, l < L ? &parent : nullptr);
          zl(r, i) = c.inverse(normal(rng));
        }
      }
    }
  }
  if (latents != nullptr) {
    latents->seq_length = seq_length;
    latents->mean = z;
    latents->sample = z;
    latents->logvar.clear();
  }
  return normalization.invert(decode(z[0]));
}

Vec ChildModel::conditional_mean(int l, const std::vector<Vec>& delayed, const Vec* parent) const {
  static const auto rule = [] {
    std::pair<std::vector<double>, std::vector<double>> r;
    gauss_hermite(kQuadratureOrder, r.first, r.second);
    return r;
  }();
  const int n = config_.layer_dim(l);
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const FlowCoefficients c = flow_coefficients(l, i, delayed, parent);
    double m = 0.0;
    for (std::size_t q = 0; q < rule.first.size(); ++q) m += rule.second[q] * c.inverse(rule.first[q]);
    out(i) = m;
  }
  return out;
}

void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(static_cast<std::size_t>(order));
  weights.resize(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    weights[static_cast<std::size_t>(k)] = v * v;
  }
}

}  // namespace child
