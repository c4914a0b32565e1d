#include "child/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "child/archive.hpp"
#include "child/eval.hpp"

namespace child {

namespace {

using ad::Var;

constexpr const char* kParamPrefix = "param/";
constexpr const char* kBestPrefix = "best/";
constexpr const char* kFirstMomentPrefix = "adam.m/";
constexpr const char* kSecondMomentPrefix = "adam.v/";

NamedArray to_array(const std::string& name, const Mat& m) {
  return {name,
          {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
          std::vector<double>(m.data(), m.data() + m.size())};
}

Mat from_array(const NamedArray& a) {
  if (a.shape.size() != 2) throw IntegrityError("checkpoint array '" + a.name + "' is not two-dimensional");
  Mat m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::map<std::string, Mat> snapshot(const ChildModel& model) {
  std::map<std::string, Mat> out;
  for (const ad::Parameter* p : model.parameters().all()) out[p->name] = p->value;
  return out;
}

void assign_parameters(ChildModel& model, const std::map<std::string, Mat>& values) {
  for (ad::Parameter* p : model.parameters().all()) p->value = values.at(p->name);
}

double warmup_beta(const TrainConfig& c, std::int64_t step, std::int64_t total_steps) {
  if (c.warmup_fraction <= 0.0) return c.beta;
  const double ramp = std::max(1.0, c.warmup_fraction * static_cast<double>(total_steps));
  return c.beta * std::min(1.0, static_cast<double>(step + 1) / ramp);
}

Mat gather_sequences(const Mat& rows, const std::vector<int>& order, std::size_t first, std::size_t count, int T) {
  Mat out(static_cast<Eigen::Index>(count) * T, rows.cols());
  for (std::size_t s = 0; s < count; ++s) {
    out.middleRows(static_cast<Eigen::Index>(s) * T, T) =
        rows.middleRows(static_cast<Eigen::Index>(order[first + s]) * T, T);
  }
  return out;
}

int validation_count(int n, int requested) {
  if (n < 2) throw DataError("training needs at least 2 sequences (train + validation)");
  return std::max(1, std::min(requested, n / 5));
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoKl: return "no-kl";
    case Variant::NoContext: return "no-context";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no-kl" || s == "no_kl") return Variant::NoKl;
  if (s == "no-context" || s == "no_context") return Variant::NoContext;
  throw ConfigError("unknown variant '" + s + "' (expected full, no-kl or no-context)");
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("train.beta must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("train.warmup_fraction must be in [0, 1]");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0 (0 disables clipping)");
  if (!(recon_sigma > 0.0)) throw ConfigError("train.recon_sigma must be > 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (validation_size < 1) throw ConfigError("train.validation_size must be >= 1");
  if (select_by != "val_loss" && select_by != "val_mcc") {
    throw ConfigError("train.select_by must be val_loss or val_mcc");
  }
  if (!(divergence_threshold > 0.0)) throw ConfigError("train.divergence_threshold must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"beta", beta},
          {"warmup_fraction", warmup_fraction},
          {"grad_clip", grad_clip},
          {"recon_sigma", recon_sigma},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"variant", to_string(variant)},
          {"validation_size", validation_size},
          {"select_by", select_by},
          {"divergence_threshold", divergence_threshold}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train section must be an object");
  static const std::set<std::string> known{"learning_rate", "batch_size",       "epochs",          "beta",
                                           "warmup_fraction", "grad_clip",      "recon_sigma",     "seed",
                                           "checkpoint_every", "variant",       "validation_size", "select_by",
                                           "divergence_threshold"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key in train section: '" + key + "'");
  }
  TrainConfig c;
  try {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("warmup_fraction")) c.warmup_fraction = j["warmup_fraction"].get<double>();
    if (j.contains("grad_clip")) c.grad_clip = j["grad_clip"].get<double>();
    if (j.contains("recon_sigma")) c.recon_sigma = j["recon_sigma"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<int>();
    if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
    if (j.contains("validation_size")) c.validation_size = j["validation_size"].get<int>();
    if (j.contains("select_by")) c.select_by = j["select_by"].get<std::string>();
    if (j.contains("divergence_threshold")) c.divergence_threshold = j["divergence_threshold"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train section: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Objective

std::vector<Mat> draw_posterior_noise(const ModelConfig& config, Eigen::Index rows, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Mat> out;
  for (int l = 1; l <= config.num_layers; ++l) {
    Mat e(rows, config.layer_dim(l));
    for (Eigen::Index k = 0; k < e.size(); ++k) e.data()[k] = normal(rng);
    out.push_back(std::move(e));
  }
  return out;
}

double reconstruction_weight(const ModelConfig& model, const TrainConfig& train) {
  return static_cast<double>(model.obs_dim) / (2.0 * train.recon_sigma * train.recon_sigma);
}

ElboGraph build_elbo(ad::Tape& tape, const ChildModel& model, const Mat& x_normalized, int seq_length,
                     const std::vector<Mat>& noise, double recon_weight, double kl_weight) {
  const ModelConfig& cfg = model.config();
  if (x_normalized.cols() != cfg.obs_dim) {
    throw std::invalid_argument("elbo: batch has " + std::to_string(x_normalized.cols()) + " features, model expects " +
                                std::to_string(cfg.obs_dim));
  }
  if (static_cast<int>(noise.size()) != cfg.num_layers) throw std::invalid_argument("elbo: one noise block per layer");
  const Var x = tape.constant(x_normalized);
  const EncoderVars ev = model.encode(tape, x, seq_length);
  std::vector<Var> samples;
  Var log_q = tape.constant(Mat::Zero(1, 1));
  double log_q_const = 0.0;
  for (int l = 1; l <= cfg.num_layers; ++l) {
    const auto i = static_cast<std::size_t>(l - 1);
    const Var std_dev = ad::exp(ad::scale(ev.logvar[i], 0.5));
    samples.push_back(ad::add(ev.mean[i], ad::mul(std_dev, tape.constant(noise[i]))));
    log_q = ad::add(log_q, ad::scale(ad::sum(ev.logvar[i]), -0.5));
    log_q_const += -0.5 * noise[i].squaredNorm() - 0.5 * kLog2Pi * static_cast<double>(noise[i].size());
  }
  log_q = ad::add_scalar(log_q, log_q_const);
  const Var log_p = model.prior_log_prob(tape, samples, seq_length);
  const Var x_hat = model.decode(tape, samples[0]);
  ElboGraph g;
  g.recon = ad::mean(ad::square(ad::sub(x_hat, x)));
  g.kl = ad::scale(ad::sub(log_q, log_p), 1.0 / static_cast<double>(x_normalized.rows()));
  g.loss = ad::scale(g.recon, recon_weight);
  if (kl_weight != 0.0) g.loss = ad::add(g.loss, ad::scale(g.kl, kl_weight));
  return g;
}

ElboTerms elbo_terms(const ChildModel& model, const Mat& observations, int seq_length, const std::vector<Mat>& noise,
                     const TrainConfig& config, double kl_weight) {
  ad::Tape tape(false);
  const double w = config.variant == Variant::NoKl ? 0.0 : kl_weight;
  const ElboGraph g = build_elbo(tape, model, model.normalization.apply(observations), seq_length, noise,
                                 reconstruction_weight(model.config(), config), w);
  ElboTerms t{g.recon.value()(0, 0), g.kl.value()(0, 0), g.loss.value()(0, 0)};
  if (!std::isfinite(t.recon) || !std::isfinite(t.kl)) {
    throw NumericalError("non-finite ELBO term (recon=" + std::to_string(t.recon) + ", kl=" + std::to_string(t.kl) + ")");
  }
  return t;
}

ElboTerms elbo_terms(const ChildModel& model, const GroundTruthSeries& batch, const TrainConfig& config,
                     std::mt19937_64& rng) {
  const Mat x = batch.observation_rows(0, batch.num_sequences());
  return elbo_terms(model, x, batch.seq_length(), draw_posterior_noise(model.config(), x.rows(), rng), config);
}

// ---------------------------------------------------------------------------
// Metrics

nlohmann::json EpochMetrics::to_json() const {
  return {{"epoch", epoch},
          {"step", step},
          {"recon", recon},
          {"kl", kl},
          {"elbo", elbo},
          {"val_loss", val_loss},
          {"val_mcc", val_mcc ? nlohmann::json(*val_mcc) : nlohmann::json()},
          {"beta", beta},
          {"wall_time_s", wall_time_s}};
}

EpochMetrics EpochMetrics::from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.step = j.at("step").get<std::int64_t>();
  m.recon = j.at("recon").get<double>();
  m.kl = j.at("kl").get<double>();
  m.elbo = j.at("elbo").get<double>();
  m.val_loss = j.at("val_loss").get<double>();
  if (!j.at("val_mcc").is_null()) m.val_mcc = j.at("val_mcc").get<double>();
  m.beta = j.at("beta").get<double>();
  m.wall_time_s = j.at("wall_time_s").get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  if (!state.model) throw std::logic_error("save_checkpoint: state has no model");
  const ChildModel& model = *state.model;
  Archive archive;
  const nn::Adam& opt = state.optimizer;
  for (const ad::Parameter* p : model.parameters().all()) {
    archive.arrays.push_back(to_array(kParamPrefix + p->name, p->value));
    if (opt.first_moments().count(p->name)) {
      archive.arrays.push_back(to_array(kFirstMomentPrefix + p->name, opt.first_moments().at(p->name)));
      archive.arrays.push_back(to_array(kSecondMomentPrefix + p->name, opt.second_moments().at(p->name)));
    }
  }
  for (const auto& [name, value] : state.best_parameters) archive.arrays.push_back(to_array(kBestPrefix + name, value));
  archive.arrays.push_back(to_array("norm/center", model.normalization.center));
  archive.arrays.push_back(to_array("norm/scale", model.normalization.scale));
  nlohmann::json history = nlohmann::json::array();
  for (const auto& m : state.history) history.push_back(m.to_json());
  archive.metadata = {{"format_version", kCheckpointFormatVersion},
                      {"model_config", model.config().to_json()},
                      {"train_config", state.config.to_json()},
                      {"step", state.step},
                      {"optimizer_steps", opt.steps()},
                      {"epochs_done", state.epochs_done},
                      {"best_score", state.best_score ? nlohmann::json(*state.best_score) : nlohmann::json()},
                      {"best_epoch", state.best_epoch},
                      {"history", history},
                      {"dataset_fingerprint", state.dataset_fingerprint},
                      {"payload_sha256", payload_sha256(archive.arrays)}};
  write_archive(path, archive);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const Archive archive = read_archive(path);
  const auto& meta = archive.metadata;
  TrainState state;
  try {
    if (!meta.contains("format_version") || meta.at("format_version") != kCheckpointFormatVersion) {
      throw CheckpointMismatch("checkpoint version mismatch in " + path.string() + ": expected " +
                               kCheckpointFormatVersion);
    }
    if (payload_sha256(archive.arrays) != meta.at("payload_sha256").get<std::string>()) {
      throw IntegrityError("checkpoint payload hash mismatch: " + path.string());
    }
    const ModelConfig mc = ModelConfig::from_json(meta.at("model_config"));
    state.config = TrainConfig::from_json(meta.at("train_config"));
    state.model = std::make_unique<ChildModel>(mc, 0);
    state.step = meta.at("step").get<std::int64_t>();
    state.epochs_done = meta.at("epochs_done").get<int>();
    if (!meta.at("best_score").is_null()) state.best_score = meta.at("best_score").get<double>();
    state.best_epoch = meta.at("best_epoch").get<int>();
    for (const auto& m : meta.at("history")) state.history.push_back(EpochMetrics::from_json(m));
    state.dataset_fingerprint = meta.at("dataset_fingerprint").get<std::string>();

    std::set<std::string> expected;
    for (ad::Parameter* p : state.model->parameters().all()) {
      expected.insert(p->name);
      const std::string key = kParamPrefix + p->name;
      if (!archive.has_array(key)) throw CheckpointMismatch("checkpoint lacks parameter '" + p->name + "'");
      Mat v = from_array(archive.array(key));
      if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
        throw CheckpointMismatch("parameter '" + p->name + "' has shape " + std::to_string(v.rows()) + "x" +
                                 std::to_string(v.cols()) + ", model expects " + std::to_string(p->value.rows()) +
                                 "x" + std::to_string(p->value.cols()));
      }
      p->value = std::move(v);
    }
    state.optimizer = nn::Adam(state.model->parameters(), nn::AdamOptions{state.config.learning_rate});
    for (const auto& a : archive.arrays) {
      if (starts_with(a.name, kParamPrefix) && !expected.count(a.name.substr(std::string(kParamPrefix).size()))) {
        throw CheckpointMismatch("checkpoint has unexpected parameter '" + a.name + "'");
      } else if (starts_with(a.name, kFirstMomentPrefix)) {
        state.optimizer.first_moments()[a.name.substr(std::string(kFirstMomentPrefix).size())] = from_array(a);
      } else if (starts_with(a.name, kSecondMomentPrefix)) {
        state.optimizer.second_moments()[a.name.substr(std::string(kSecondMomentPrefix).size())] = from_array(a);
      } else if (starts_with(a.name, kBestPrefix)) {
        state.best_parameters[a.name.substr(std::string(kBestPrefix).size())] = from_array(a);
      }
    }
    state.optimizer.set_steps(meta.at("optimizer_steps").get<std::int64_t>());
    state.model->normalization.center = from_array(archive.array("norm/center"));
    state.model->normalization.scale = from_array(archive.array("norm/scale"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint metadata is malformed: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CheckpointMismatch("checkpoint configuration is invalid: " + std::string(e.what()));
  }
  return state;
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  TrainState state = load_checkpoint(path);
  if (state.model->config().to_json() != expected.to_json()) {
    throw CheckpointMismatch("checkpoint model configuration " + state.model->config().to_json().dump() +
                             " does not match requested " + expected.to_json().dump());
  }
  return state;
}

void restore_best(TrainState& state) {
  if (!state.best_parameters.empty()) assign_parameters(*state.model, state.best_parameters);
}

// ---------------------------------------------------------------------------
// Training driver

ModelConfig resolve_model_config(const ModelConfig& base, const GroundTruthSeries& data, const TrainConfig& train) {
  ModelConfig mc = base;
  if (train.variant == Variant::NoContext) mc.use_context = false;
  const ProcessSpec& spec = data.spec();
  if (mc.obs_dim != data.obs_dim()) {
    throw ConfigError("model.obs_dim " + std::to_string(mc.obs_dim) + " does not match dataset observation dim " +
                      std::to_string(data.obs_dim()));
  }
  if (mc.num_layers != spec.num_layers || mc.dims_per_layer != spec.dims_per_layer) {
    throw ConfigError("model layer dimensions do not match the dataset's latent layers");
  }
  if (data.seq_length() <= mc.lag) throw ConfigError("dataset seq_length must exceed model.lag");
  mc.validate();
  return mc;
}

double posterior_mcc(const ChildModel& model, const GroundTruthSeries& data) {
  const LatentStack latents = model.encode_context(data.observation_rows(0, data.num_sequences()), data.seq_length());
  return compute_mcc_per_layer(data, latents).mcc_overall;
}

TrainResult train(const GroundTruthSeries& data, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (data.num_sequences() == 0) throw DataError("dataset is empty");
  const ModelConfig mc = resolve_model_config(model_config, data, config);
  const int T = data.seq_length();
  const int n_val = validation_count(data.num_sequences(), config.validation_size);
  const int n_train = data.num_sequences() - n_val;
  const GroundTruthSeries val = data.slice(n_train, n_val);
  const Mat train_rows = data.observation_rows(0, n_train);

  TrainResult result;
  TrainState& state = result.state;
  if (options.resume_from) {
    state = load_checkpoint(*options.resume_from, mc);
    if (state.config.to_json() != config.to_json()) {
      throw ConfigError("resume: training configuration differs from the checkpoint's");
    }
    if (state.dataset_fingerprint != data.fingerprint()) {
      throw DataError("resume: checkpoint was trained on a different dataset");
    }
  } else {
    state.model = std::make_unique<ChildModel>(mc, derive_seed(config.seed, "init"));
    state.model->normalization = Normalization::fit(train_rows);
    state.optimizer = nn::Adam(state.model->parameters(), nn::AdamOptions{config.learning_rate});
    state.config = config;
    state.dataset_fingerprint = data.fingerprint();
  }
  ChildModel& model = *state.model;
  const Mat train_x = model.normalization.apply(train_rows);
  const Mat val_x = val.observation_rows(0, n_val);
  const double recon_w = reconstruction_weight(mc, config);
  const auto batches_per_epoch = static_cast<std::int64_t>((n_train + config.batch_size - 1) / config.batch_size);
  const std::int64_t total_steps = batches_per_epoch * config.epochs;
  const bool use_kl = config.variant != Variant::NoKl;

  std::ofstream metrics_out;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    metrics_out.open(*options.output_dir / "metrics.jsonl", std::ios::trunc);
    for (const auto& m : state.history) metrics_out << m.to_json().dump() << '\n';
  }
  const auto started = std::chrono::steady_clock::now();
  const double prior_wall = state.history.empty() ? 0.0 : state.history.back().wall_time_s;
  const int last_epoch = options.stop_after_epoch ? std::min(config.epochs, *options.stop_after_epoch) : config.epochs;

  for (int epoch = state.epochs_done; epoch < last_epoch; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(derive_seed(config.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t noise_root = derive_seed(derive_seed(config.seed, "posterior-noise"), static_cast<std::uint64_t>(epoch));

    double recon_sum = 0.0, kl_sum = 0.0, weight_sum = 0.0, beta_now = 0.0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t first = static_cast<std::size_t>(b) * static_cast<std::size_t>(config.batch_size);
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - first);
      const Mat xb = gather_sequences(train_x, order, first, count, T);
      std::mt19937_64 noise_rng(derive_seed(noise_root, static_cast<std::uint64_t>(b)));
      const std::vector<Mat> noise = draw_posterior_noise(mc, xb.rows(), noise_rng);
      beta_now = use_kl ? warmup_beta(config, state.step, total_steps) : 0.0;

      ad::Tape tape;
      const ElboGraph g = build_elbo(tape, model, xb, T, noise, recon_w, beta_now);
      const double loss = g.loss.value()(0, 0);
      const double recon = g.recon.value()(0, 0);
      const double kl = g.kl.value()(0, 0);
      if (!std::isfinite(loss) || !std::isfinite(kl) || std::abs(loss) > config.divergence_threshold) {
        result.diverged = true;
        result.divergence_message = "training diverged at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(state.step) + " (loss=" + std::to_string(loss) +
                                    ", kl=" + std::to_string(kl) + ")";
        break;
      }
      model.parameters().zero_grad();
      tape.backward(g.loss);
      const double gnorm = model.parameters().grad_norm();
      if (!std::isfinite(gnorm)) {
        result.diverged = true;
        result.divergence_message = "non-finite gradient at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(state.step);
        break;
      }
      if (config.grad_clip > 0.0 && gnorm > config.grad_clip) model.parameters().scale_grad(config.grad_clip / gnorm);
      state.optimizer.step(model.parameters(), config.learning_rate);
      ++state.step;
      const auto w = static_cast<double>(count);
      recon_sum += recon * w;
      kl_sum += kl * w;
      weight_sum += w;
    }
    if (result.diverged) break;

    EpochMetrics m;
    m.epoch = epoch;
    m.step = state.step;
    m.recon = recon_sum / weight_sum;
    m.kl = kl_sum / weight_sum;
    m.elbo = -(recon_w * m.recon + m.kl);
    m.beta = beta_now;
    std::mt19937_64 val_rng(derive_seed(config.seed, "validation-noise"));
    const ElboTerms vt = elbo_terms(model, val_x, T, draw_posterior_noise(mc, val_x.rows(), val_rng), config, 1.0);
    m.val_loss = recon_w * vt.recon + (use_kl ? vt.kl : 0.0);
    m.val_mcc = posterior_mcc(model, val);
    m.wall_time_s =
        prior_wall + std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state.history.push_back(m);
    state.epochs_done = epoch + 1;

    const double score = config.select_by == "val_mcc" ? -*m.val_mcc : m.val_loss;
    if (!state.best_score || score < *state.best_score) {
      state.best_score = score;
      state.best_epoch = epoch;
      state.best_parameters = snapshot(model);
      if (options.output_dir) {
        TrainState best;
        best.model = std::make_unique<ChildModel>(mc, 0);
        assign_parameters(*best.model, state.best_parameters);
        best.model->normalization = model.normalization;
        best.config = state.config;
        best.step = state.step;
        best.epochs_done = state.epochs_done;
        best.best_score = state.best_score;
        best.best_epoch = state.best_epoch;
        best.history = state.history;
        best.dataset_fingerprint = state.dataset_fingerprint;
        best.optimizer = nn::Adam(best.model->parameters(), nn::AdamOptions{config.learning_rate});
        save_checkpoint(*options.output_dir / "best.ckpt", best);
      }
    }
    if (metrics_out.is_open()) metrics_out << m.to_json().dump() << '\n' << std::flush;
    if (options.output_dir && config.checkpoint_every > 0 && state.epochs_done % config.checkpoint_every == 0) {
      save_checkpoint(*options.output_dir / "last.ckpt", state);
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  if (options.output_dir) save_checkpoint(*options.output_dir / "last.ckpt", state);
  restore_best(state);
  return result;
}

}  // namespace child
