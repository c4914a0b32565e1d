// Command-line front end: generate, train, evaluate, interpolate, spectral.
//
// Exit codes: 0 success, 1 usage, 2 configuration error, 3 data error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "child/dataset_io.hpp"
#include "child/eval.hpp"
#include "child/interpolate.hpp"
#include "child/run_config.hpp"
#include "child/spectral.hpp"
#include "child/training.hpp"

namespace fs = std::filesystem;
using namespace child;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct CommonArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Overrides {
  std::optional<int> num_sequences;
  std::optional<int> seq_length;
  std::optional<int> epochs;
  std::string variant;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::exists(path)) throw DataError(std::string(what) + " file not found: " + path);
}

RunConfig resolve(const CommonArgs& a, const Overrides& o) {
  if (!a.config.empty() && !a.preset.empty()) throw ConfigError("--config and --preset are mutually exclusive");
  RunConfig c;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    c = RunConfig::load(a.config);
  } else {
    c = RunConfig::preset(a.preset.empty() ? "A" : a.preset, 0);
  }
  if (a.seed) {
    c.seed = *a.seed;
    c.derive_seeds();
  }
  if (!a.out.empty()) c.output_dir = a.out;
  if (o.num_sequences) c.data.num_sequences = *o.num_sequences;
  if (o.seq_length) c.data.seq_length = *o.seq_length;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (!o.variant.empty()) c.train.variant = variant_from_string(o.variant);
  c.validate();
  return c;
}

GroundTruthSeries load_dataset(const std::string& path) {
  require_file(path, "data");
  return import_dataset(path);
}

void print_report(const EvalReport& r) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "correlation   " << to_string(r.correlation) << '\n';
  std::cout << "mcc (pooled)  " << r.mcc_overall << '\n';
  for (std::size_t l = 0; l < r.mcc_per_layer.size(); ++l) {
    std::cout << "mcc layer " << l + 1 << "   " << r.mcc_per_layer[l] << '\n';
  }
  std::cout << "cross-layer   " << (r.cross_layer_leakage ? "yes" : "no") << '\n';
  if (r.correlational_score) std::cout << "corr. score   " << *r.correlational_score << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_generate(const CommonArgs& a, const Overrides& o) {
  const RunConfig c = resolve(a, o);
  const fs::path dir = c.output_dir;
  const HierarchicalProcess process = build_process(c.process);
  const GroundTruthSeries series = sample_series(process, c.data.num_sequences, c.seq_length(), c.sample_seed());
  fs::create_directories(dir);
  export_dataset(series, dir / "dataset.bin");
  write_json(dir / "config.json", c.to_json());
  std::cout << "wrote " << (dir / "dataset.bin").string() << ": " << series.num_sequences() << " sequences x "
            << series.seq_length() << " steps x " << series.obs_dim() << " features\n"
            << "fingerprint " << series.fingerprint() << '\n';
  return kOk;
}

int cmd_train(const CommonArgs& a, const Overrides& o, const std::string& data_path, const std::string& resume) {
  const RunConfig c = resolve(a, o);
  const GroundTruthSeries data = load_dataset(data_path);
  const std::string expected = process_fingerprint(c.process, c.sample_seed());
  if (data.fingerprint() != expected) {
    throw DataError("dataset " + data_path + " does not match the config (fingerprint " + data.fingerprint() +
                    ", config expects " + expected + ")");
  }
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_json(dir / "config.json", c.to_json());
  TrainOptions opts;
  opts.output_dir = dir;
  if (!resume.empty()) {
    require_file(resume, "resume");
    opts.resume_from = fs::path(resume);
  }
  opts.on_epoch = [](const EpochMetrics& m) {
    std::cout << "epoch " << std::setw(3) << m.epoch << "  recon " << std::scientific << std::setprecision(3) << m.recon
              << "  kl " << std::fixed << std::setprecision(4) << m.kl << "  val_loss " << m.val_loss;
    if (m.val_mcc) std::cout << "  val_mcc " << *m.val_mcc;
    std::cout << '\n' << std::flush;
  };
  const TrainResult r = train(data, c.model, c.train, opts);
  if (r.diverged) throw NumericalError(r.divergence_message + "; best checkpoint kept in " + dir.string());
  std::cout << "best epoch " << r.state.best_epoch << "; checkpoints in " << dir.string() << '\n';
  return kOk;
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoint, const std::string& data_path,
                 const std::string& correlation) {
  require_file(checkpoint, "checkpoint");
  const GroundTruthSeries data = load_dataset(data_path);
  TrainState state = load_checkpoint(checkpoint);
  EvalOptions eo;
  std::uint64_t seed = a.seed.value_or(0);
  if (!a.config.empty()) {
    require_file(a.config, "config");
    const RunConfig c = RunConfig::load(a.config);
    eo = c.eval;
    if (!a.seed) seed = c.seed;
  }
  if (!correlation.empty()) eo.correlation = correlation_from_string(correlation);
  const ChildModel& model = *state.model;
  if (model.config().obs_dim != data.obs_dim() || model.config().num_layers != data.num_layers()) {
    throw CheckpointMismatch("checkpoint shapes do not match the dataset");
  }
  for (int l = 1; l <= data.num_layers(); ++l) {
    if (model.config().layer_dim(l) != data.layer_dim(l)) throw CheckpointMismatch("layer dims differ from the dataset");
  }
  if (model.config().lag >= data.seq_length()) throw CheckpointMismatch("dataset sequences shorter than the model lag");
  const Mat obs = data.observation_rows(0, data.num_sequences());
  const LatentStack latents = model.encode_context(obs, data.seq_length());
  EvalReport report = compute_mcc_per_layer(data, latents, eo.correlation);
  if (eo.generated_sequences > 0) {
    std::mt19937_64 rng(derive_seed(seed, "eval"));
    const Mat generated = model.generate(eo.generated_sequences, data.seq_length(), rng);
    const int n_real = std::min(data.num_sequences(), eo.generated_sequences);
    report.correlational_score = correlational_score(data.observation_rows(0, n_real), generated);
  }
  print_report(report);
  const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_json(dir / "eval.json", report.to_json());
  write_json(dir / "eval_config.json", {{"checkpoint", checkpoint},
                                        {"data", data_path},
                                        {"seed", seed},
                                        {"eval", {{"correlation", to_string(eo.correlation)},
                                                  {"generated_sequences", eo.generated_sequences}}}});
  return kOk;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--grid: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("--grid must list at least one value");
  return out;
}

int cmd_interpolate(const CommonArgs& a, const std::string& checkpoint, const std::string& data_path, int sequence,
                    int layer, int component, const std::string& grid, std::optional<int> timestep) {
  require_file(checkpoint, "checkpoint");
  const GroundTruthSeries data = load_dataset(data_path);
  if (sequence < 0 || sequence >= data.num_sequences()) {
    throw ConfigError("--sequence " + std::to_string(sequence) + " outside the dataset");
  }
  const TrainState state = load_checkpoint(checkpoint);
  InterpolationRequest req;
  req.layer = layer;
  req.component = component;
  req.grid = parse_grid(grid);
  req.timestep = timestep;
  const InterpolationResult r = interpolate_latent(*state.model, data.observations(sequence), req);
  const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_text(dir / "interpolation.csv", r.to_csv());
  write_json(dir / "interpolation_summary.json", r.summary_json());
  nlohmann::json args{{"checkpoint", checkpoint}, {"data", data_path}, {"sequence", sequence}, {"layer", layer},
                      {"component", component},   {"grid", req.grid}};
  args["timestep"] = timestep ? nlohmann::json(*timestep) : nlohmann::json();
  write_json(dir / "interpolation_config.json", args);
  std::cout << r.series.size() << " series written to " << (dir / "interpolation.csv").string() << "; "
            << r.moved_features << " of " << r.signal_rms.size() << " features moved\n";
  return kOk;
}

std::vector<int> parse_windows(const std::optional<int>& window, const std::string& range) {
  if (window) {
    if (!range.empty()) throw ConfigError("--window and --windows are mutually exclusive");
    return {*window};
  }
  int lo = 1, hi = 3;
  if (!range.empty()) {
    const auto colon = range.find(':');
    try {
      if (colon == std::string::npos) {
        lo = hi = std::stoi(range);
      } else {
        lo = std::stoi(range.substr(0, colon));
        hi = std::stoi(range.substr(colon + 1));
      }
    } catch (const std::exception&) {
      throw ConfigError("--windows expects LO:HI, got '" + range + "'");
    }
  }
  if (lo < 1 || hi < lo) throw ConfigError("--windows needs 1 <= LO <= HI");
  std::vector<int> out;
  for (int w = lo; w <= hi; ++w) out.push_back(w);
  return out;
}

int cmd_spectral(const CommonArgs& a, const std::string& instance, std::optional<int> window,
                 const std::string& windows) {
  spectral::DiscreteHierChain chain;
  std::string source;
  if (!instance.empty()) {
    if (!a.preset.empty()) throw ConfigError("--instance and --preset are mutually exclusive");
    require_file(instance, "instance");
    std::ifstream in(instance);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("instance " + instance + " is not valid JSON: " + e.what());
    }
    chain = spectral::DiscreteHierChain::from_json(j);
    source = instance;
  } else {
    source = a.preset.empty() ? "two-layer-min-window" : a.preset;
    chain = spectral::preset_chain(source);
  }
  const std::vector<int> ws = parse_windows(window, windows);
  const spectral::Sweep sweep = spectral::minimal_window_sweep(chain, ws);
  std::cout << " W  rank  required  rank_ok  max_error\n";
  for (const auto& row : sweep.rows) {
    std::cout << std::setw(2) << row.half_window << "  " << std::setw(4) << row.numerical_rank << "  " << std::setw(8)
              << row.required_rank << "  " << std::setw(7) << (row.rank_ok ? "yes" : "no") << "  ";
    if (row.max_error) {
      std::cout << std::scientific << std::setprecision(2) << *row.max_error << std::defaultfloat;
    } else {
      std::cout << "-";
    }
    std::cout << '\n';
  }
  if (sweep.transition) std::cout << "minimal window: W = " << *sweep.transition << '\n';
  const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_text(dir / "sweep.csv", sweep.to_csv());
  write_json(dir / "sweep.json", sweep.to_json());
  write_json(dir / "spectral_config.json", {{"source", source}, {"windows", ws}, {"chain", chain.to_json()}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical latent dynamics toolkit"};
  app.require_subcommand(1);
  CommonArgs common;
  Overrides over;
  std::string data_path, checkpoint, resume, grid = "-2,-1,0,1,2", instance, windows, correlation;
  int layer = 1, component = 0, sequence = 0;
  std::optional<int> window, timestep;
  std::optional<std::uint64_t> seed_opt;

  auto add_common = [&](CLI::App* sub, bool with_preset) {
    sub->add_option("--config", common.config, "Run config JSON");
    if (with_preset) sub->add_option("--preset", common.preset, "Dataset preset (A-G) or spectral instance name");
    sub->add_option("--seed", seed_opt, "Root seed");
    sub->add_option("--out", common.out, "Output directory");
  };

  CLI::App* gen = app.add_subcommand("generate", "Sample a dataset from a hierarchical process");
  add_common(gen, true);
  gen->add_option("--num-sequences", over.num_sequences, "Number of sequences");
  gen->add_option("--seq-length", over.seq_length, "Sequence length");

  CLI::App* tr = app.add_subcommand("train", "Train the model on a dataset");
  add_common(tr, true);
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--variant", over.variant, "full, no-kl or no-context");
  tr->add_option("--epochs", over.epochs, "Epoch budget");
  tr->add_option("--num-sequences", over.num_sequences, "Must match the dataset's config");
  tr->add_option("--seq-length", over.seq_length, "Must match the dataset's config");
  tr->add_option("--resume", resume, "Checkpoint to continue from");

  CLI::App* ev = app.add_subcommand("evaluate", "MCC and correlational score of a checkpoint");
  add_common(ev, false);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data_path, "Dataset file with ground-truth latents")->required();
  ev->add_option("--correlation", correlation, "pearson or spearman");

  CLI::App* ip = app.add_subcommand("interpolate", "Sweep one latent component and decode");
  add_common(ip, false);
  ip->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ip->add_option("--data", data_path, "Dataset providing the base window")->required();
  ip->add_option("--sequence", sequence, "Index of the base sequence");
  ip->add_option("--layer", layer, "Layer to edit (1 = bottom)");
  ip->add_option("--component", component, "Component within the layer");
  ip->add_option("--grid", grid, "Comma-separated values");
  ip->add_option("--timestep", timestep, "Edit a single timestep");

  CLI::App* sp = app.add_subcommand("spectral", "Operator recovery on a discrete hierarchical chain");
  add_common(sp, true);
  sp->add_option("--instance", instance, "Chain JSON file");
  sp->add_option("--window", window, "Single half-width W");
  sp->add_option("--windows", windows, "Range LO:HI of half-widths (default 1:3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  common.seed = seed_opt;

  try {
    if (gen->parsed()) return cmd_generate(common, over);
    if (tr->parsed()) return cmd_train(common, over, data_path, resume);
    if (ev->parsed()) return cmd_evaluate(common, checkpoint, data_path, correlation);
    if (ip->parsed()) return cmd_interpolate(common, checkpoint, data_path, sequence, layer, component, grid, timestep);
    if (sp->parsed()) return cmd_spectral(common, instance, window, windows);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
