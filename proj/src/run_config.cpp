#include "child/run_config.hpp"

#include <fstream>
#include <set>

#include "child/common.hpp"

namespace child {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " section must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key in " + section + " section: '" + key + "'");
  }
}

std::uint64_t read_seed(const nlohmann::json& v, const std::string& what) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(what + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace

ModelConfig model_config_for(const ProcessSpec& spec) {
  ModelConfig m;
  m.num_layers = spec.num_layers;
  m.dims_per_layer = spec.dims_per_layer;
  m.obs_dim = spec.observation_dim();
  m.lag = spec.lag_order;
  return m;
}

std::uint64_t RunConfig::sample_seed() const { return derive_seed(seed, "sample"); }
std::uint64_t RunConfig::eval_seed() const { return derive_seed(seed, "eval"); }
int RunConfig::seq_length() const { return data.seq_length > 0 ? data.seq_length : default_seq_length(process); }

void RunConfig::derive_seeds() {
  process.seed = derive_seed(seed, "process");
  train.seed = derive_seed(seed, "train");
}

void RunConfig::validate() const {
  process.validate();
  model.validate();
  train.validate();
  if (data.num_sequences < 1) throw ConfigError("data.num_sequences must be >= 1");
  if (data.seq_length < 0) throw ConfigError("data.seq_length must be >= 0");
  if (seq_length() <= process.lag_order) {
    throw ConfigError("data.seq_length must exceed the lag order " + std::to_string(process.lag_order));
  }
  if (eval.generated_sequences < 0) throw ConfigError("eval.generated_sequences must be >= 0");
  const ModelConfig implied = model_config_for(process);
  if (model.num_layers != implied.num_layers || model.dims_per_layer != implied.dims_per_layer) {
    throw ConfigError("model layers/dims do not match the process section");
  }
  if (model.obs_dim != implied.obs_dim) throw ConfigError("model.obs_dim does not match the process observation size");
  if (model.lag != implied.lag) throw ConfigError("model.lag does not match process.lag_order");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"output_dir", output_dir},
          {"process", process.to_json()},
          {"data", {{"num_sequences", data.num_sequences}, {"seq_length", seq_length()}}},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"eval", {{"correlation", to_string(eval.correlation)}, {"generated_sequences", eval.generated_sequences}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"seed", "output_dir", "process", "data", "model", "train", "eval"}, "top-level");
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = read_seed(j["seed"], "seed");
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    c.derive_seeds();

    if (j.contains("process")) {
      nlohmann::json p = j["process"];
      if (p.is_object() && !p.contains("seed")) p["seed"] = c.process.seed;
      c.process = ProcessSpec::from_json(p);
    }

    if (j.contains("data")) {
      const nlohmann::json& d = j["data"];
      reject_unknown(d, {"num_sequences", "seq_length"}, "data");
      if (d.contains("num_sequences")) c.data.num_sequences = d["num_sequences"].get<int>();
      if (d.contains("seq_length")) c.data.seq_length = d["seq_length"].get<int>();
    }

    nlohmann::json m = model_config_for(c.process).to_json();
    if (j.contains("model")) {
      const nlohmann::json& given = j["model"];
      if (!given.is_object()) throw ConfigError("model section must be an object");
      for (const char* key : {"num_layers", "dims_per_layer", "obs_dim", "lag"}) {
        if (given.contains(key) && given[key] != m[key]) {
          throw ConfigError(std::string("model.") + key + " = " + given[key].dump() + " conflicts with the process (" +
                            m[key].dump() + ")");
        }
      }
      m.update(given);
    }
    c.model = ModelConfig::from_json(m);

    if (j.contains("train")) {
      nlohmann::json t = j["train"];
      if (t.is_object() && !t.contains("seed")) t["seed"] = c.train.seed;
      c.train = TrainConfig::from_json(t);
    }

    if (j.contains("eval")) {
      const nlohmann::json& e = j["eval"];
      reject_unknown(e, {"correlation", "generated_sequences"}, "eval");
      if (e.contains("correlation")) c.eval.correlation = correlation_from_string(e["correlation"].get<std::string>());
      if (e.contains("generated_sequences")) c.eval.generated_sequences = e["generated_sequences"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::preset(const std::string& name, std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.process = preset_spec(name);
  c.model = model_config_for(c.process);
  c.derive_seeds();
  c.validate();
  return c;
}

}  // namespace child
