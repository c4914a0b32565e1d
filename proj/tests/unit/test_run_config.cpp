#include <doctest.h>

#include <fstream>

#include "child/run_config.hpp"
#include "support.hpp"

using namespace child;

TEST_SUITE("run_config") {
  TEST_CASE("presets derive section seeds and model shape from the process") {
    const RunConfig a = RunConfig::preset("A", 3);
    CHECK(a.process.seed == derive_seed(3, "process"));
    CHECK(a.train.seed == derive_seed(3, "train"));
    CHECK(a.model.dims_per_layer == a.process.dims_per_layer);
    CHECK(a.model.obs_dim == a.process.observation_dim());
    CHECK(a.seq_length() == 10);
    CHECK(RunConfig::preset("B", 3).seq_length() == 6);
    CHECK(a.sample_seed() != a.eval_seed());
    CHECK(RunConfig::preset("A", 4).process.seed != a.process.seed);
    CHECK_THROWS_AS(RunConfig::preset("Z", 0), ConfigError);
  }

  TEST_CASE("JSON round trip") {
    RunConfig c = RunConfig::preset("D", 11);
    c.data.num_sequences = 123;
    c.eval.correlation = Correlation::Spearman;
    c.train.epochs = 5;
    const RunConfig r = RunConfig::from_json(c.to_json());
    CHECK(r.to_json() == c.to_json());
  }

  TEST_CASE("partial files are completed from the root seed") {
    const nlohmann::json j = {{"seed", 5}, {"process", preset_spec("A").to_json()}, {"data", {{"num_sequences", 50}}}};
    nlohmann::json p = j;
    p["process"].erase("seed");
    const RunConfig c = RunConfig::from_json(p);
    CHECK(c.process.seed == derive_seed(5, "process"));
    CHECK(c.train.seed == derive_seed(5, "train"));
    CHECK(c.data.num_sequences == 50);
    CHECK(c.model.dims_per_layer == std::vector<int>{1, 4});
  }

  TEST_CASE("unknown keys and conflicts are rejected") {
    nlohmann::json j = RunConfig::preset("A", 0).to_json();
    j["colour"] = "blue";
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
    j = RunConfig::preset("A", 0).to_json();
    j["data"]["shuffle"] = true;
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
    j = RunConfig::preset("A", 0).to_json();
    j["model"]["obs_dim"] = 7;
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
    j = RunConfig::preset("A", 0).to_json();
    j["data"]["seq_length"] = 1;
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
    j = RunConfig::preset("A", 0).to_json();
    j["eval"]["correlation"] = "kendall";
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }

  TEST_CASE("loading from disk") {
    const auto dir = child::testing::scratch_dir("run_config");
    CHECK_THROWS_AS(RunConfig::load(dir / "missing.json"), DataError);
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ConfigError);
    std::ofstream(dir / "good.json") << RunConfig::preset("B", 2).to_json().dump();
    CHECK(RunConfig::load(dir / "good.json").to_json() == RunConfig::preset("B", 2).to_json());
  }
}
