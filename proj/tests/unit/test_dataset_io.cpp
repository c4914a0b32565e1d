#include <doctest.h>

#include <fstream>

#include "child/archive.hpp"
#include "child/dataset_io.hpp"
#include "child/eval.hpp"
#include "support.hpp"

using namespace child;

TEST_SUITE("dataset_io") {
  TEST_CASE("export then import is bit-exact") {
    const auto dir = testing::scratch_dir("dataset_roundtrip");
    const GroundTruthSeries s = sample_series(build_process(preset_spec("F")), 12, 8, 3);
    export_dataset(s, dir / "d.bin");
    const GroundTruthSeries r = import_dataset(dir / "d.bin");
    CHECK(r.x_data() == s.x_data());
    CHECK(r.z_data() == s.z_data());
    CHECK(r.mask_data() == s.mask_data());
    CHECK(r.fingerprint() == s.fingerprint());
    CHECK(r.spec().to_json() == s.spec().to_json());
    const Archive a = read_archive(dir / "d.bin");
    CHECK(a.has_array("x"));
    CHECK(a.has_array("z"));
    CHECK(a.has_array("mask"));
    CHECK(a.array("x").shape == std::vector<std::uint64_t>{12, 8, 4});
    CHECK(a.array("z").shape == std::vector<std::uint64_t>{12, 8, 3, 4});
    CHECK(a.metadata.at("format_version") == kDatasetFormatVersion);
  }

  TEST_CASE("mask marks the valid entries of ragged layers") {
    const GroundTruthSeries s = sample_series(build_process(preset_spec("A")), 2, 4, 1);
    const std::vector<double> m = s.mask_data();
    REQUIRE(m.size() == 8);
    CHECK(m == std::vector<double>{1, 1, 1, 1, 1, 0, 0, 0});
  }

  TEST_CASE("tampered metadata or payload is an integrity error") {
    const auto dir = testing::scratch_dir("dataset_tamper");
    const GroundTruthSeries s = sample_series(build_process(preset_spec("A")), 4, 10, 3);
    export_dataset(s, dir / "d.bin");

    Archive a = read_archive(dir / "d.bin");
    a.metadata["seed"] = 4;
    write_archive(dir / "meta.bin", a);
    CHECK_THROWS_AS(import_dataset(dir / "meta.bin"), IntegrityError);

    a = read_archive(dir / "d.bin");
    a.metadata["format_version"] = "child-dataset/0";
    write_archive(dir / "version.bin", a);
    CHECK_THROWS_AS(import_dataset(dir / "version.bin"), IntegrityError);

    a = read_archive(dir / "d.bin");
    for (auto& arr : a.arrays) {
      if (arr.name == "x") arr.data[5] += 1e-9;
    }
    write_archive(dir / "payload.bin", a);
    CHECK_THROWS_AS(import_dataset(dir / "payload.bin"), IntegrityError);

    {
      std::ofstream junk(dir / "junk.bin", std::ios::binary);
      junk << "not an archive";
    }
    CHECK_THROWS_AS(import_dataset(dir / "junk.bin"), IntegrityError);
    CHECK_THROWS_AS(import_dataset(dir / "missing.bin"), DataError);
  }

  TEST_CASE("reloaded Dataset A latents give MCC(z, z) = 1") {
    const auto dir = testing::scratch_dir("dataset_mcc");
    const GroundTruthSeries s = sample_series(build_process(preset_spec("A")), 50, 10, 3);
    export_dataset(s, dir / "a.bin");
    const GroundTruthSeries r = import_dataset(dir / "a.bin");
    std::vector<Mat> layers;
    for (int l = 1; l <= 2; ++l) layers.push_back(r.latent_rows(l, 0, r.num_sequences()));
    const EvalReport rep = compute_mcc_per_layer(layers, layers);
    CHECK(rep.mcc_overall == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("archive helpers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(canonical_json(nlohmann::json{{"b", 1}, {"a", 2}}) == R"({"a":2,"b":1})");
  }
}
