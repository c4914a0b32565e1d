#include "child/dataset_io.hpp"

#include "child/archive.hpp"

namespace child {

void export_dataset(const GroundTruthSeries& series, const std::filesystem::path& path) {
  const auto N = static_cast<std::uint64_t>(series.num_sequences());
  const auto T = static_cast<std::uint64_t>(series.seq_length());
  const auto L = static_cast<std::uint64_t>(series.num_layers());
  const auto nmax = static_cast<std::uint64_t>(series.max_dim());
  Archive archive;
  archive.arrays.push_back({"x", {N, T, static_cast<std::uint64_t>(series.obs_dim())}, series.x_data()});
  archive.arrays.push_back({"z", {N, T, L, nmax}, series.z_data()});
  archive.arrays.push_back({"mask", {L, nmax}, series.mask_data()});
  archive.metadata = {{"format_version", kDatasetFormatVersion},
                      {"spec", series.spec().to_json()},
                      {"seed", series.seed()},
                      {"fingerprint", series.fingerprint()},
                      {"num_sequences", series.num_sequences()},
                      {"seq_length", series.seq_length()},
                      {"payload_sha256", payload_sha256(archive.arrays)}};
  write_archive(path, archive);
}

GroundTruthSeries import_dataset(const std::filesystem::path& path) {
  Archive archive = read_archive(path);
  const auto& meta = archive.metadata;
  try {
    if (!meta.is_object() || !meta.contains("format_version")) throw IntegrityError("dataset metadata lacks format_version");
    if (meta.at("format_version") != kDatasetFormatVersion) {
      throw IntegrityError("dataset version mismatch: file has " + meta.at("format_version").dump() + ", expected " +
                           kDatasetFormatVersion);
    }
    ProcessSpec spec;
    try {
      spec = ProcessSpec::from_json(meta.at("spec"));
    } catch (const ConfigError& e) {
      throw IntegrityError(std::string("dataset spec block is invalid: ") + e.what());
    }
    const auto seed = meta.at("seed").get<std::uint64_t>();
    const std::string stored = meta.at("fingerprint").get<std::string>();
    if (process_fingerprint(spec, seed) != stored) {
      throw IntegrityError("fingerprint mismatch: metadata does not match its recorded fingerprint");
    }
    if (payload_sha256(archive.arrays) != meta.at("payload_sha256").get<std::string>()) {
      throw IntegrityError("payload hash mismatch: array data was modified");
    }
    const int N = meta.at("num_sequences").get<int>();
    const int T = meta.at("seq_length").get<int>();
    GroundTruthSeries series(spec, seed, N, T);
    const NamedArray& x = archive.array("x");
    const NamedArray& z = archive.array("z");
    if (x.data.size() != series.x_data().size() || z.data.size() != series.z_data().size()) {
      throw IntegrityError("array shapes do not match the recorded spec");
    }
    series.x_data() = x.data;
    series.z_data() = z.data;
    return series;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("dataset metadata is malformed: ") + e.what());
  }
}

}  // namespace child
