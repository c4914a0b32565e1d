#pragma once

// Single-file container for named float64 arrays plus a JSON metadata block.
//
// Layout (all integers little-endian):
//   8 bytes   magic "CHILDARC"
//   u32       container version (1)
//   u64       metadata length, then that many bytes of UTF-8 JSON
//   u32       array count
//   per array: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              then prod(dims) IEEE-754 float64 values in row-major order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace child {

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

/// Throws DataError when the file cannot be written.
void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws DataError for missing files, IntegrityError for malformed content.
Archive read_archive(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
/// SHA-256 of the raw bytes of every array, in order, names included.
std::string payload_sha256(const std::vector<NamedArray>& arrays);
/// Compact dump with sorted keys; stable across runs.
std::string canonical_json(const nlohmann::json& j);

}  // namespace child
