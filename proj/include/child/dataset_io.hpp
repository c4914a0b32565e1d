#pragma once

#include <filesystem>

#include "child/process.hpp"

namespace child {

inline constexpr const char* kDatasetFormatVersion = "child-dataset/1";

/// Writes arrays `x` [N,T,n_obs], `z` [N,T,L,n_max] (layer axis bottom-first)
/// and `mask` [L,n_max], plus metadata {spec, seed, fingerprint, format_version}.
void export_dataset(const GroundTruthSeries& series, const std::filesystem::path& path);

/// Verifies format version, fingerprint and payload hash.
/// Throws IntegrityError on any mismatch.
GroundTruthSeries import_dataset(const std::filesystem::path& path);

}  // namespace child
