#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vildistill/common.hpp"

namespace vildistill::io {

// Shared on-disk convention for checkpoints, prediction banks, and dataset
// exports: a directory holding a plain-text `manifest.txt` (one `key value`
// pair per line) plus one flat binary array per tensor, little-endian
// 64-bit floats (or 64-bit signed ints for label arrays).

using Manifest = std::map<std::string, std::string>;

void write_manifest(const std::filesystem::path& file, const Manifest& kv);
Manifest read_manifest(const std::filesystem::path& file);

/// Fetches a manifest value, throwing MissingArtifact when absent.
const std::string& manifest_get(const Manifest& m, const std::string& key,
                                const std::filesystem::path& origin);
int64_t manifest_get_int(const Manifest& m, const std::string& key,
                         const std::filesystem::path& origin);

void write_f64(const std::filesystem::path& file, const double* data, size_t count);
std::vector<double> read_f64(const std::filesystem::path& file, size_t expected_count);

void write_i64(const std::filesystem::path& file, const int64_t* data, size_t count);
std::vector<int64_t> read_i64(const std::filesystem::path& file, size_t expected_count);

/// Matrices are stored row-major (sample-major) regardless of Eigen's
/// internal layout.
void write_matrix(const std::filesystem::path& file, const Mat& m);
Mat read_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols);

void write_vector(const std::filesystem::path& file, const Vec& v);
Vec read_vector(const std::filesystem::path& file, Eigen::Index size);

}  // namespace vildistill::io
