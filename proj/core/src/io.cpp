#include "vildistill/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vildistill::io {

namespace {

uint64_t bswap64(uint64_t x) {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_bswap64(x);
#else
  x = ((x & 0x00000000ffffffffULL) << 32) | (x >> 32);
  x = ((x & 0x0000ffff0000ffffULL) << 16) | ((x >> 16) & 0x0000ffff0000ffffULL);
  x = ((x & 0x00ff00ff00ff00ffULL) << 8) | ((x >> 8) & 0x00ff00ff00ff00ffULL);
  return x;
#endif
}

template <typename T>
void write_raw(const std::filesystem::path& file, const T* data, size_t count) {
  static_assert(sizeof(T) == 8);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingArtifact("cannot open for writing: " + file.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
  } else {
    for (size_t i = 0; i < count; ++i) {
      uint64_t bits;
      std::memcpy(&bits, &data[i], 8);
      bits = bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), 8);
    }
  }
  if (!out) throw MissingArtifact("short write: " + file.string());
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& file, size_t expected_count) {
  static_assert(sizeof(T) == 8);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open: " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected_count * 8) {
    throw MissingArtifact(file.string() + ": expected " + std::to_string(expected_count) +
                          " 8-byte values, file holds " + std::to_string(bytes) + " bytes");
  }
  std::vector<T> data(expected_count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw MissingArtifact("short read: " + file.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : data) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      bits = bswap64(bits);
      std::memcpy(&v, &bits, 8);
    }
  }
  return data;
}

}  // namespace

void write_manifest(const std::filesystem::path& file, const Manifest& kv) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw MissingArtifact("cannot open for writing: " + file.string());
  for (const auto& [k, v] : kv) out << k << ' ' << v << '\n';
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifact("manifest not found: " + file.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) {
      throw MissingArtifact(file.string() + ": malformed manifest line '" + line + "'");
    }
    m[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return m;
}

const std::string& manifest_get(const Manifest& m, const std::string& key,
                                const std::filesystem::path& origin) {
  const auto it = m.find(key);
  if (it == m.end()) {
    throw MissingArtifact(origin.string() + ": manifest key '" + key + "' missing");
  }
  return it->second;
}

int64_t manifest_get_int(const Manifest& m, const std::string& key,
                         const std::filesystem::path& origin) {
  const std::string& s = manifest_get(m, key, origin);
  try {
    return std::stoll(s);
  } catch (const std::exception&) {
    throw MissingArtifact(origin.string() + ": manifest key '" + key + "' not an integer: " + s);
  }
}

void write_f64(const std::filesystem::path& file, const double* data, size_t count) {
  write_raw(file, data, count);
}

std::vector<double> read_f64(const std::filesystem::path& file, size_t expected_count) {
  return read_raw<double>(file, expected_count);
}

void write_i64(const std::filesystem::path& file, const int64_t* data, size_t count) {
  write_raw(file, data, count);
}

std::vector<int64_t> read_i64(const std::filesystem::path& file, size_t expected_count) {
  return read_raw<int64_t>(file, expected_count);
}

void write_matrix(const std::filesystem::path& file, const Mat& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_f64(file, rm.data(), static_cast<size_t>(rm.size()));
}

Mat read_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols) {
  const auto data = read_f64(file, static_cast<size_t>(rows) * static_cast<size_t>(cols));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  std::memcpy(rm.data(), data.data(), data.size() * sizeof(double));
  return rm;
}

void write_vector(const std::filesystem::path& file, const Vec& v) {
  write_f64(file, v.data(), static_cast<size_t>(v.size()));
}

Vec read_vector(const std::filesystem::path& file, Eigen::Index size) {
  const auto data = read_f64(file, static_cast<size_t>(size));
  Vec v(size);
  std::memcpy(v.data(), data.data(), data.size() * sizeof(double));
  return v;
}

}  // namespace vildistill::io
