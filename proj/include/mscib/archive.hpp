#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <Eigen/Core>

namespace mscib {

/// Named tensors, strings and integers in one binary file.
///
/// Layout (all integers little-endian):
///
///     magic      8 bytes  "MSCIBCK1"
///     version    u32      1
///     count      u32      number of records
///     record*    kind u8 (1 tensor, 2 string, 3 integer), name_len u32, name bytes, then
///                  tensor:  rows u64, cols u64, rows*cols IEEE-754 f64 in row-major order
///                  string:  len u64, bytes
///                  integer: i64
///     checksum   u64      FNV-1a over every preceding byte
///
/// Doubles are stored by bit pattern, so a save/load round trip is exact.
struct Archive {
  std::map<std::string, Eigen::MatrixXd> tensors;
  std::map<std::string, std::string> strings;
  std::map<std::string, std::int64_t> integers;

  const Eigen::MatrixXd& tensor(const std::string& name) const;
  const std::string& string(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;

  std::string serialize() const;
  /// Throws FormatError carrying the byte offset of the first problem.
  static Archive deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);
};

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace mscib
