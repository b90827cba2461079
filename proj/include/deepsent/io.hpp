#pragma once

// Byte-level helpers shared by the checkpoint and dataset formats, plus
// atomic file output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepsent/numkernel.hpp"

namespace deepsent {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Fixed-precision decimal text ("%.{digits}f"), used in SVG and reports.
std::string format_fixed(double value, int digits);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Little-endian writer into an in-memory buffer.
class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void bytes(std::string_view s) { buf_.append(s); }
  /// u32 length followed by the bytes.
  void str(std::string_view s);
  /// u64 rows, u64 cols, then row-major doubles.
  void matrix(const Matrix& m);

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Bounds-checked little-endian reader. Running past the end throws
/// `Err` with the supplied context.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string_view bytes(std::size_t n);
  std::string str();
  Matrix matrix();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Reads a whole file; throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Collects named outputs and writes them only when commit() is called, so
/// a failing command leaves nothing behind.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string contents) {
    files_.emplace_back(name, std::move(contents));
  }
  const std::filesystem::path& dir() const { return dir_; }
  void commit() const;

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace deepsent
