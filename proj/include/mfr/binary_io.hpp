// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers shared by the checkpoint and dataset formats.

#ifndef MFR_BINARY_IO_HPP_
#define MFR_BINARY_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfr::io {

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);  // u32 length, then bytes
  void f64s(std::span<const double> values);
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reads from a byte span; IoError on any read past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  std::vector<double> f64s(std::size_t n);
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes atomically via a temporary sibling file.
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> data);

}  // namespace mfr::io

#endif  // MFR_BINARY_IO_HPP_
