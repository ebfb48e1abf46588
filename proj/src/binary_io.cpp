// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/binary_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mfr/error.hpp"

namespace mfr::io {

void ByteWriter::bytes(std::span<const std::uint8_t> b) {
  buf_.insert(buf_.end(), b.begin(), b.end());
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::f64s(std::span<const double> values) {
  for (double v : values) f64(v);
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  if (n > remaining()) {
    throw IoError("truncated input: wanted " + std::to_string(n) +
                  " bytes at offset " + std::to_string(pos_));
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::u32() {
  auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  std::uint32_t n = u32();
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::vector<double> ByteReader::f64s(std::size_t n) {
  if (n > remaining() / 8) throw IoError("truncated input: float block too long");
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

}  // namespace mfr::io
