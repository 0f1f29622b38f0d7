#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "understory/error.hpp"

namespace understory::bin {

// Bytes 01 02 03 04 when read back in file order identify little-endian payloads.
inline constexpr std::uint32_t kEndianTag = 0x04030201u;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void tag(std::string_view magic) { bytes(magic.data(), magic.size()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void crc() { u32(checksum(buf_.data(), buf_.size())); }

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

  static std::uint32_t checksum(const std::uint8_t* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    while (n > 0) {
      const auto step = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
      c = crc32(c, p, step);
      p += step;
      n -= step;
    }
    return static_cast<std::uint32_t>(c);
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::string what) : data_(data), what_(std::move(what)) {}

  // Magic, version and trailing checksum, checked in that order so each
  // failure is reported as its own error kind.
  std::uint16_t open(std::string_view magic, std::uint16_t max_version) {
    require(data_.size() >= magic.size() && std::memcmp(data_.data(), magic.data(), magic.size()) == 0,
            ErrorKind::Format, what_ + ": not a " + std::string(magic) + " file");
    pos_ = magic.size();
    require(data_.size() >= magic.size() + 2 + 4, ErrorKind::Checksum, what_ + ": truncated (checksum missing)");
    const std::uint16_t version = u16();
    require(version >= 1 && version <= max_version, ErrorKind::Version,
            what_ + ": unsupported version " + std::to_string(version));
    const std::size_t body = data_.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(data_[body + static_cast<std::size_t>(i)]) << (8 * i);
    require(Writer::checksum(data_.data(), body) == stored, ErrorKind::Checksum, what_ + ": checksum mismatch");
    end_ = body;
    return version;
  }

  void need(std::size_t n) const {
    require(pos_ + n <= end_, ErrorKind::Format, what_ + ": record runs past the end of the payload");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_endian_tag() {
    require(u32() == kEndianTag, ErrorKind::Format, what_ + ": unexpected endianness tag");
  }
  bool at_end() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& data_;
  std::string what_;
  std::size_t pos_ = 0;
  std::size_t end_ = SIZE_MAX;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace understory::bin
