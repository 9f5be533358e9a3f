#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "graphprobe/errors.hpp"

namespace graphprobe::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw DataError("cannot open " + path.string() + " for writing");
  }

  void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f32(float v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void floats(const float* data, std::size_t count) { bytes(data, count * sizeof(float)); }

  void finish() {
    out_.flush();
    if (!out_) throw DataError("failed writing " + path_.string());
  }

 private:
  void bytes(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw DataError("cannot open " + path.string());
  }

  void expect_magic(std::string_view tag) {
    std::array<char, 8> buf{};
    bytes(buf.data(), tag.size());
    if (std::string_view(buf.data(), tag.size()) != tag) {
      throw DataError(path_.string() + ": bad magic, expected '" + std::string(tag) + "'");
    }
  }
  std::uint32_t u32() { return value<std::uint32_t>(); }
  std::uint64_t u64() { return value<std::uint64_t>(); }
  float f32() { return value<float>(); }
  double f64() { return value<double>(); }
  void floats(float* data, std::size_t count) { bytes(data, count * sizeof(float)); }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw DataError(path_.string() + ": trailing bytes after payload");
    }
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  template <typename V>
  V value() {
    V v;
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) {
      throw DataError(path_.string() + ": truncated file");
    }
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace graphprobe::detail
