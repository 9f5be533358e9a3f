#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace graphprobe::cli {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Component seed: the first 8 bytes (big-endian) of
/// SHA-256("<global>:<component>").
std::uint64_t derive_seed(std::uint64_t global, std::string_view component);

}  // namespace graphprobe::cli
