#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mal2gcn {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

// 64-bit FNV-1a; stable across platforms, used for seed mixing.
std::uint64_t fnv1a64(std::string_view bytes);

// splitmix64 finalizer.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace mal2gcn
