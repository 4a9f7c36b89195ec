#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ralign {

/// Lowercase hex SHA-256 of `data` (64 chars).
std::string sha256_hex(std::string_view data);

/// Raw 32-byte SHA-256.
std::array<std::uint8_t, 32> sha256(std::string_view data);

/// SHA-256 of a file's bytes. Throws ralign::Error if it cannot be read.
std::string file_sha256_hex(const std::filesystem::path& path);

bool is_hex64(std::string_view s) noexcept;

}  // namespace ralign
