#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace empathy {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents. Throws DataError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// First 8 bytes of SHA-256 as an integer; used to derive per-stage seeds.
std::uint64_t hash64(std::string_view bytes);

}  // namespace empathy
