#pragma once

#include <string>
#include <string_view>

namespace coh {

inline constexpr std::string_view kToolVersion = "coh 1.0.0";

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace coh
