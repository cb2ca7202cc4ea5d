#pragma once

#include <string>
#include <string_view>

namespace cef {

/// Digest algorithm used for prompt manifests, cache keys, and run ids.
/// Recorded in manifests so stored artifacts are self-describing.
inline constexpr const char* kDigestAlgorithm = "sha256";

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace cef
