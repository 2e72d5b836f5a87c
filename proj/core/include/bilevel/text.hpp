#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bilevel {

/// Splits text into lowercased alphanumeric runs. Punctuation and whitespace
/// separate tokens; everything else is dropped.
std::vector<std::string> tokenize(std::string_view text);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view data);

/// 16-hex-digit digest of `data` (FNV-1a based). Stable across platforms.
std::string hex_digest(std::string_view data);

/// Number of whitespace-delimited tokens.
int count_tokens(std::string_view text);

/// First `max_tokens` whitespace-delimited tokens, original spacing kept.
/// Never cuts inside a token.
std::string truncate_tokens(std::string_view text, int max_tokens);

}  // namespace bilevel
