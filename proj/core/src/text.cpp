#include "bilevel/text.hpp"

#include <cctype>

namespace bilevel {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex_digest(std::string_view data) {
  static const char* kHex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

int count_tokens(std::string_view text) {
  int count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c);
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::string truncate_tokens(std::string_view text, int max_tokens) {
  if (max_tokens <= 0) return {};
  int count = 0;
  bool in_token = false;
  std::size_t cut = text.size();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(text[i]));
    if (!space && !in_token) {
      if (count == max_tokens) {
        cut = i;
        break;
      }
      ++count;
    }
    in_token = !space;
  }
  std::string_view kept = text.substr(0, cut);
  while (!kept.empty() && std::isspace(static_cast<unsigned char>(kept.back()))) {
    kept.remove_suffix(1);
  }
  return std::string(kept);
}

}  // namespace bilevel
