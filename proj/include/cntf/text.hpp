#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cntf {

using Tokens = std::vector<std::string>;

struct TokenSpan {
  std::string text;  // lowercased surface
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last byte in the source string
};

// Lowercases and splits on whitespace; every ASCII punctuation character
// becomes its own token. Bytes >= 0x80 are treated as word characters.
Tokens tokenize(std::string_view text);
std::vector<TokenSpan> tokenize_with_offsets(std::string_view text);

bool is_punctuation_token(std::string_view token);
std::string to_lower(std::string_view text);
std::string join(const Tokens& tokens, std::string_view sep = " ");

}  // namespace cntf
